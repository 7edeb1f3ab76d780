#include "focusmix/corpus/synthetic.hpp"

#include <numeric>
#include <string>

#include "focusmix/error.hpp"
#include "focusmix/numerics/rng.hpp"

namespace focusmix::corpus {
namespace {

// First k entries of a partial Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> draw_distinct(numerics::Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
  pool.resize(k);
  return pool;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_facts < 2) throw ConfigError("synthetic spec: num_facts must be >= 2");
  if (num_entities < num_facts || num_relations < num_facts || num_values < num_facts)
    throw ConfigError("synthetic spec: entity/relation/value vocabulary sizes must be >= num_facts");
}

std::vector<Record> gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  numerics::Rng rng(spec.seed);
  const std::size_t F = spec.num_facts;
  std::vector<Record> out;
  out.reserve(spec.num_records);
  for (std::size_t n = 0; n < spec.num_records; ++n) {
    const auto ents = draw_distinct(rng, spec.num_entities, F);
    const auto rels = draw_distinct(rng, spec.num_relations, F);
    const auto vals = draw_distinct(rng, spec.num_values, F);
    Record r;
    std::vector<FocusGuide> guides(F);
    const std::size_t S = 4 * F - 1;
    for (std::size_t k = 0; k < F; ++k) {
      if (k > 0) r.source.push_back(";");
      const std::string e = "e" + std::to_string(ents[k]);
      const std::string rel = "r" + std::to_string(rels[k]);
      const std::string v = "v" + std::to_string(vals[k]);
      r.source.insert(r.source.end(), {e, rel, v});
      r.targets.push_back({"which", rel, e, "?", v});
      guides[k].bits.assign(S, 0);
      for (std::size_t t = 4 * k; t < 4 * k + 3; ++t) guides[k].bits[t] = 1;
    }
    r.focus_guides = std::move(guides);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace focusmix::corpus
