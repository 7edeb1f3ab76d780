#pragma once

#include <cstdint>
#include <vector>

#include "focusmix/corpus/record.hpp"

namespace focusmix::corpus {

// Multi-fact records: source "e r v ; e r v ; ..." with F facts, target k
// "which r_k e_k ? v_k", guide k marking fact k's three source tokens.
struct SyntheticSpec {
  std::size_t num_facts = 3;
  std::size_t num_entities = 40;
  std::size_t num_relations = 12;
  std::size_t num_values = 40;
  std::size_t num_records = 2000;
  std::uint64_t seed = 1;

  // ConfigError unless F >= 2 and every vocabulary size >= F.
  void validate() const;
};

// Per record, draws F distinct entities, then F distinct relations, then F
// distinct values, each by a partial Fisher-Yates shuffle on numerics::Rng
// (mt19937_64 seeded with spec.seed). Tokens are "e<i>", "r<i>", "v<i>".
std::vector<Record> gen_synthetic(const SyntheticSpec& spec);

}  // namespace focusmix::corpus
