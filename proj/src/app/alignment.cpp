#include "focusmix/app/alignment.hpp"

#include "focusmix/app/parallel.hpp"
#include "focusmix/error.hpp"

namespace focusmix::app {

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw DimensionError("mask lengths differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    inter += (a[t] && b[t]);
    uni += (a[t] || b[t]);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

RecordAlignment align_masks(const std::vector<std::vector<std::uint8_t>>& expert_masks,
                            const std::vector<std::vector<std::uint8_t>>& fact_spans) {
  const std::size_t K = expert_masks.size(), F = fact_spans.size();
  std::vector<std::vector<double>> table(K, std::vector<double>(F));
  for (std::size_t z = 0; z < K; ++z)
    for (std::size_t f = 0; f < F; ++f) table[z][f] = mask_iou(expert_masks[z], fact_spans[f]);

  RecordAlignment out;
  out.fact_of_expert.assign(K, F);
  out.iou.assign(K, 0.0);
  std::vector<bool> expert_used(K, false), fact_used(F, false);
  for (std::size_t round = 0; round < std::min(K, F); ++round) {
    std::size_t bz = K, bf = F;
    double best = -1.0;
    for (std::size_t z = 0; z < K; ++z) {
      if (expert_used[z]) continue;
      for (std::size_t f = 0; f < F; ++f) {
        if (fact_used[f]) continue;
        if (table[z][f] > best) {
          best = table[z][f];
          bz = z;
          bf = f;
        }
      }
    }
    expert_used[bz] = fact_used[bf] = true;
    out.fact_of_expert[bz] = bf;
    out.iou[bz] = best;
  }
  // each expert must also prefer its matched fact over every other one
  out.bijective = K == F;
  for (std::size_t z = 0; z < K && out.bijective; ++z) {
    out.bijective = out.iou[z] > 0.0;
    for (std::size_t f = 0; f < F; ++f)
      if (f != out.fact_of_expert[z] && table[z][f] >= out.iou[z]) out.bijective = false;
  }
  return out;
}

AlignmentSummary expert_fact_alignment(const Model& model, const std::vector<corpus::Record>& records) {
  if (!model.has_selector()) throw ConfigError("expert alignment needs a selector-gen model");
  std::vector<RecordAlignment> per(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto& r = records[i];
    if (!r.focus_guides) throw InputError("record " + std::to_string(i) + " has no focus guides");
    std::vector<std::vector<std::uint8_t>> masks, facts;
    for (auto& m : selector::infer_all_focus(model.store, model.selector_cfg(), model.vocab.encode(r.source)))
      masks.push_back(std::move(m.bits));
    for (const auto& g : *r.focus_guides) facts.push_back(g.bits);
    per[i] = align_masks(masks, facts);
  });
  AlignmentSummary s;
  s.records = records.size();
  double iou_sum = 0;
  std::size_t pairs = 0, bij = 0;
  for (const auto& a : per) {
    for (double v : a.iou) iou_sum += v;
    pairs += a.iou.size();
    bij += a.bijective;
  }
  s.mean_iou = pairs ? iou_sum / static_cast<double>(pairs) : 0.0;
  s.bijective_fraction = records.empty() ? 0.0 : static_cast<double>(bij) / static_cast<double>(records.size());
  return s;
}

}  // namespace focusmix::app
