#pragma once

#include <cstdint>
#include <vector>

#include "focusmix/app/model.hpp"

namespace focusmix::app {

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

struct RecordAlignment {
  std::vector<std::size_t> fact_of_expert;  // greedy match per expert
  std::vector<double> iou;                  // IoU of each matched pair
  bool bijective = false;                   // K == F, every matched pair overlaps, and each expert's match is its strict best
};

// Greedy matching on the K x F IoU table: repeatedly take the highest
// remaining pair (ties: lower expert, then lower fact) and retire both sides.
RecordAlignment align_masks(const std::vector<std::vector<std::uint8_t>>& expert_masks,
                            const std::vector<std::vector<std::uint8_t>>& fact_spans);

struct AlignmentSummary {
  double mean_iou = 0.0;            // over experts; an unmatched expert counts 0
  double bijective_fraction = 0.0;  // over records
  std::size_t records = 0;
};

// Thresholded selector masks against the records' gold guides.
AlignmentSummary expert_fact_alignment(const Model& model, const std::vector<corpus::Record>& records);

}  // namespace focusmix::app
