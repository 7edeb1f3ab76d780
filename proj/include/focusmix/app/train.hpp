#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "focusmix/app/config.hpp"
#include "focusmix/app/model.hpp"

namespace focusmix::app {

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::uint64_t steps = 0;
  double selector_loss = 0.0;   // NaN for models without a selector
  double generator_loss = 0.0;  // mean chosen loss for the mixture decoder
  double valid_oracle_bleu4 = 0.0;  // NaN without validation data
};

struct TrainOutcome {
  Model best;
  std::size_t best_epoch = 0;  // 0: the initial model
  std::uint64_t best_step = 0;
  std::vector<EpochMetrics> curve;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Training pairs are (record, target k) with the k-th guide. Per batch:
// selector-gen runs a hard-EM selector step and then a teacher-forced
// generator step on the gold guides; plain-gen trains the generator on
// all-zero masks; mixture-decoder runs its hard-EM step. Pairs are reshuffled
// every epoch from the seed. After each epoch the validation set is decoded
// with `valid_decode` and the epoch with the best oracle BLEU-4 is kept
// (earliest on ties; the last epoch when there is no validation data).
// Records missing guides get them from `rule`.
TrainOutcome train_model(Model model, std::vector<corpus::Record> train,
                         const std::vector<corpus::Record>& valid, const TrainConfig& cfg,
                         const DecodeConfig& valid_decode, corpus::GuideRule rule,
                         const EpochCallback& on_epoch = {});

// "epoch,steps,selector_loss,generator_loss,valid_oracle_bleu4", round-trip precision.
std::string metrics_csv(const std::vector<EpochMetrics>& curve);

// Vocabulary over the training records only.
corpus::Vocabulary training_vocab(const std::vector<corpus::Record>& train, std::size_t max_size);

}  // namespace focusmix::app
