#include "focusmix/app/train.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "focusmix/app/generate.hpp"
#include "focusmix/decoding/decoding.hpp"
#include "focusmix/error.hpp"

namespace focusmix::app {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Pair {
  std::size_t record;
  std::size_t target;
};

double valid_score(const Model& model, const std::vector<corpus::Record>& valid, const DecodeConfig& decode) {
  if (valid.empty()) return kNaN;
  const auto outputs = generate_all(model, decode, valid);
  const auto sets = build_sets(outputs, model.vocab, valid, parse_ranking(decode.ranking));
  return eval::oracle_metric(sets, eval::Metric::kBleu4);
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

corpus::Vocabulary training_vocab(const std::vector<corpus::Record>& train, std::size_t max_size) {
  return corpus::build_vocab(train, max_size);
}

TrainOutcome train_model(Model model, std::vector<corpus::Record> train,
                         const std::vector<corpus::Record>& valid, const TrainConfig& cfg,
                         const DecodeConfig& valid_decode, corpus::GuideRule rule,
                         const EpochCallback& on_epoch) {
  check_compatible(model.cfg, valid_decode);
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  const bool sel = model.has_selector();
  const bool mixdec = model.is_mixture_decoder();

  for (auto& r : train) {
    r.validate();
    if (sel) corpus::ensure_focus_guides(r, rule);
  }

  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t k = 0; k < train[i].targets.size(); ++k) pairs.push_back({i, k});
  std::vector<std::vector<int>> source_ids(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) source_ids[i] = model.vocab.encode(train[i].source);

  const numerics::AdamConfig adam{.lr = cfg.lr};
  const auto scfg = model.selector_cfg();

  TrainOutcome out;
  out.best = model;
  double best_score = -1.0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    numerics::Rng order = numerics::Rng::derive(cfg.seed, epoch);
    order.shuffle(pairs);
    double sel_sum = 0, gen_sum = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < pairs.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(pairs.size(), b + cfg.batch_size);
      if (mixdec) {
        std::vector<decoding::MixtureExample> batch;
        for (std::size_t p = b; p < e; ++p)
          batch.push_back({source_ids[pairs[p].record],
                           model.vocab.encode(train[pairs[p].record].targets[pairs[p].target])});
        gen_sum += decoding::mixture_decoder_train_step(model.store, model.cfg.K,
                                                        std::span<const decoding::MixtureExample>(batch), adam)
                       .mean_loss;
      } else {
        std::vector<generator::GeneratorExample> gbatch;
        std::vector<selector::SelectorExample> sbatch;
        for (std::size_t p = b; p < e; ++p) {
          const auto& rec = train[pairs[p].record];
          const auto& ids = source_ids[pairs[p].record];
          std::vector<std::uint8_t> mask(ids.size(), 0);
          if (sel) {
            mask = (*rec.focus_guides)[pairs[p].target].bits;
            sbatch.push_back({ids, mask});
          }
          gbatch.push_back({ids, std::move(mask), model.vocab.encode(rec.targets[pairs[p].target])});
        }
        if (sel)
          sel_sum += selector::selector_train_step(model.store, scfg,
                                                   std::span<const selector::SelectorExample>(sbatch), adam)
                         .mean_loss;
        gen_sum += generator::generator_train_step(model.store,
                                                   std::span<const generator::GeneratorExample>(gbatch), adam);
      }
      ++batches;
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.steps = step;
    m.selector_loss = sel && batches ? sel_sum / static_cast<double>(batches) : kNaN;
    m.generator_loss = batches ? gen_sum / static_cast<double>(batches) : kNaN;
    m.valid_oracle_bleu4 = valid_score(model, valid, valid_decode);
    out.curve.push_back(m);
    if (on_epoch) on_epoch(m);

    const bool better = valid.empty() || m.valid_oracle_bleu4 > best_score;
    if (better) {
      best_score = valid.empty() ? best_score : m.valid_oracle_bleu4;
      out.best = model;
      out.best_epoch = epoch;
      out.best_step = step;
    }
  }
  return out;
}

std::string metrics_csv(const std::vector<EpochMetrics>& curve) {
  std::string out = "epoch,steps,selector_loss,generator_loss,valid_oracle_bleu4\n";
  for (const auto& m : curve)
    out += std::to_string(m.epoch) + "," + std::to_string(m.steps) + "," + num(m.selector_loss) + "," +
           num(m.generator_loss) + "," + num(m.valid_oracle_bleu4) + "\n";
  return out;
}

}  // namespace focusmix::app
