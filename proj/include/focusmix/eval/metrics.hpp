#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "focusmix/corpus/record.hpp"

namespace focusmix::eval {

using corpus::Tokens;

// Corpus BLEU-4: clipped n-gram counts summed over the corpus, geometric mean
// of the four precisions, brevity penalty exp(1 - r/c) when c < r. No
// smoothing. InputError on an empty corpus or mismatched lengths.
double bleu4_corpus(std::span<const Tokens> hyps, std::span<const Tokens> refs);

// Sentence BLEU-4 with add-one smoothing of matches and totals for n >= 2.
// Empty hypothesis scores 0.
double bleu4_sentence(const Tokens& hyp, const Tokens& ref);

// Bigram-overlap F1 (clipped counts); 0 when either side has fewer than two tokens.
double rouge2_f1(const Tokens& hyp, const Tokens& ref);
// Mean of per-example F1.
double rouge2_corpus(std::span<const Tokens> hyps, std::span<const Tokens> refs);

enum class Metric { kBleu4, kRouge2 };

std::string metric_name(Metric m);
Metric parse_metric(const std::string& name);
double corpus_metric(Metric m, std::span<const Tokens> hyps, std::span<const Tokens> refs);
double sentence_metric(Metric m, const Tokens& hyp, const Tokens& ref);

// K hypotheses of one source in rank order, with one reference.
struct HypothesisSet {
  std::string source_id;
  std::vector<Tokens> hyps;
  std::vector<double> scores;  // non-increasing
  Tokens reference;
};

enum class Ranking { kLengthNormalized, kRawSum };

struct ScoredHypothesis {
  Tokens tokens;
  double log_prob = 0.0;
};

// Ranks by log_prob / max(1, |tokens|) (or raw log_prob), descending; ties
// keep the input order.
HypothesisSet make_hypothesis_set(std::string source_id, std::vector<ScoredHypothesis> hyps,
                                  Tokens reference, Ranking ranking = Ranking::kLengthNormalized);

double top1_metric(std::span<const HypothesisSet> sets, Metric m);
// Per set, the index of the best sentence score against the reference (ties to the lower rank).
std::vector<std::size_t> oracle_picks(std::span<const HypothesisSet> sets, Metric m);
double oracle_metric(std::span<const HypothesisSet> sets, Metric m);
// Mean sentence metric over ordered pairs (i, j), i != j, pooled over sets.
// nullopt when some set has fewer than two hypotheses.
std::optional<double> pairwise_metric(std::span<const HypothesisSet> sets, Metric m);

struct EvalReport {
  Metric metric = Metric::kBleu4;
  std::size_t K = 0;
  double top1 = 0.0;
  double oracle = 0.0;
  std::optional<double> pairwise;
  std::size_t n_examples = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// InputError when the sets are empty or disagree on K.
EvalReport evaluate(std::span<const HypothesisSet> sets, Metric m);

// "metric,K,top1,oracle,pairwise,n_examples"; values in shortest round-trip
// form, missing pairwise as an empty field.
std::string to_csv(std::span<const EvalReport> reports);
std::vector<EvalReport> from_csv(const std::string& text);
std::string to_markdown(std::span<const EvalReport> reports, const std::string& label = "");

}  // namespace focusmix::eval
