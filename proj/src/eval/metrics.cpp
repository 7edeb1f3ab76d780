#include "focusmix/eval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "focusmix/error.hpp"

namespace focusmix::eval {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& s, std::size_t n) {
  NgramCounts out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    ++out[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                   s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

// (clipped matches, hypothesis n-gram total)
std::pair<std::size_t, std::size_t> clipped(const Tokens& hyp, const Tokens& ref, std::size_t n) {
  const auto h = ngrams(hyp, n);
  const auto r = ngrams(ref, n);
  std::size_t match = 0, total = 0;
  for (const auto& [g, c] : h) {
    total += c;
    if (auto it = r.find(g); it != r.end()) match += std::min(c, it->second);
  }
  return {match, total};
}

double brevity(double c, double r) { return c < r ? std::exp(1.0 - r / c) : 1.0; }

void check_pair(std::span<const Tokens> hyps, std::span<const Tokens> refs) {
  if (hyps.empty()) throw InputError("metric over an empty corpus");
  if (hyps.size() != refs.size())
    throw InputError(std::to_string(hyps.size()) + " hypotheses for " + std::to_string(refs.size()) +
                     " references");
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

double bleu4_corpus(std::span<const Tokens> hyps, std::span<const Tokens> refs) {
  check_pair(hyps, refs);
  std::size_t match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double c = 0, r = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    c += static_cast<double>(hyps[i].size());
    r += static_cast<double>(refs[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto [m, t] = clipped(hyps[i], refs[i], n);
      match[n - 1] += m;
      total[n - 1] += t;
    }
  }
  double log_sum = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (match[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n]));
  }
  return brevity(c, r) * std::exp(log_sum / 4.0);
}

double bleu4_sentence(const Tokens& hyp, const Tokens& ref) {
  if (hyp.empty()) return 0.0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto [m, t] = clipped(hyp, ref, n);
    if (n == 1) {
      if (m == 0) return 0.0;
      log_sum += std::log(static_cast<double>(m) / static_cast<double>(t));
    } else {
      log_sum += std::log((static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0));
    }
  }
  return brevity(static_cast<double>(hyp.size()), static_cast<double>(ref.size())) * std::exp(log_sum / 4.0);
}

double rouge2_f1(const Tokens& hyp, const Tokens& ref) {
  if (hyp.size() < 2 || ref.size() < 2) return 0.0;
  const auto [overlap, h_total] = clipped(hyp, ref, 2);
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(h_total);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size() - 1);
  return 2.0 * p * r / (p + r);
}

double rouge2_corpus(std::span<const Tokens> hyps, std::span<const Tokens> refs) {
  check_pair(hyps, refs);
  double s = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) s += rouge2_f1(hyps[i], refs[i]);
  return s / static_cast<double>(hyps.size());
}

std::string metric_name(Metric m) { return m == Metric::kBleu4 ? "bleu4" : "rouge2"; }

Metric parse_metric(const std::string& name) {
  if (name == "bleu4") return Metric::kBleu4;
  if (name == "rouge2") return Metric::kRouge2;
  throw ConfigError("unknown metric '" + name + "' (expected bleu4 or rouge2)");
}

double corpus_metric(Metric m, std::span<const Tokens> hyps, std::span<const Tokens> refs) {
  return m == Metric::kBleu4 ? bleu4_corpus(hyps, refs) : rouge2_corpus(hyps, refs);
}

double sentence_metric(Metric m, const Tokens& hyp, const Tokens& ref) {
  return m == Metric::kBleu4 ? bleu4_sentence(hyp, ref) : rouge2_f1(hyp, ref);
}

HypothesisSet make_hypothesis_set(std::string source_id, std::vector<ScoredHypothesis> hyps,
                                  Tokens reference, Ranking ranking) {
  if (hyps.empty()) throw InputError("hypothesis set for '" + source_id + "' is empty");
  std::vector<double> score;
  for (const auto& h : hyps)
    score.push_back(ranking == Ranking::kRawSum
                        ? h.log_prob
                        : h.log_prob / static_cast<double>(std::max<std::size_t>(1, h.tokens.size())));
  std::vector<std::size_t> order(hyps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  HypothesisSet set;
  set.source_id = std::move(source_id);
  set.reference = std::move(reference);
  for (std::size_t i : order) {
    set.hyps.push_back(std::move(hyps[i].tokens));
    set.scores.push_back(score[i]);
  }
  return set;
}

double top1_metric(std::span<const HypothesisSet> sets, Metric m) {
  std::vector<Tokens> hyps, refs;
  for (const auto& s : sets) {
    if (s.hyps.empty()) throw InputError("hypothesis set '" + s.source_id + "' is empty");
    hyps.push_back(s.hyps.front());
    refs.push_back(s.reference);
  }
  return corpus_metric(m, hyps, refs);
}

std::vector<std::size_t> oracle_picks(std::span<const HypothesisSet> sets, Metric m) {
  std::vector<std::size_t> picks;
  for (const auto& s : sets) {
    if (s.hyps.empty()) throw InputError("hypothesis set '" + s.source_id + "' is empty");
    std::size_t best = 0;
    double best_score = sentence_metric(m, s.hyps[0], s.reference);
    for (std::size_t i = 1; i < s.hyps.size(); ++i) {
      const double v = sentence_metric(m, s.hyps[i], s.reference);
      if (v > best_score) {
        best = i;
        best_score = v;
      }
    }
    picks.push_back(best);
  }
  return picks;
}

double oracle_metric(std::span<const HypothesisSet> sets, Metric m) {
  const auto picks = oracle_picks(sets, m);
  std::vector<Tokens> hyps, refs;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    hyps.push_back(sets[i].hyps[picks[i]]);
    refs.push_back(sets[i].reference);
  }
  return corpus_metric(m, hyps, refs);
}

std::optional<double> pairwise_metric(std::span<const HypothesisSet> sets, Metric m) {
  if (sets.empty()) return std::nullopt;
  double total = 0;
  std::size_t pairs = 0;
  for (const auto& s : sets) {
    if (s.hyps.size() < 2) return std::nullopt;
    for (std::size_t i = 0; i < s.hyps.size(); ++i)
      for (std::size_t j = 0; j < s.hyps.size(); ++j) {
        if (i == j) continue;
        total += sentence_metric(m, s.hyps[i], s.hyps[j]);
        ++pairs;
      }
  }
  return total / static_cast<double>(pairs);
}

EvalReport evaluate(std::span<const HypothesisSet> sets, Metric m) {
  if (sets.empty()) throw InputError("nothing to evaluate");
  const std::size_t K = sets.front().hyps.size();
  for (const auto& s : sets)
    if (s.hyps.size() != K)
      throw InputError("set '" + s.source_id + "' has " + std::to_string(s.hyps.size()) +
                       " hypotheses, expected K=" + std::to_string(K));
  EvalReport r;
  r.metric = m;
  r.K = K;
  r.top1 = top1_metric(sets, m);
  r.oracle = oracle_metric(sets, m);
  r.pairwise = pairwise_metric(sets, m);
  r.n_examples = sets.size();
  return r;
}

std::string to_csv(std::span<const EvalReport> reports) {
  std::string out = "metric,K,top1,oracle,pairwise,n_examples\n";
  for (const auto& r : reports) {
    out += metric_name(r.metric) + "," + std::to_string(r.K) + "," + num(r.top1) + "," + num(r.oracle) + "," +
           (r.pairwise ? num(*r.pairwise) : "") + "," + std::to_string(r.n_examples) + "\n";
  }
  return out;
}

std::vector<EvalReport> from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "metric,K,top1,oracle,pairwise,n_examples")
    throw ParseError("eval report: unexpected header");
  std::vector<EvalReport> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw ParseError("eval report line " + std::to_string(lineno) + ": expected 6 fields");
    auto to_double = [&](const std::string& s) {
      double v = 0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ParseError("eval report line " + std::to_string(lineno) + ": bad number '" + s + "'");
      return v;
    };
    EvalReport r;
    r.metric = parse_metric(f[0]);
    r.K = static_cast<std::size_t>(std::stoull(f[1]));
    r.top1 = to_double(f[2]);
    r.oracle = to_double(f[3]);
    if (!f[4].empty()) r.pairwise = to_double(f[4]);
    r.n_examples = static_cast<std::size_t>(std::stoull(f[5]));
    out.push_back(r);
  }
  return out;
}

std::string to_markdown(std::span<const EvalReport> reports, const std::string& label) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return std::string(buf);
  };
  std::string out;
  if (!label.empty()) out += "**" + label + "**\n\n";
  out += "| Metric | K | Top-1 (higher better) | Oracle (higher better) | Pairwise (lower better) | N |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    out += "| " + std::string(r.metric == Metric::kBleu4 ? "BLEU-4" : "ROUGE-2") + " | " + std::to_string(r.K) +
           " | " + pct(r.top1) + " | " + pct(r.oracle) + " | " + (r.pairwise ? pct(*r.pairwise) : "n/a") +
           " | " + std::to_string(r.n_examples) + " |\n";
  }
  return out;
}

}  // namespace focusmix::eval
