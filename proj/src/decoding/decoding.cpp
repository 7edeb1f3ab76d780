#include "focusmix/decoding/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "focusmix/error.hpp"

namespace focusmix::decoding {

using generator::DecoderSession;
using numerics::Graph;
using numerics::Rng;
using numerics::Var;

namespace {

struct Partial {
  std::vector<int> tokens;
  double log_prob = 0.0;
  Var s;
  Var input;
  std::vector<std::vector<double>> attention;
};

struct Candidate {
  std::size_t parent;
  int token;
  double score;
};

template <typename T>
class BeamGroup {
 public:
  BeamGroup(DecoderSession<T>& session, std::size_t width, Var first_input) : session_(session), width_(width) {
    Partial root;
    root.s = session.initial_state();
    root.input = first_input;
    active_.push_back(std::move(root));
  }

  bool done() const { return active_.empty() || finished_.size() >= width_; }

  // One decoding step. `penalty[v]` is subtracted from the ranking score of
  // token v. Returns the tokens this group chose.
  std::vector<int> advance(const std::vector<double>& penalty, bool last_step) {
    std::vector<typename DecoderSession<T>::Step> steps;
    std::vector<Candidate> cands;
    const std::size_t V = session_.vocab_size();
    for (std::size_t p = 0; p < active_.size(); ++p) {
      steps.push_back(session_.step(active_[p].s, active_[p].input));
      const auto& lp = steps.back().log_probs;
      for (std::size_t v = 0; v < V; ++v)
        cands.push_back({p, static_cast<int>(v), active_[p].log_prob + lp[v] - penalty[v]});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });

    const std::size_t slots = width_ - finished_.size();
    std::vector<Partial> next;
    std::vector<int> chosen;
    for (std::size_t i = 0; i < std::min(slots, cands.size()); ++i) {
      const Candidate& c = cands[i];
      const Partial& parent = active_[c.parent];
      const auto& st = steps[c.parent];
      chosen.push_back(c.token);
      Partial child;
      child.tokens = parent.tokens;
      child.log_prob = parent.log_prob + st.log_probs[static_cast<std::size_t>(c.token)];
      child.attention = parent.attention;
      child.attention.push_back(st.attention);
      if (c.token == corpus::kEos) {
        finished_.push_back(finish(std::move(child), false));
        continue;
      }
      child.tokens.push_back(c.token);
      child.s = st.s;
      child.input = session_.token_input(c.token);
      next.push_back(std::move(child));
    }
    active_ = std::move(next);
    if (last_step) {
      for (auto& p : active_) finished_.push_back(finish(std::move(p), true));
      active_.clear();
    }
    return chosen;
  }

  std::vector<Hypothesis> results() {
    std::stable_sort(finished_.begin(), finished_.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; });
    if (finished_.size() > width_) finished_.resize(width_);
    return finished_;
  }

 private:
  Hypothesis finish(Partial p, bool truncated) const {
    Hypothesis h;
    h.tokens = std::move(p.tokens);
    h.log_prob = p.log_prob;
    h.attention = std::move(p.attention);
    h.mask = session_.mask();
    h.truncated = truncated;
    return h;
  }

  DecoderSession<T>& session_;
  std::size_t width_;
  std::vector<Partial> active_;
  std::vector<Hypothesis> finished_;
};

}  // namespace

template <typename T>
std::vector<Hypothesis> beam_search(const ParamStore<T>& store, std::span<const int> ids,
                                    std::span<const std::uint8_t> mask, std::size_t B,
                                    std::size_t max_len) {
  if (B == 0) throw ConfigError("beam width must be at least 1");
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  DecoderSession<T> session(store, ids, mask);
  BeamGroup<T> group(session, B, session.token_input(corpus::kSos));
  const std::vector<double> none(session.vocab_size(), 0.0);
  for (std::size_t t = 0; t < max_len && !group.done(); ++t) group.advance(none, t + 1 == max_len);
  return group.results();
}

template <typename T>
std::vector<Hypothesis> diverse_beam_search(const ParamStore<T>& store, std::span<const int> ids,
                                            std::span<const std::uint8_t> mask, std::size_t B,
                                            std::size_t G, double lambda, std::size_t max_len) {
  if (B == 0 || G == 0 || B % G != 0)
    throw ConfigError("diverse beam: B=" + std::to_string(B) + " is not divisible into G=" +
                      std::to_string(G) + " groups");
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  DecoderSession<T> session(store, ids, mask);
  std::vector<BeamGroup<T>> groups;
  groups.reserve(G);
  for (std::size_t g = 0; g < G; ++g) groups.emplace_back(session, B / G, session.token_input(corpus::kSos));

  const std::size_t V = session.vocab_size();
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<double> penalty(V, 0.0);
    bool any = false;
    for (auto& group : groups) {
      if (group.done()) continue;
      any = true;
      for (int tok : group.advance(penalty, t + 1 == max_len))
        penalty[static_cast<std::size_t>(tok)] += lambda;
    }
    if (!any) break;
  }
  std::vector<Hypothesis> out;
  for (auto& group : groups)
    for (auto& h : group.results()) out.push_back(std::move(h));
  return out;
}

std::size_t sample_top_k(std::span<const double> log_probs, std::size_t k, Rng& rng) {
  if (k == 0) throw ConfigError("top-k needs k >= 1");
  if (log_probs.empty()) throw InputError("sampling from an empty distribution");
  std::vector<std::size_t> order(log_probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (log_probs[a] != log_probs[b]) return log_probs[a] > log_probs[b];
                      return a < b;
                    });
  const double top = log_probs[order[0]];
  std::vector<double> cum(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) cum[i] = (total += std::exp(log_probs[order[i]] - top));
  const double u = rng.uniform() * total;
  for (std::size_t i = 0; i < k; ++i)
    if (u < cum[i]) return order[i];
  return order[k - 1];
}

template <typename T>
Hypothesis truncated_sampling(const ParamStore<T>& store, std::span<const int> ids,
                              std::span<const std::uint8_t> mask, std::size_t k, std::uint64_t seed,
                              std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  DecoderSession<T> session(store, ids, mask);
  Rng rng(seed);
  Hypothesis hyp;
  hyp.mask = session.mask();
  hyp.truncated = true;
  Var s = session.initial_state();
  Var input = session.token_input(corpus::kSos);
  for (std::size_t t = 0; t < max_len; ++t) {
    auto st = session.step(s, input);
    const std::size_t tok = sample_top_k(st.log_probs, k, rng);
    hyp.log_prob += st.log_probs[tok];
    hyp.attention.push_back(std::move(st.attention));
    if (static_cast<int>(tok) == corpus::kEos) {
      hyp.truncated = false;
      break;
    }
    hyp.tokens.push_back(static_cast<int>(tok));
    s = st.s;
    input = session.token_input(static_cast<int>(tok));
  }
  return hyp;
}

std::string sos_param(std::size_t z) { return "mixdec.sos_emb." + std::to_string(z + 1); }

template <typename T>
void init_mixture_decoder(ParamStore<T>& store, const generator::GeneratorConfig& cfg, std::size_t K,
                          std::size_t vocab_size, Rng& rng) {
  if (K == 0) throw ConfigError("mixture decoder needs at least one expert");
  generator::init_generator(store, cfg, vocab_size, rng);
  for (std::size_t z = 0; z < K; ++z) store.add_uniform(sos_param(z), {cfg.d_w}, 0.1, rng);
}

template <typename T>
MixtureStepResult mixture_decoder_train_step(ParamStore<T>& store, std::size_t K,
                                             std::span<const MixtureExample> batch,
                                             const numerics::AdamConfig& adam) {
  MixtureStepResult result;
  if (batch.empty()) return result;
  numerics::GradMap<T> grads;
  const T inv = T{1} / static_cast<T>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    Graph<T> g(true);
    const std::vector<std::uint8_t> zeros(ex.ids.size(), 0);
    const auto enc = generator::encode(g, store, ex.ids, zeros);
    std::vector<Var> losses;
    std::vector<double> values;
    for (std::size_t z = 0; z < K; ++z) {
      losses.push_back(generator::decoder_loss(g, store, enc, ex.target, g.param(store, sos_param(z))));
      values.push_back(static_cast<double>(g.value(losses.back())[0]));
    }
    const std::size_t best = selector::argmin_lowest(values);
    result.chosen.push_back(best);
    total += values[best];
    g.backward(losses[best]);
    g.accumulate_param_grads(grads, inv);
  }
  numerics::adam_step(store, grads, adam);
  result.mean_loss = total / static_cast<double>(batch.size());
  return result;
}

template <typename T>
std::vector<Hypothesis> mixture_decoder_generate(const ParamStore<T>& store, std::size_t K,
                                                 std::span<const int> ids, std::size_t max_len) {
  const std::vector<std::uint8_t> zeros(ids.size(), 0);
  DecoderSession<T> session(store, ids, zeros);
  std::vector<Hypothesis> out;
  for (std::size_t z = 0; z < K; ++z) {
    Hypothesis h = generator::greedy_from(session, session.param_input(sos_param(z)), max_len);
    h.expert = z;
    out.push_back(std::move(h));
  }
  return out;
}

#define FOCUSMIX_INSTANTIATE_DECODING(T)                                                           \
  template std::vector<Hypothesis> beam_search(const ParamStore<T>&, std::span<const int>,         \
                                               std::span<const std::uint8_t>, std::size_t,         \
                                               std::size_t);                                       \
  template std::vector<Hypothesis> diverse_beam_search(const ParamStore<T>&, std::span<const int>, \
                                                       std::span<const std::uint8_t>, std::size_t, \
                                                       std::size_t, double, std::size_t);          \
  template Hypothesis truncated_sampling(const ParamStore<T>&, std::span<const int>,               \
                                         std::span<const std::uint8_t>, std::size_t,               \
                                         std::uint64_t, std::size_t);                              \
  template void init_mixture_decoder(ParamStore<T>&, const generator::GeneratorConfig&,            \
                                     std::size_t, std::size_t, Rng&);                              \
  template MixtureStepResult mixture_decoder_train_step(ParamStore<T>&, std::size_t,               \
                                                        std::span<const MixtureExample>,           \
                                                        const numerics::AdamConfig&);              \
  template std::vector<Hypothesis> mixture_decoder_generate(const ParamStore<T>&, std::size_t,     \
                                                            std::span<const int>, std::size_t);

FOCUSMIX_INSTANTIATE_DECODING(float)
FOCUSMIX_INSTANTIATE_DECODING(double)

}  // namespace focusmix::decoding
