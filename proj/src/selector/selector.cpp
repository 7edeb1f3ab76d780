#include "focusmix/selector/selector.hpp"

#include <algorithm>
#include <cmath>

#include "focusmix/error.hpp"

namespace focusmix::selector {

using numerics::GradMap;
using numerics::Rng;
using numerics::Tensor;

namespace {

constexpr double kEmbInit = 0.1;

}  // namespace

template <typename T>
void init_word_embedding(ParamStore<T>& store, std::size_t vocab_size, std::size_t d_w, Rng& rng) {
  if (store.contains(kWordEmb)) {
    const auto& E = store.get(kWordEmb);
    if (E.rank() != 2 || E.dim(0) != vocab_size || E.dim(1) != d_w)
      throw DimensionError("existing " + kWordEmb + " has shape " + numerics::shape_string(E.shape()));
    return;
  }
  store.add_uniform(kWordEmb, {vocab_size, d_w}, std::sqrt(3.0), rng);  // unit variance
}

void SelectorConfig::validate() const {
  if (d_w == 0 || d_h == 0 || d_e == 0) throw ConfigError("selector dimensions must be positive");
  if (K == 0) throw ConfigError("selector needs at least one expert");
  if (!(th > 0.0 && th < 1.0)) throw ConfigError("selector threshold must lie in (0, 1)");
}

std::string expert_param(std::size_t z) { return "selector.expert_emb." + std::to_string(z + 1); }

template <typename T>
void init_selector(ParamStore<T>& store, const SelectorConfig& cfg, std::size_t vocab_size, Rng& rng) {
  cfg.validate();
  init_word_embedding(store, vocab_size, cfg.d_w, rng);
  numerics::init_gru(store, "selector.enc.fwd", cfg.d_w, cfg.d_h, rng);
  numerics::init_gru(store, "selector.enc.bwd", cfg.d_w, cfg.d_h, rng);
  // Glorot bound of the full [d_h x (6 d_h + d_e)] FC1 matrix for every block.
  const double b1 = numerics::glorot_bound(6 * cfg.d_h + cfg.d_e, cfg.d_h);
  store.add_uniform("selector.fc1.W_cur", {cfg.d_h, 2 * cfg.d_h}, b1, rng);
  store.add_uniform("selector.fc1.W_first", {cfg.d_h, 2 * cfg.d_h}, b1, rng);
  store.add_uniform("selector.fc1.W_last", {cfg.d_h, 2 * cfg.d_h}, b1, rng);
  store.add_uniform("selector.fc1.W_expert", {cfg.d_h, cfg.d_e}, b1, rng);
  store.add_zeros("selector.fc1.b", {cfg.d_h});
  store.add_uniform("selector.fc2.W", {1, cfg.d_h}, numerics::glorot_bound(cfg.d_h, 1), rng);
  store.add_zeros("selector.fc2.b", {1});
  for (std::size_t z = 0; z < cfg.K; ++z) store.add_uniform(expert_param(z), {cfg.d_e}, kEmbInit, rng);
}

template <typename T>
SelectorEncoding selector_encode(Graph<T>& g, const ParamStore<T>& store, std::span<const int> ids) {
  if (ids.empty()) throw InputError("selector input is empty");
  const Var E = g.param(store, kWordEmb);
  const Var X = numerics::embedding_lookup(g, E, ids);
  const auto fwd = numerics::gru_vars(g, store, "selector.enc.fwd");
  const auto bwd = numerics::gru_vars(g, store, "selector.enc.bwd");
  SelectorEncoding enc;
  enc.length = ids.size();
  enc.H = numerics::bigru_encode(g, fwd, bwd, X);
  enc.position = numerics::linear_rows(g, enc.H, g.param(store, "selector.fc1.W_cur"));
  const Var h1 = numerics::row(g, enc.H, 0);
  const Var hS = numerics::row(g, enc.H, ids.size() - 1);
  const Var first = numerics::affine(g, h1, g.param(store, "selector.fc1.W_first"),
                                     g.param(store, "selector.fc1.b"));
  const Var last = numerics::linear(g, hS, g.param(store, "selector.fc1.W_last"));
  enc.context = numerics::add(g, first, last);
  return enc;
}

template <typename T>
Var selector_probs(Graph<T>& g, const ParamStore<T>& store, const SelectorConfig& cfg,
                   const SelectorEncoding& enc, std::size_t z) {
  if (z >= cfg.K)
    throw IndexError("expert " + std::to_string(z) + " out of range for K=" + std::to_string(cfg.K));
  const Var e = g.param(store, expert_param(z));
  const Var bias = numerics::add(g, enc.context,
                                 numerics::linear(g, e, g.param(store, "selector.fc1.W_expert")));
  const Var hidden = numerics::tanh(g, numerics::add_row_broadcast(g, enc.position, bias));
  const Var out = numerics::add_row_broadcast(
      g, numerics::linear_rows(g, hidden, g.param(store, "selector.fc2.W")),
      g.param(store, "selector.fc2.b"));
  return numerics::sigmoid(g, numerics::reshape(g, out, {enc.length}));
}

template <typename T>
std::vector<double> selector_forward(const ParamStore<T>& store, const SelectorConfig& cfg,
                                     std::span<const int> ids, std::size_t z) {
  Graph<T> g(false);
  const auto enc = selector_encode(g, store, ids);
  const auto& p = g.value(selector_probs(g, store, cfg, enc, z));
  return {p.values().begin(), p.values().end()};
}

template <typename T>
std::vector<std::vector<double>> selector_forward_all(const ParamStore<T>& store,
                                                      const SelectorConfig& cfg,
                                                      std::span<const int> ids) {
  Graph<T> g(false);
  const auto enc = selector_encode(g, store, ids);
  std::vector<std::vector<double>> out;
  out.reserve(cfg.K);
  for (std::size_t z = 0; z < cfg.K; ++z) {
    const auto& p = g.value(selector_probs(g, store, cfg, enc, z));
    out.emplace_back(p.values().begin(), p.values().end());
  }
  return out;
}

FocusMask threshold_focus(std::span<const double> probs, double th, std::size_t expert) {
  FocusMask m;
  m.expert = expert;
  m.probs.assign(probs.begin(), probs.end());
  m.bits.reserve(probs.size());
  for (double p : probs) m.bits.push_back(p >= th ? 1 : 0);
  return m;
}

FocusMask sample_focus(std::span<const double> probs, std::uint64_t seed, std::size_t expert) {
  Rng rng(seed);
  FocusMask m;
  m.expert = expert;
  m.probs.assign(probs.begin(), probs.end());
  m.bits.reserve(probs.size());
  for (double p : probs) m.bits.push_back(rng.uniform() < p ? 1 : 0);
  return m;
}

namespace {

// Same clamping as numerics::bernoulli_nll, evaluated in double.
double nll(std::span<const double> probs, std::span<const std::uint8_t> bits) {
  if (probs.size() != bits.size())
    throw DimensionError("mask length " + std::to_string(bits.size()) + " vs source length " +
                         std::to_string(probs.size()));
  const double eps = numerics::kBernoulliEps;
  double s = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const double p = std::clamp(probs[t], eps, 1.0 - eps);
    s -= bits[t] ? std::log(p) : std::log1p(-p);
  }
  return s;
}

}  // namespace

template <typename T>
double mixture_prob(const ParamStore<T>& store, const SelectorConfig& cfg,
                    std::span<const int> ids, std::span<const std::uint8_t> bits) {
  const auto all = selector_forward_all(store, cfg, ids);
  // log-sum-exp over experts
  std::vector<double> logs;
  for (const auto& p : all) logs.push_back(-nll(p, bits));
  const double mx = *std::max_element(logs.begin(), logs.end());
  double s = 0.0;
  for (double l : logs) s += std::exp(l - mx);
  return std::exp(mx) * s / static_cast<double>(logs.size());
}

std::size_t argmin_lowest(std::span<const double> values) {
  if (values.empty()) throw InputError("argmin of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[best]) best = i;
  return best;
}

template <typename T>
Var selector_loss(Graph<T>& g, const ParamStore<T>& store, const SelectorConfig& cfg,
                  const SelectorEncoding& enc, std::span<const std::uint8_t> guide, std::size_t z) {
  return numerics::bernoulli_nll(g, selector_probs(g, store, cfg, enc, z), guide);
}

template <typename T>
EStep selector_estep(const ParamStore<T>& store, const SelectorConfig& cfg,
                     std::span<const int> ids, std::span<const std::uint8_t> guide) {
  Graph<T> g(false);
  const auto enc = selector_encode(g, store, ids);
  EStep r;
  for (std::size_t z = 0; z < cfg.K; ++z)
    r.losses.push_back(static_cast<double>(g.value(selector_loss(g, store, cfg, enc, guide, z))[0]));
  r.best = argmin_lowest(r.losses);
  return r;
}

template <typename T>
SelectorStepResult selector_train_step(ParamStore<T>& store, const SelectorConfig& cfg,
                                       std::span<const SelectorExample> batch,
                                       const numerics::AdamConfig& adam) {
  SelectorStepResult result;
  if (batch.empty()) return result;
  GradMap<T> grads;
  const T inv = T{1} / static_cast<T>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    Graph<T> g(true);
    const auto enc = selector_encode(g, store, ex.ids);
    std::vector<Var> losses;
    std::vector<double> values;
    for (std::size_t z = 0; z < cfg.K; ++z) {
      losses.push_back(selector_loss(g, store, cfg, enc, ex.guide, z));
      values.push_back(static_cast<double>(g.value(losses.back())[0]));
    }
    const std::size_t best = argmin_lowest(values);
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
std::vector<FocusMask> infer_all_focus(const ParamStore<T>& store, const SelectorConfig& cfg,
                                       std::span<const int> ids) {
  const auto all = selector_forward_all(store, cfg, ids);
  std::vector<FocusMask> out;
  for (std::size_t z = 0; z < all.size(); ++z) out.push_back(threshold_focus(all[z], cfg.th, z));
  return out;
}

#define FOCUSMIX_INSTANTIATE_SELECTOR(T)                                                          \
  template void init_word_embedding(ParamStore<T>&, std::size_t, std::size_t, Rng&);             \
  template void init_selector(ParamStore<T>&, const SelectorConfig&, std::size_t, Rng&);          \
  template SelectorEncoding selector_encode(Graph<T>&, const ParamStore<T>&, std::span<const int>); \
  template Var selector_probs(Graph<T>&, const ParamStore<T>&, const SelectorConfig&,             \
                              const SelectorEncoding&, std::size_t);                              \
  template std::vector<double> selector_forward(const ParamStore<T>&, const SelectorConfig&,      \
                                                std::span<const int>, std::size_t);               \
  template std::vector<std::vector<double>> selector_forward_all(                                 \
      const ParamStore<T>&, const SelectorConfig&, std::span<const int>);                         \
  template double mixture_prob(const ParamStore<T>&, const SelectorConfig&, std::span<const int>, \
                               std::span<const std::uint8_t>);                                    \
  template Var selector_loss(Graph<T>&, const ParamStore<T>&, const SelectorConfig&,              \
                             const SelectorEncoding&, std::span<const std::uint8_t>, std::size_t); \
  template EStep selector_estep(const ParamStore<T>&, const SelectorConfig&,                      \
                                std::span<const int>, std::span<const std::uint8_t>);             \
  template SelectorStepResult selector_train_step(ParamStore<T>&, const SelectorConfig&,          \
                                                  std::span<const SelectorExample>,               \
                                                  const numerics::AdamConfig&);                   \
  template std::vector<FocusMask> infer_all_focus(const ParamStore<T>&, const SelectorConfig&,    \
                                                  std::span<const int>);

FOCUSMIX_INSTANTIATE_SELECTOR(float)
FOCUSMIX_INSTANTIATE_SELECTOR(double)

}  // namespace focusmix::selector
