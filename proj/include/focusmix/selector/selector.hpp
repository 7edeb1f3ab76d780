#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "focusmix/numerics/adam.hpp"
#include "focusmix/numerics/ops.hpp"

namespace focusmix::selector {

using numerics::Graph;
using numerics::ParamStore;
using numerics::Var;

// Word embedding read by the selector and the generator (one tensor).
inline const std::string kWordEmb = "shared.word_emb";

// Adds shared.word_emb [V x d_w], uniform in [-0.1, 0.1], unless present.
template <typename T>
void init_word_embedding(ParamStore<T>& store, std::size_t vocab_size, std::size_t d_w,
                         numerics::Rng& rng);

struct SelectorConfig {
  std::size_t d_w = 64;  // must match the shared word embedding
  std::size_t d_h = 64;
  std::size_t d_e = 64;
  std::size_t K = 3;
  double th = 0.15;

  void validate() const;
};

// Experts are indexed 0..K-1 in this API; checkpoints name them
// selector.expert_emb.1 .. selector.expert_emb.K.
std::string expert_param(std::size_t z);

// Bi-GRU "selector.enc.{fwd,bwd}", FC1 (tanh, width d_h), FC2 (scalar) and K
// expert embeddings. FC1 over [h_t; h_1; h_S; e_z] is stored as four column
// blocks (W_cur, W_first, W_last, W_expert) plus a bias, so the expert-only
// part is a per-expert bias shared by every position.
template <typename T>
void init_selector(ParamStore<T>& store, const SelectorConfig& cfg, std::size_t vocab_size,
                   numerics::Rng& rng);

// Expert-independent part of one forward pass.
struct SelectorEncoding {
  Var H;         // [S x 2 d_h]
  Var position;  // W_cur h_t for every t, [S x d_h]
  Var context;   // W_first h_1 + W_last h_S + b, [d_h]
  std::size_t length = 0;
};

template <typename T>
SelectorEncoding selector_encode(Graph<T>& g, const ParamStore<T>& store,
                                 std::span<const int> ids);
// o^z in (0,1)^S as a graph value. IndexError if z >= K.
template <typename T>
Var selector_probs(Graph<T>& g, const ParamStore<T>& store, const SelectorConfig& cfg,
                   const SelectorEncoding& enc, std::size_t z);

template <typename T>
std::vector<double> selector_forward(const ParamStore<T>& store, const SelectorConfig& cfg,
                                     std::span<const int> ids, std::size_t z);
// All K probability vectors from a single encoder pass.
template <typename T>
std::vector<std::vector<double>> selector_forward_all(const ParamStore<T>& store,
                                                      const SelectorConfig& cfg,
                                                      std::span<const int> ids);

struct FocusMask {
  std::vector<std::uint8_t> bits;
  std::size_t expert = 0;
  std::vector<double> probs;
};

// bits_t = probs_t >= th.
FocusMask threshold_focus(std::span<const double> probs, double th, std::size_t expert = 0);
// bits_t = uniform() < probs_t on numerics::Rng(seed), one draw per position.
FocusMask sample_focus(std::span<const double> probs, std::uint64_t seed, std::size_t expert = 0);

// (1/K) sum_z p(bits | x, z).
template <typename T>
double mixture_prob(const ParamStore<T>& store, const SelectorConfig& cfg,
                    std::span<const int> ids, std::span<const std::uint8_t> bits);

struct EStep {
  std::size_t best = 0;
  std::vector<double> losses;
};

// First index of the minimum.
std::size_t argmin_lowest(std::span<const double> values);

template <typename T>
EStep selector_estep(const ParamStore<T>& store, const SelectorConfig& cfg,
                     std::span<const int> ids, std::span<const std::uint8_t> guide);

struct SelectorExample {
  std::vector<int> ids;
  std::vector<std::uint8_t> guide;
};

// Loss of expert z on one example (graph value, sum over positions).
template <typename T>
Var selector_loss(Graph<T>& g, const ParamStore<T>& store, const SelectorConfig& cfg,
                  const SelectorEncoding& enc, std::span<const std::uint8_t> guide,
                  std::size_t z);

struct SelectorStepResult {
  double mean_loss = 0.0;
  std::vector<std::size_t> chosen;  // per example
};

// Hard-EM on a batch: each example picks its minimum-loss expert with the
// current parameters, then one Adam update on the mean chosen-expert loss.
// Unchosen expert embeddings get no gradient and stay bit-identical.
template <typename T>
SelectorStepResult selector_train_step(ParamStore<T>& store, const SelectorConfig& cfg,
                                       std::span<const SelectorExample> batch,
                                       const numerics::AdamConfig& adam = {});

// Thresholded mask of every expert, in expert order.
template <typename T>
std::vector<FocusMask> infer_all_focus(const ParamStore<T>& store, const SelectorConfig& cfg,
                                       std::span<const int> ids);

}  // namespace focusmix::selector
