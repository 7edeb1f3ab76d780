#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "focusmix/generator/generator.hpp"

namespace focusmix::decoding {

using generator::Hypothesis;
using generator::kDefaultMaxLen;
using numerics::ParamStore;

// Width-B beam over total log-probability (no length normalisation). Each
// step ranks every expansion by score, ties to the lower token id and then
// the better-ranked parent; the first B - |finished| candidates survive,
// those ending in EOS retire. Stops once B hypotheses have finished or after
// max_len steps, when live hypotheses retire as truncated. Result sorted by
// descending log_prob.
template <typename T>
std::vector<Hypothesis> beam_search(const ParamStore<T>& store, std::span<const int> ids,
                                    std::span<const std::uint8_t> mask, std::size_t B,
                                    std::size_t max_len = kDefaultMaxLen);

inline constexpr double kDefaultDiversity = 0.5;

// G groups of width B/G decoded in lockstep. At each step group g ranks its
// expansions by log_prob - lambda * (times the token was chosen at this step
// by groups before g); stored log-probabilities stay unpenalised. Output is
// group 0's hypotheses, then group 1's, ... ConfigError unless G divides B.
template <typename T>
std::vector<Hypothesis> diverse_beam_search(const ParamStore<T>& store, std::span<const int> ids,
                                            std::span<const std::uint8_t> mask, std::size_t B,
                                            std::size_t G, double lambda = kDefaultDiversity,
                                            std::size_t max_len = kDefaultMaxLen);

inline constexpr std::size_t kDefaultTopK = 10;

// Draws from the k most likely tokens (ties to the lower id) after
// renormalising their probabilities: one uniform() per call, inverted on the
// cumulative weights in rank order.
std::size_t sample_top_k(std::span<const double> log_probs, std::size_t k, numerics::Rng& rng);

// Ancestral sampling restricted to the top k tokens per step on
// numerics::Rng(seed). log_prob uses the full-vocabulary distribution.
template <typename T>
Hypothesis truncated_sampling(const ParamStore<T>& store, std::span<const int> ids,
                              std::span<const std::uint8_t> mask, std::size_t k,
                              std::uint64_t seed, std::size_t max_len = kDefaultMaxLen);

// Mixture decoder: generator parameters plus K start embeddings
// "mixdec.sos_emb.1" .. "mixdec.sos_emb.K"; the source mask is all zeros.
std::string sos_param(std::size_t z);

template <typename T>
void init_mixture_decoder(ParamStore<T>& store, const generator::GeneratorConfig& cfg,
                          std::size_t K, std::size_t vocab_size, numerics::Rng& rng);

struct MixtureExample {
  std::vector<int> ids;
  std::vector<int> target;
};

struct MixtureStepResult {
  double mean_loss = 0.0;
  std::vector<std::size_t> chosen;
};

// Hard-EM: per example, teacher-forced loss from every start embedding with
// the current parameters, keep the minimum (ties to the lower z), then one
// Adam update on the mean chosen loss.
template <typename T>
MixtureStepResult mixture_decoder_train_step(ParamStore<T>& store, std::size_t K,
                                             std::span<const MixtureExample> batch,
                                             const numerics::AdamConfig& adam = {});

// Greedy decode from each start embedding, in expert order.
template <typename T>
std::vector<Hypothesis> mixture_decoder_generate(const ParamStore<T>& store, std::size_t K,
                                                 std::span<const int> ids,
                                                 std::size_t max_len = kDefaultMaxLen);

}  // namespace focusmix::decoding
