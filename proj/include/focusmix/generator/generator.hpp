#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "focusmix/corpus/vocabulary.hpp"
#include "focusmix/numerics/adam.hpp"
#include "focusmix/numerics/ops.hpp"
#include "focusmix/selector/selector.hpp"

namespace focusmix::generator {

using numerics::Graph;
using numerics::ParamStore;
using numerics::Var;

struct GeneratorConfig {
  std::size_t d_w = 64;
  std::size_t d_h = 64;
  std::size_t d_f = 16;

  void validate() const;
};

// Parameters (besides shared.word_emb):
//   generator.focus_emb            [2 x d_f]
//   generator.enc.{fwd,bwd}.*      GRU, input d_w + d_f
//   generator.bridge.{W,b}         [fwd_S ; bwd_1] -> decoder s_0
//   generator.dec.*                GRU, input d_w + 2 d_h
//   generator.att.{W,U,v}          additive attention, width d_h
//   generator.out.{W,b}            [s_t ; c_t] -> d_w
//   generator.out_bias             [V]
// Logits are shared.word_emb * proj + out_bias.
template <typename T>
void init_generator(ParamStore<T>& store, const GeneratorConfig& cfg, std::size_t vocab_size,
                    numerics::Rng& rng);

struct EncoderOut {
  Var H;     // [S x 2 d_h]
  Var keys;  // U_a H, [S x d_h]
  Var s0;    // [d_h]
  std::size_t length = 0;
};

// Row t of the Bi-GRU input is [word_emb(x_t) ; focus_emb(m_t)].
// DimensionError when |mask| != |ids|.
template <typename T>
EncoderOut encode(Graph<T>& g, const ParamStore<T>& store, std::span<const int> ids,
                  std::span<const std::uint8_t> mask);

struct StepOut {
  Var s;        // new decoder state
  Var logits;   // [V]
  Var weights;  // attention over the source, value only
};

// c = attend(s_prev); s = GRU([input; c], s_prev); logits = E * affine([s; c]) + bias.
template <typename T>
StepOut decoder_step(Graph<T>& g, const ParamStore<T>& store, const EncoderOut& enc, Var s_prev,
                     Var input);

// Mean token cross-entropy of (y, EOS) given decoder inputs (SOS, y). `sos`
// replaces the SOS word embedding when valid. InputError on empty y.
template <typename T>
Var teacher_forced_loss(Graph<T>& g, const ParamStore<T>& store, std::span<const int> ids,
                        std::span<const std::uint8_t> mask, std::span<const int> target,
                        Var sos = {});
// Same loss from an existing encoding (lets several decoders share one encoder pass).
template <typename T>
Var decoder_loss(Graph<T>& g, const ParamStore<T>& store, const EncoderOut& enc,
                 std::span<const int> target, Var sos = {});
template <typename T>
double teacher_forced_loss_value(const ParamStore<T>& store, std::span<const int> ids,
                                 std::span<const std::uint8_t> mask, std::span<const int> target);

struct GeneratorExample {
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;
  std::vector<int> target;
};

// One Adam update on the batch-mean teacher-forced loss; returns that mean.
template <typename T>
double generator_train_step(ParamStore<T>& store, std::span<const GeneratorExample> batch,
                            const numerics::AdamConfig& adam = {});

struct Hypothesis {
  std::vector<int> tokens;  // no SOS, no EOS
  double log_prob = 0.0;    // sum of chosen-token log-softmax values, EOS step included
  // One row per decoder step (the EOS step included), each of length S.
  std::vector<std::vector<double>> attention;
  std::vector<std::uint8_t> mask;
  bool truncated = false;  // max_len reached without EOS
  std::optional<std::size_t> expert;
};

// Inference over one source with a non-recording tape. Not thread-safe; use
// one session per thread.
template <typename T>
class DecoderSession {
 public:
  DecoderSession(const ParamStore<T>& store, std::span<const int> ids,
                 std::span<const std::uint8_t> mask);
  DecoderSession(const DecoderSession&) = delete;
  DecoderSession& operator=(const DecoderSession&) = delete;

  struct Step {
    Var s;
    std::vector<double> log_probs;  // full-vocabulary log-softmax
    std::vector<double> attention;
  };

  Var initial_state() const { return enc_.s0; }
  Var token_input(int token);
  Var param_input(const std::string& name);
  Step step(Var s, Var input);

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t source_length() const { return enc_.length; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

 private:
  const ParamStore<T>& store_;
  Graph<T> g_{false};
  EncoderOut enc_;
  Var E_;
  std::size_t vocab_size_;
  std::vector<std::uint8_t> mask_;
};

// log-softmax in double.
std::vector<double> log_softmax(std::span<const double> logits);
template <typename T>
std::vector<double> log_softmax(const numerics::Tensor<T>& logits);

// Largest entry, ties to the lower index.
std::size_t argmax_lowest(std::span<const double> values);

inline constexpr std::size_t kDefaultMaxLen = 30;

// At most max_len decoder steps, argmax each step (ties to the lower id).
// The first input is the SOS embedding, or the parameter `sos_param` when given.
template <typename T>
Hypothesis greedy_decode(const ParamStore<T>& store, std::span<const int> ids,
                         std::span<const std::uint8_t> mask, std::size_t max_len = kDefaultMaxLen,
                         const std::string& sos_param = "");
template <typename T>
Hypothesis greedy_from(DecoderSession<T>& session, Var first_input, std::size_t max_len);

// One greedy hypothesis per selector expert, in expert order.
template <typename T>
std::vector<Hypothesis> generate_diverse(const ParamStore<T>& selector_store,
                                         const selector::SelectorConfig& selector_cfg,
                                         const ParamStore<T>& generator_store,
                                         std::span<const int> ids,
                                         std::size_t max_len = kDefaultMaxLen);

// Greedy decoding with the gold guide as focus. InputError when absent.
template <typename T>
Hypothesis upper_bound_decode(const ParamStore<T>& store, std::span<const int> ids,
                              const std::optional<std::vector<std::uint8_t>>& guide,
                              std::size_t max_len = kDefaultMaxLen);

// CSV: header "token,<source tokens...>", then one row per decoder step with
// the emitted token (or <eos>) and the weights to 6 decimals. FileError on I/O failure.
void dump_attention(const Hypothesis& hyp, const corpus::Tokens& source,
                    const corpus::Vocabulary& vocab, const std::filesystem::path& path);

}  // namespace focusmix::generator
