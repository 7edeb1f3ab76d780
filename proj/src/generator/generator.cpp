#include "focusmix/generator/generator.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "focusmix/error.hpp"

namespace focusmix::generator {

using numerics::Rng;
using numerics::Tensor;
using selector::kWordEmb;

void GeneratorConfig::validate() const {
  if (d_w == 0 || d_h == 0 || d_f == 0) throw ConfigError("generator dimensions must be positive");
}

template <typename T>
void init_generator(ParamStore<T>& store, const GeneratorConfig& cfg, std::size_t vocab_size, Rng& rng) {
  cfg.validate();
  selector::init_word_embedding(store, vocab_size, cfg.d_w, rng);
  const std::size_t c = 2 * cfg.d_h;
  store.add_uniform("generator.focus_emb", {2, cfg.d_f}, 0.1, rng);
  numerics::init_gru(store, "generator.enc.fwd", cfg.d_w + cfg.d_f, cfg.d_h, rng);
  numerics::init_gru(store, "generator.enc.bwd", cfg.d_w + cfg.d_f, cfg.d_h, rng);
  store.add_uniform("generator.bridge.W", {cfg.d_h, c}, numerics::glorot_bound(c, cfg.d_h), rng);
  store.add_zeros("generator.bridge.b", {cfg.d_h});
  numerics::init_gru(store, "generator.dec", cfg.d_w + c, cfg.d_h, rng);
  store.add_uniform("generator.att.W", {cfg.d_h, cfg.d_h}, numerics::glorot_bound(cfg.d_h, cfg.d_h), rng);
  store.add_uniform("generator.att.U", {cfg.d_h, c}, numerics::glorot_bound(c, cfg.d_h), rng);
  store.add_uniform("generator.att.v", {cfg.d_h}, numerics::glorot_bound(cfg.d_h, 1), rng);
  store.add_uniform("generator.out.W", {cfg.d_w, cfg.d_h + c},
                    numerics::glorot_bound(cfg.d_h + c, cfg.d_w), rng);
  store.add_zeros("generator.out.b", {cfg.d_w});
  store.add_zeros("generator.out_bias", {vocab_size});
}

template <typename T>
EncoderOut encode(Graph<T>& g, const ParamStore<T>& store, std::span<const int> ids,
                  std::span<const std::uint8_t> mask) {
  if (ids.empty()) throw InputError("generator input is empty");
  if (mask.size() != ids.size())
    throw DimensionError("focus mask length " + std::to_string(mask.size()) +
                         " vs source length " + std::to_string(ids.size()));
  std::vector<int> focus(mask.begin(), mask.end());
  for (int f : focus)
    if (f != 0 && f != 1) throw InputError("focus mask values must be 0 or 1");
  const Var words = numerics::embedding_lookup(g, g.param(store, kWordEmb), ids);
  const Var focus_rows =
      numerics::embedding_lookup(g, g.param(store, "generator.focus_emb"), std::span<const int>(focus));
  const Var X = numerics::concat_cols(g, words, focus_rows);
  const auto fwd = numerics::gru_vars(g, store, "generator.enc.fwd");
  const auto bwd = numerics::gru_vars(g, store, "generator.enc.bwd");
  EncoderOut enc;
  enc.length = ids.size();
  enc.H = numerics::bigru_encode(g, fwd, bwd, X);
  enc.keys = numerics::linear_rows(g, enc.H, g.param(store, "generator.att.U"));

  // final forward state lives in row S-1, final backward state in row 0
  const std::size_t d_h = g.value(enc.H).dim(1) / 2;
  const Var fwd_last = numerics::slice(g, numerics::row(g, enc.H, ids.size() - 1), 0, d_h);
  const Var bwd_first = numerics::slice(g, numerics::row(g, enc.H, 0), d_h, d_h);
  const Var parts[] = {fwd_last, bwd_first};
  enc.s0 = numerics::tanh(g, numerics::affine(g, numerics::concat<T>(g, parts),
                                              g.param(store, "generator.bridge.W"),
                                              g.param(store, "generator.bridge.b")));
  return enc;
}

template <typename T>
StepOut decoder_step(Graph<T>& g, const ParamStore<T>& store, const EncoderOut& enc, Var s_prev,
                     Var input) {
  const auto att = numerics::attend(g, s_prev, enc.H, enc.keys, g.param(store, "generator.att.W"),
                                    g.param(store, "generator.att.v"));
  const Var in_parts[] = {input, att.context};
  const Var s = numerics::gru_step(g, numerics::gru_vars(g, store, "generator.dec"),
                                   numerics::concat<T>(g, in_parts), s_prev);
  const Var out_parts[] = {s, att.context};
  const Var proj = numerics::affine(g, numerics::concat<T>(g, out_parts),
                                    g.param(store, "generator.out.W"), g.param(store, "generator.out.b"));
  const Var logits = numerics::affine(g, proj, g.param(store, kWordEmb), g.param(store, "generator.out_bias"));
  return {s, logits, att.weights};
}

template <typename T>
Var decoder_loss(Graph<T>& g, const ParamStore<T>& store, const EncoderOut& enc,
                 std::span<const int> target, Var sos) {
  if (target.empty()) throw InputError("teacher forcing needs a non-empty target");
  std::vector<int> inputs;
  inputs.push_back(corpus::kSos);
  inputs.insert(inputs.end(), target.begin(), target.end());
  const Var input_rows =
      numerics::embedding_lookup(g, g.param(store, kWordEmb), std::span<const int>(inputs));

  std::vector<Var> losses;
  Var s = enc.s0;
  for (std::size_t t = 0; t <= target.size(); ++t) {
    const Var in = (t == 0 && sos.valid()) ? sos : numerics::row(g, input_rows, t);
    const StepOut out = decoder_step(g, store, enc, s, in);
    s = out.s;
    const int gold = t < target.size() ? target[t] : corpus::kEos;
    losses.push_back(numerics::softmax_xent(g, out.logits, gold));
  }
  return numerics::scale(g, numerics::sum_all<T>(g, losses), T{1} / static_cast<T>(losses.size()));
}

template <typename T>
Var teacher_forced_loss(Graph<T>& g, const ParamStore<T>& store, std::span<const int> ids,
                        std::span<const std::uint8_t> mask, std::span<const int> target, Var sos) {
  if (target.empty()) throw InputError("teacher forcing needs a non-empty target");
  return decoder_loss(g, store, encode(g, store, ids, mask), target, sos);
}

template <typename T>
double generator_train_step(ParamStore<T>& store, std::span<const GeneratorExample> batch,
                            const numerics::AdamConfig& adam) {
  if (batch.empty()) return 0.0;
  numerics::GradMap<T> grads;
  const T inv = T{1} / static_cast<T>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    Graph<T> g(true);
    const Var loss = teacher_forced_loss(g, store, ex.ids, ex.mask, ex.target);
    total += static_cast<double>(g.value(loss)[0]);
    g.backward(loss);
    g.accumulate_param_grads(grads, inv);
  }
  numerics::adam_step(store, grads, adam);
  return total / static_cast<double>(batch.size());
}

template <typename T>
double teacher_forced_loss_value(const ParamStore<T>& store, std::span<const int> ids,
                                 std::span<const std::uint8_t> mask, std::span<const int> target) {
  Graph<T> g(false);
  return static_cast<double>(g.value(teacher_forced_loss(g, store, ids, mask, target))[0]);
}

template <typename T>
DecoderSession<T>::DecoderSession(const ParamStore<T>& store, std::span<const int> ids,
                                  std::span<const std::uint8_t> mask)
    : store_(store), mask_(mask.begin(), mask.end()) {
  enc_ = encode(g_, store_, ids, mask);
  E_ = g_.param(store_, kWordEmb);
  vocab_size_ = g_.value(E_).dim(0);
}

template <typename T>
Var DecoderSession<T>::token_input(int token) {
  const int one[] = {token};
  return numerics::row(g_, numerics::embedding_lookup(g_, E_, std::span<const int>(one)), 0);
}

template <typename T>
Var DecoderSession<T>::param_input(const std::string& name) {
  return g_.param(store_, name);
}

template <typename T>
typename DecoderSession<T>::Step DecoderSession<T>::step(Var s, Var input) {
  const StepOut out = decoder_step(g_, store_, enc_, s, input);
  Step st;
  st.s = out.s;
  st.log_probs = log_softmax(g_.value(out.logits));
  const auto& w = g_.value(out.weights);
  st.attention.assign(w.values().begin(), w.values().end());
  return st;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : logits) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

template <typename T>
std::vector<double> log_softmax(const Tensor<T>& logits) {
  std::vector<double> d(logits.values().begin(), logits.values().end());
  return log_softmax(std::span<const double>(d));
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw InputError("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

template <typename T>
Hypothesis greedy_from(DecoderSession<T>& session, Var first_input, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  Hypothesis hyp;
  hyp.mask = session.mask();
  Var s = session.initial_state();
  Var input = first_input;
  hyp.truncated = true;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto st = session.step(s, input);
    const std::size_t tok = argmax_lowest(st.log_probs);
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

template <typename T>
Hypothesis greedy_decode(const ParamStore<T>& store, std::span<const int> ids,
                         std::span<const std::uint8_t> mask, std::size_t max_len,
                         const std::string& sos_param) {
  DecoderSession<T> session(store, ids, mask);
  const Var first = sos_param.empty() ? session.token_input(corpus::kSos) : session.param_input(sos_param);
  return greedy_from(session, first, max_len);
}

template <typename T>
std::vector<Hypothesis> generate_diverse(const ParamStore<T>& selector_store,
                                         const selector::SelectorConfig& selector_cfg,
                                         const ParamStore<T>& generator_store,
                                         std::span<const int> ids, std::size_t max_len) {
  std::vector<Hypothesis> out;
  for (const auto& m : selector::infer_all_focus(selector_store, selector_cfg, ids)) {
    Hypothesis h = greedy_decode(generator_store, ids, m.bits, max_len);
    h.expert = m.expert;
    out.push_back(std::move(h));
  }
  return out;
}

template <typename T>
Hypothesis upper_bound_decode(const ParamStore<T>& store, std::span<const int> ids,
                              const std::optional<std::vector<std::uint8_t>>& guide,
                              std::size_t max_len) {
  if (!guide) throw InputError("upper-bound decoding needs a focus guide");
  return greedy_decode(store, ids, std::span<const std::uint8_t>(*guide), max_len);
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void dump_attention(const Hypothesis& hyp, const corpus::Tokens& source,
                    const corpus::Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot write attention dump " + path.string());
  out << "token";
  for (const auto& s : source) out << ',' << csv_cell(s);
  out << '\n';
  out << std::fixed << std::setprecision(6);
  for (std::size_t t = 0; t < hyp.attention.size(); ++t) {
    if (hyp.attention[t].size() != source.size())
      throw DimensionError("attention row of length " + std::to_string(hyp.attention[t].size()) +
                           " for a source of length " + std::to_string(source.size()));
    out << csv_cell(t < hyp.tokens.size() ? vocab.token(hyp.tokens[t]) : vocab.token(corpus::kEos));
    for (double w : hyp.attention[t]) out << ',' << w;
    out << '\n';
  }
  if (!out) throw FileError("write failed for " + path.string());
}

#define FOCUSMIX_INSTANTIATE_GENERATOR(T)                                                          \
  template void init_generator(ParamStore<T>&, const GeneratorConfig&, std::size_t, Rng&);         \
  template EncoderOut encode(Graph<T>&, const ParamStore<T>&, std::span<const int>,                \
                             std::span<const std::uint8_t>);                                       \
  template StepOut decoder_step(Graph<T>&, const ParamStore<T>&, const EncoderOut&, Var, Var);     \
  template Var teacher_forced_loss(Graph<T>&, const ParamStore<T>&, std::span<const int>,          \
                                   std::span<const std::uint8_t>, std::span<const int>, Var);      \
  template Var decoder_loss(Graph<T>&, const ParamStore<T>&, const EncoderOut&,                   \
                            std::span<const int>, Var);                                            \
  template double generator_train_step(ParamStore<T>&, std::span<const GeneratorExample>,          \
                                       const numerics::AdamConfig&);                               \
  template double teacher_forced_loss_value(const ParamStore<T>&, std::span<const int>,            \
                                            std::span<const std::uint8_t>, std::span<const int>);  \
  template class DecoderSession<T>;                                                                \
  template std::vector<double> log_softmax(const Tensor<T>&);                                      \
  template Hypothesis greedy_from(DecoderSession<T>&, Var, std::size_t);                           \
  template Hypothesis greedy_decode(const ParamStore<T>&, std::span<const int>,                    \
                                    std::span<const std::uint8_t>, std::size_t, const std::string&); \
  template std::vector<Hypothesis> generate_diverse(const ParamStore<T>&,                          \
                                                    const selector::SelectorConfig&,               \
                                                    const ParamStore<T>&, std::span<const int>,    \
                                                    std::size_t);                                  \
  template Hypothesis upper_bound_decode(const ParamStore<T>&, std::span<const int>,               \
                                         const std::optional<std::vector<std::uint8_t>>&,          \
                                         std::size_t);

FOCUSMIX_INSTANTIATE_GENERATOR(float)
FOCUSMIX_INSTANTIATE_GENERATOR(double)

}  // namespace focusmix::generator
