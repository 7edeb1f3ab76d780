#include "focusmix/app/grad_suite.hpp"

#include <functional>

#include "focusmix/decoding/decoding.hpp"
#include "focusmix/generator/generator.hpp"
#include "focusmix/numerics/grad_check.hpp"
#include "focusmix/numerics/ops.hpp"
#include "focusmix/selector/selector.hpp"

namespace focusmix::app {
namespace {

using namespace numerics;
using G = Graph<double>;
using Build = std::function<Var(G&, const ParamStore<double>&)>;

// Fixed random weights reduce an op output to a scalar that sees every entry.
Var probe(G& g, Var x, std::uint64_t seed) {
  const std::size_t n = g.value(x).size();
  Rng rng(seed);
  Tensor<double> w(Shape{1, n});
  for (auto& v : w.values()) v = rng.uniform(-1, 1);
  return linear(g, reshape(g, x, Shape{n}), g.constant(std::move(w)));
}

LossFn loss_of(Build build, bool corrupt) {
  return [build, corrupt](const ParamStore<double>& s, GradMap<double>* grads) {
    G g(grads != nullptr);
    const Var loss = build(g, s);
    if (grads) {
      g.backward(loss);
      *grads = g.param_grads();
      if (corrupt && !grads->empty()) {
        auto& t = grads->begin()->second;
        t[0] = t[0] * 1.5 + 1e-2;
      }
    }
    return g.value(loss)[0];
  };
}

ParamStore<double> random_store(std::initializer_list<std::pair<const char*, Shape>> specs, Rng& rng,
                                double a = 0.8) {
  ParamStore<double> s;
  for (const auto& [name, shape] : specs) s.add_uniform(name, shape, a, rng);
  return s;
}

GradCheckLine check(const std::string& name, ParamStore<double>& store, Build build, bool corrupt) {
  const auto r = grad_check(loss_of(std::move(build), corrupt), store);
  return {name, r.max_rel_error, r.worst_param + "[" + std::to_string(r.worst_index) + "]", r.entries_checked};
}

}  // namespace

std::vector<GradCheckLine> run_grad_suite(std::uint64_t seed, bool corrupt) {
  std::vector<GradCheckLine> out;
  Rng rng(seed);

  {
    auto s = random_store({{"x", {3}}, {"W", {4, 3}}, {"b", {4}}, {"X", {5, 3}}}, rng);
    out.push_back(check("affine/linear/linear_rows/add_row_broadcast", s, [](G& g, const ParamStore<double>& st) {
      const Var y = affine(g, g.param(st, "x"), g.param(st, "W"), g.param(st, "b"));
      const Var z = linear(g, g.param(st, "x"), g.param(st, "W"));
      const Var Y = add_row_broadcast(g, linear_rows(g, g.param(st, "X"), g.param(st, "W")), y);
      const Var parts[] = {probe(g, Y, 1), probe(g, z, 2)};
      return sum_all<double>(g, parts);
    }, corrupt));
  }
  {
    auto s = random_store({{"a", {6}}, {"b", {6}}}, rng, 2.0);
    out.push_back(check("sigmoid/tanh/add/scale/sum_all", s, [](G& g, const ParamStore<double>& st) {
      const Var a = sigmoid(g, g.param(st, "a"));
      const Var b = tanh(g, g.param(st, "b"));
      const Var c = scale(g, add(g, a, b), 1.7);
      const Var parts[] = {probe(g, c, 3), probe(g, a, 4)};
      return sum_all<double>(g, parts);
    }, corrupt));
  }
  {
    auto s = random_store({{"E", {5, 3}}, {"A", {2, 2}}, {"B", {2, 1}}, {"v", {4}}}, rng);
    out.push_back(check("embedding/concat/concat_cols/row/stack_rows/slice/reshape", s,
                        [](G& g, const ParamStore<double>& st) {
      const int ids[] = {4, 1, 4};
      const Var X = embedding_lookup<double>(g, g.param(st, "E"), ids);
      const Var C = concat_cols(g, g.param(st, "A"), g.param(st, "B"));
      const Var parts[] = {row(g, X, 2), slice(g, g.param(st, "v"), 1, 2), row(g, C, 1)};
      const Var cat = concat<double>(g, parts);
      const Var rows[] = {cat, cat};
      return probe(g, reshape(g, stack_rows<double>(g, rows), Shape{2 * 8}), 5);
    }, corrupt));
  }
  {
    ParamStore<double> s;
    init_gru(s, "f", 3, 4, rng);
    init_gru(s, "b", 3, 4, rng);
    s.add_uniform("X", {4, 3}, 1.0, rng);
    s.add_uniform("h", {4}, 1.0, rng);
    randomize_params(s, 0.6, rng);
    out.push_back(check("gru_step/bigru_encode", s, [](G& g, const ParamStore<double>& st) {
      const Var H = bigru_encode(g, gru_vars(g, st, "f"), gru_vars(g, st, "b"), g.param(st, "X"));
      const Var h1 = gru_step(g, gru_vars(g, st, "f"), row(g, g.param(st, "X"), 0), g.param(st, "h"));
      const Var parts[] = {probe(g, H, 6), probe(g, h1, 7)};
      return sum_all<double>(g, parts);
    }, corrupt));
  }
  {
    auto s = random_store({{"s", {3}}, {"H", {4, 2}}, {"W_a", {5, 3}}, {"U_a", {5, 2}}, {"v", {5}}}, rng);
    out.push_back(check("additive_attention/attend", s, [](G& g, const ParamStore<double>& st) {
      const auto a = additive_attention(g, g.param(st, "s"), g.param(st, "H"), g.param(st, "W_a"),
                                        g.param(st, "U_a"), g.param(st, "v"));
      const Var keys = linear_rows(g, g.param(st, "H"), g.param(st, "U_a"));
      const auto b = attend(g, scale(g, g.param(st, "s"), 0.5), g.param(st, "H"), keys, g.param(st, "W_a"),
                            g.param(st, "v"));
      const Var parts[] = {probe(g, a.context, 8), probe(g, b.context, 9)};
      return sum_all<double>(g, parts);
    }, corrupt));
  }
  {
    auto s = random_store({{"l", {6}}, {"p", {5}}}, rng, 2.0);
    out.push_back(check("softmax_xent/bernoulli_nll", s, [](G& g, const ParamStore<double>& st) {
      const std::uint8_t m[] = {1, 0, 0, 1, 1};
      const Var parts[] = {softmax_xent(g, g.param(st, "l"), 3),
                           bernoulli_nll<double>(g, sigmoid(g, g.param(st, "p")), m)};
      return sum_all<double>(g, parts);
    }, corrupt));
  }
  {
    selector::SelectorConfig cfg{.d_w = 4, .d_h = 4, .d_e = 3, .K = 2};
    ParamStore<double> s;
    selector::init_word_embedding(s, 9, cfg.d_w, rng);
    selector::init_selector(s, cfg, 9, rng);
    randomize_params(s, 1.0, rng);
    out.push_back(check("selector loss (S=5, K=2)", s, [cfg](G& g, const ParamStore<double>& st) {
      const int ids[] = {4, 7, 5, 8, 4};
      const std::uint8_t guide[] = {0, 1, 1, 0, 1};
      const auto enc = selector::selector_encode<double>(g, st, ids);
      const Var parts[] = {selector::selector_loss<double>(g, st, cfg, enc, guide, 0),
                           selector::selector_loss<double>(g, st, cfg, enc, guide, 1)};
      return sum_all<double>(g, parts);
    }, corrupt));
  }
  {
    ParamStore<double> s;
    generator::init_generator(s, {.d_w = 4, .d_h = 4, .d_f = 3}, 9, rng);
    randomize_params(s, 1.0, rng);
    out.push_back(check("generator teacher-forced loss (S=4)", s, [](G& g, const ParamStore<double>& st) {
      const int ids[] = {4, 7, 6, 5};
      const std::uint8_t mask[] = {0, 1, 1, 0};
      const int target[] = {8, 5, 4};
      return generator::teacher_forced_loss<double>(g, st, ids, mask, target);
    }, corrupt));
  }
  {
    ParamStore<double> s;
    const generator::GeneratorConfig gc{.d_w = 4, .d_h = 4, .d_f = 3};
    decoding::init_mixture_decoder(s, gc, 2, 9, rng);
    randomize_params(s, 1.0, rng);
    out.push_back(check("mixture-decoder loss (custom start embedding)", s, [](G& g, const ParamStore<double>& st) {
      const int ids[] = {4, 7, 6};
      const std::uint8_t mask[] = {0, 0, 0};
      const int target[] = {5, 8};
      const auto enc = generator::encode<double>(g, st, ids, mask);
      return generator::decoder_loss<double>(g, st, enc, target, g.param(st, decoding::sos_param(1)));
    }, corrupt));
  }
  return out;
}

}  // namespace focusmix::app
