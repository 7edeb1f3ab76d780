#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "focusmix/numerics/adam.hpp"
#include "focusmix/numerics/checkpoint.hpp"
#include "focusmix/numerics/grad_check.hpp"
#include "focusmix/numerics/ops.hpp"

using namespace focusmix;
using namespace focusmix::numerics;

namespace {

using G = Graph<double>;

Tensor<double> vec(std::vector<double> v) { return Tensor<double>::vector(std::move(v)); }

ParamStore<double> random_store(std::initializer_list<std::pair<const char*, Shape>> specs,
                                std::uint64_t seed, double a = 0.8) {
  Rng rng(seed);
  ParamStore<double> s;
  for (const auto& [name, shape] : specs) s.add_uniform(name, shape, a, rng);
  return s;
}

// Wraps a graph builder into a LossFn for grad_check.
LossFn loss_of(std::function<Var(G&, const ParamStore<double>&)> build) {
  return [build](const ParamStore<double>& s, GradMap<double>* grads) {
    G g(grads != nullptr);
    const Var loss = build(g, s);
    if (grads) {
      g.backward(loss);
      *grads = g.param_grads();
    }
    return g.value(loss)[0];
  };
}

// Reduces any tensor to a scalar with fixed random weights so every entry
// of the op output reaches the loss.
Var probe(G& g, Var x, std::uint64_t seed) {
  const auto& shape = g.value(x).shape();
  Rng rng(seed);
  Tensor<double> w(Shape{shape_size(shape)});
  for (auto& v : w.values()) v = rng.uniform(-1, 1);
  const Var flat = reshape(g, x, Shape{shape_size(shape)});
  const Var W = g.constant(Tensor<double>(Shape{1, w.size()}, w.storage()));
  return linear(g, flat, W);
}

}  // namespace

TEST_CASE("affine forward anchors") {
  Graph<float> g(false);
  auto W = g.constant(Tensor<float>::matrix(2, 2, {1, 2, 3, 4}));
  auto x = g.constant(Tensor<float>::vector({1, 1}));
  auto b = g.constant(Tensor<float>::vector({0, 0}));
  CHECK(g.value(affine(g, x, W, b)).storage() == std::vector<float>{3, 7});

  auto I = g.constant(Tensor<float>::matrix(2, 2, {1, 0, 0, 1}));
  auto y = g.constant(Tensor<float>::vector({-2.5f, 9}));
  CHECK(g.value(affine(g, y, I, b)).storage() == std::vector<float>{-2.5f, 9});

  auto Z = g.constant(Tensor<float>::matrix(1, 1, {0}));
  auto five = g.constant(Tensor<float>::vector({5}));
  auto nine = g.constant(Tensor<float>::vector({9}));
  CHECK(g.value(affine(g, nine, Z, five))[0] == 5.0f);
}

TEST_CASE("affine shape mismatch names both shapes") {
  Graph<float> g;
  auto W = g.constant(Tensor<float>(Shape{2, 3}));
  auto x = g.constant(Tensor<float>(Shape{2}));
  try {
    affine(g, x, W, Var{});
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2]") != std::string::npos);
  }
}

TEST_CASE("sigmoid and tanh anchors and saturation") {
  Graph<double> g(false);
  auto x = g.constant(vec({0.0, std::log(3.0), 800.0, -800.0}));
  const auto& s = g.value(sigmoid(g, x));
  CHECK(s[0] == 0.5);
  CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-15));
  for (double v : s.values()) {
    CHECK(std::isfinite(v));
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  const auto& t = g.value(tanh(g, x));
  CHECK(t[0] == 0.0);
  CHECK(std::isfinite(t[2]));

  Graph<float> gf(false);
  auto xf = gf.constant(Tensor<float>::vector({100.0f, -100.0f}));
  for (float v : gf.value(sigmoid(gf, xf)).values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("embedding lookup") {
  Graph<float> g(false);
  auto E = g.constant(Tensor<float>::matrix(2, 2, {1, 2, 3, 4}));
  const int ids[] = {1, 0};
  CHECK(g.value(embedding_lookup<float>(g, E, ids)).storage() == std::vector<float>{3, 4, 1, 2});
  const int same[] = {0, 0};
  CHECK(g.value(embedding_lookup<float>(g, E, same)).storage() == std::vector<float>{1, 2, 1, 2});
  const auto& empty = g.value(embedding_lookup<float>(g, E, {}));
  CHECK(empty.shape() == Shape{0, 2});
  const int bad[] = {2};
  try {
    embedding_lookup<float>(g, E, bad);
    FAIL("expected IndexError");
  } catch (const IndexError& e) {
    CHECK(std::string(e.what()).find("id 2") != std::string::npos);
  }
}

TEST_CASE("gru_step closed forms") {
  ParamStore<double> zero;
  for (const char* n : {"W_r", "W_z", "W_n"}) zero.add_zeros(std::string("gru.") + n, {3, 2});
  for (const char* n : {"U_r", "U_z", "U_n"}) zero.add_zeros(std::string("gru.") + n, {3, 3});
  for (const char* n : {"b_r", "b_z", "b_n"}) zero.add_zeros(std::string("gru.") + n, {3});
  G g(false);
  const auto p = gru_vars(g, zero, "gru");
  const auto x = g.constant(vec({0.3, -1.2}));
  const auto h = g.constant(vec({0.4, -0.6, 2.0}));
  CHECK(g.value(gru_step(g, p, x, h)).storage() == std::vector<double>{0.2, -0.3, 1.0});
  const auto h0 = g.constant(vec({0, 0, 0}));
  CHECK(g.value(gru_step(g, p, x, h0)).storage() == std::vector<double>{0, 0, 0});

  // Single unit with hand-picked scalars; expected value from the four gate equations.
  ParamStore<double> one;
  auto put = [&](const char* n, double v, Shape s) { one.add(std::string("gru.") + n, Tensor<double>(s, {v})); };
  put("W_r", 0.5, {1, 1});
  put("U_r", -0.3, {1, 1});
  put("b_r", 0.1, {1});
  put("W_z", 0.2, {1, 1});
  put("U_z", 0.4, {1, 1});
  put("b_z", -0.2, {1});
  put("W_n", 0.7, {1, 1});
  put("U_n", 0.6, {1, 1});
  put("b_n", 0.05, {1});
  G g1(false);
  const auto p1 = gru_vars(g1, one, "gru");
  const auto out = gru_step(g1, p1, g1.constant(vec({1.5})), g1.constant(vec({0.8})));
  CHECK(g1.value(out)[0] == doctest::Approx(0.8347779902472797).epsilon(1e-14));
}

TEST_CASE("bigru_encode structure") {
  Rng rng(3);
  ParamStore<double> s;
  init_gru(s, "f", 2, 3, rng);
  init_gru(s, "b", 2, 3, rng);

  SUBCASE("single step equals one gru_step per direction") {
    G g(false);
    const auto fwd = gru_vars(g, s, "f");
    const auto bwd = gru_vars(g, s, "b");
    const auto X = g.constant(Tensor<double>(Shape{1, 2}, {0.5, -0.25}));
    const auto H = g.value(bigru_encode(g, fwd, bwd, X));
    const auto x = g.constant(vec({0.5, -0.25}));
    const auto z = g.constant(vec({0, 0, 0}));
    const auto a = g.value(gru_step(g, fwd, x, z));
    const auto b = g.value(gru_step(g, bwd, x, z));
    REQUIRE(H.shape() == Shape{1, 6});
    for (int i = 0; i < 3; ++i) {
      CHECK(H[i] == a[i]);
      CHECK(H[3 + i] == b[i]);
    }
  }

  SUBCASE("reversed input with swapped directions mirrors rows") {
    const std::vector<double> rows = {0.1, 0.2, -0.3, 0.4, 0.9, -0.7, 0.05, 0.0};
    std::vector<double> rev;
    for (int t = 3; t >= 0; --t) rev.insert(rev.end(), rows.begin() + 2 * t, rows.begin() + 2 * t + 2);
    G g(false);
    const auto f = gru_vars(g, s, "f");
    const auto b = gru_vars(g, s, "b");
    const auto H = g.value(bigru_encode(g, f, b, g.constant(Tensor<double>(Shape{4, 2}, rows))));
    const auto R = g.value(bigru_encode(g, b, f, g.constant(Tensor<double>(Shape{4, 2}, rev))));
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(H.at(t, j) == R.at(3 - t, 3 + j));
        CHECK(H.at(t, 3 + j) == R.at(3 - t, j));
      }
  }

  SUBCASE("all-zero weights give zero rows") {
    ParamStore<double> z;
    init_gru(z, "f", 2, 3, rng);
    init_gru(z, "b", 2, 3, rng);
    for (auto& [name, e] : z) e.value.fill(0.0);
    G g(false);
    const auto H = g.value(bigru_encode(g, gru_vars(g, z, "f"), gru_vars(g, z, "b"),
                                        g.constant(Tensor<double>(Shape{3, 2}, 1.0))));
    for (double v : H.values()) CHECK(v == 0.0);
  }

  SUBCASE("empty input rejected") {
    G g(false);
    CHECK_THROWS_AS(bigru_encode(g, gru_vars(g, s, "f"), gru_vars(g, s, "b"),
                                 g.constant(Tensor<double>(Shape{0, 2}))),
                    InputError);
  }
}

TEST_CASE("additive attention") {
  Rng rng(11);
  ParamStore<double> s;
  s.add_uniform("W_a", {4, 3}, 0.5, rng);
  s.add_uniform("U_a", {4, 2}, 0.5, rng);
  s.add_uniform("v", {4}, 0.5, rng);
  s.add_zeros("v0", {4});
  G g(false);
  const auto W = g.param(s, "W_a");
  const auto U = g.param(s, "U_a");
  const auto st = g.constant(vec({0.2, -0.1, 0.7}));

  const auto H1 = g.constant(Tensor<double>(Shape{1, 2}, {0.3, -0.8}));
  const auto one = additive_attention(g, st, H1, W, U, g.param(s, "v"));
  CHECK(g.value(one.weights)[0] == 1.0);
  CHECK(g.value(one.context).storage() == std::vector<double>{0.3, -0.8});

  const auto H3 = g.constant(Tensor<double>(Shape{3, 2}, {0.3, -0.8, 1.0, 0.5, -0.2, 0.1}));
  const auto flat = additive_attention(g, st, H3, W, U, g.param(s, "v0"));
  for (double w : g.value(flat.weights).values()) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const auto Hdup = g.constant(Tensor<double>(Shape{3, 2}, {0.3, -0.8, 0.3, -0.8, 2.0, 1.0}));
  const auto dup = additive_attention(g, st, Hdup, W, U, g.param(s, "v"));
  const auto& w = g.value(dup.weights);
  CHECK(w[0] == w[1]);
  double sum = 0;
  for (double x : w.values()) {
    CHECK(x >= 0.0);
    sum += x;
  }
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("softmax cross-entropy anchors") {
  G g(false);
  CHECK(g.value(softmax_xent(g, g.constant(vec({0.3, 0.3, 0.3, 0.3})), 2))[0] ==
        doctest::Approx(1.3862943611198906).epsilon(1e-14));
  CHECK(g.value(softmax_xent(g, g.constant(vec({1000, 0, 0})), 0))[0] == doctest::Approx(0.0));
  CHECK(g.value(softmax_xent(g, g.constant(vec({1, 0})), 1))[0] ==
        doctest::Approx(1.3132616875182228).epsilon(1e-14));
  CHECK_THROWS_AS(softmax_xent(g, g.constant(vec({1, 0})), 2), IndexError);
  CHECK_THROWS_AS(softmax_xent(g, g.constant(vec({1, 0})), -1), IndexError);
}

TEST_CASE("bernoulli nll anchors") {
  G g(false);
  const std::uint8_t m01[] = {0, 1};
  CHECK(g.value(bernoulli_nll<double>(g, g.constant(vec({0.5, 0.5})), m01))[0] ==
        doctest::Approx(1.3862943611198906).epsilon(1e-14));
  const std::uint8_t m1[] = {1};
  CHECK(g.value(bernoulli_nll<double>(g, g.constant(vec({1 - 1e-7})), m1))[0] ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(g.value(bernoulli_nll<double>(g, g.constant(vec({1.0})), m1))[0] < 1e-6);
  const std::uint8_t m10[] = {1, 0};
  CHECK(g.value(bernoulli_nll<double>(g, g.constant(vec({0.75, 0.25})), m10))[0] ==
        doctest::Approx(0.5753641449035618).epsilon(1e-14));
  CHECK_THROWS_AS(bernoulli_nll<double>(g, g.constant(vec({0.5})), m10), DimensionError);
}

TEST_CASE("adam step") {
  SUBCASE("first step on scalar") {
    ParamStore<float> s;
    s.add("p", Tensor<float>::scalar(0.0f));
    GradMap<float> grads;
    grads.emplace("p", Tensor<float>::scalar(1.0f));
    adam_step(s, grads);
    CHECK(s.get("p")[0] == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(s.entry("p").step == 1);
  }
  SUBCASE("absent and zero gradients leave parameters byte-identical") {
    Rng rng(5);
    ParamStore<float> s;
    s.add_uniform("a", {3}, 1.0, rng);
    s.add_uniform("b", {2, 2}, 1.0, rng);
    GradMap<float> warm;
    warm.emplace("a", Tensor<float>::vector({0.5f, -1.0f, 2.0f}));
    warm.emplace("b", Tensor<float>(Shape{2, 2}, 0.3f));
    adam_step(s, warm);
    const auto before_a = s.entry("a");
    const auto before_b = s.entry("b");
    GradMap<float> only_b;
    only_b.emplace("b", Tensor<float>(Shape{2, 2}, 0.0f));
    adam_step(s, only_b);
    CHECK(s.entry("a").value == before_a.value);
    CHECK(s.entry("a").m == before_a.m);
    CHECK(s.entry("a").v == before_a.v);
    CHECK(s.entry("a").step == before_a.step);
    CHECK(s.entry("b").value == before_b.value);
    CHECK(s.entry("b").step == before_b.step);
  }
  SUBCASE("shape mismatch") {
    ParamStore<float> s;
    s.add("p", Tensor<float>(Shape{3}));
    GradMap<float> grads;
    grads.emplace("p", Tensor<float>(Shape{2}));
    CHECK_THROWS_AS(adam_step(s, grads), DimensionError);
  }
}

TEST_CASE("grad_check on an exact quadratic") {
  auto s = random_store({{"p", {5}}, {"q", {2, 2}}}, 1);
  LossFn half_sq = [](const ParamStore<double>& st, GradMap<double>* grads) {
    double l = 0;
    for (const auto& [name, e] : st) {
      for (double v : e.value.values()) l += 0.5 * v * v;
      if (grads) grads->emplace(name, e.value);
    }
    return l;
  };
  CHECK(grad_check(half_sq, s).max_rel_error < 1e-8);
}

TEST_CASE("grad_check reports a corrupted gradient and non-finite losses") {
  auto s = random_store({{"p", {3}}}, 2);
  LossFn wrong = [](const ParamStore<double>& st, GradMap<double>* grads) {
    double l = 0;
    for (double v : st.get("p").values()) l += v * v;
    if (grads) grads->emplace("p", st.get("p"));  // should be 2p
    return l;
  };
  CHECK(grad_check(wrong, s).max_rel_error > 0.1);
  LossFn bad = [](const ParamStore<double>& st, GradMap<double>*) {
    return st.get("p")[1] > 10 ? 0.0 : std::log(-1.0);
  };
  try {
    grad_check(bad, s);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(std::string(e.what()).find("unperturbed") != std::string::npos);
  }
}

TEST_CASE("finite-difference agreement for every op") {
  const double tol = 1e-4;
  SUBCASE("affine / linear_rows / add_row_broadcast") {
    auto s = random_store({{"x", {3}}, {"W", {4, 3}}, {"b", {4}}, {"X", {5, 3}}}, 7);
    auto r = grad_check(loss_of([](G& g, const ParamStore<double>& st) {
      auto y = affine(g, g.param(st, "x"), g.param(st, "W"), g.param(st, "b"));
      auto Y = add_row_broadcast(g, linear_rows(g, g.param(st, "X"), g.param(st, "W")), y);
      return probe(g, Y, 1);
    }), s);
    CHECK(r.max_rel_error < tol);
  }
  SUBCASE("sigmoid / tanh / add / scale / sum") {
    auto s = random_store({{"a", {6}}, {"b", {6}}}, 8, 2.0);
    auto r = grad_check(loss_of([](G& g, const ParamStore<double>& st) {
      auto a = sigmoid(g, g.param(st, "a"));
      auto b = tanh(g, g.param(st, "b"));
      auto c = scale(g, add(g, a, b), 1.7);
      const Var parts[] = {probe(g, c, 2), probe(g, a, 3)};
      return sum_all<double>(g, parts);
    }), s);
    CHECK(r.max_rel_error < tol);
  }
  SUBCASE("concat / concat_cols / row / stack_rows / slice / embedding") {
    auto s = random_store({{"E", {5, 3}}, {"A", {2, 2}}, {"B", {2, 1}}, {"v", {4}}}, 9);
    auto r = grad_check(loss_of([](G& g, const ParamStore<double>& st) {
      const int ids[] = {4, 1, 4};
      auto X = embedding_lookup<double>(g, g.param(st, "E"), ids);
      auto r1 = row(g, X, 2);
      auto C = concat_cols(g, g.param(st, "A"), g.param(st, "B"));
      const Var parts[] = {r1, slice(g, g.param(st, "v"), 1, 2), row(g, C, 1)};
      auto cat = concat<double>(g, parts);
      const Var rows[] = {cat, cat};
      return probe(g, stack_rows<double>(g, rows), 4);
    }), s);
    CHECK(r.max_rel_error < tol);
  }
  SUBCASE("gru_step and bigru_encode") {
    Rng rng(10);
    ParamStore<double> s;
    init_gru(s, "f", 3, 4, rng);
    init_gru(s, "b", 3, 4, rng);
    for (auto& [n, e] : s)
      for (auto& v : e.value.values()) v += rng.uniform(-0.3, 0.3);  // non-zero biases too
    s.add_uniform("X", {4, 3}, 1.0, rng);
    s.add_uniform("h", {4}, 1.0, rng);
    auto r = grad_check(loss_of([](G& g, const ParamStore<double>& st) {
      auto H = bigru_encode(g, gru_vars(g, st, "f"), gru_vars(g, st, "b"), g.param(st, "X"));
      auto h1 = gru_step(g, gru_vars(g, st, "f"), row(g, g.param(st, "X"), 0), g.param(st, "h"));
      const Var parts[] = {probe(g, H, 5), probe(g, h1, 6)};
      return sum_all<double>(g, parts);
    }), s);
    CHECK(r.max_rel_error < tol);
  }
  SUBCASE("additive attention") {
    auto s = random_store({{"s", {3}}, {"H", {4, 2}}, {"W_a", {5, 3}}, {"U_a", {5, 2}}, {"v", {5}}}, 12);
    auto r = grad_check(loss_of([](G& g, const ParamStore<double>& st) {
      auto out = additive_attention(g, g.param(st, "s"), g.param(st, "H"), g.param(st, "W_a"),
                                    g.param(st, "U_a"), g.param(st, "v"));
      return probe(g, out.context, 7);
    }), s);
    CHECK(r.max_rel_error < tol);
  }
  SUBCASE("softmax_xent and bernoulli_nll") {
    auto s = random_store({{"l", {6}}, {"p", {5}}}, 13, 2.0);
    auto r = grad_check(loss_of([](G& g, const ParamStore<double>& st) {
      const std::uint8_t m[] = {1, 0, 0, 1, 1};
      const Var parts[] = {softmax_xent(g, g.param(st, "l"), 3),
                           bernoulli_nll<double>(g, sigmoid(g, g.param(st, "p")), m)};
      return sum_all<double>(g, parts);
    }), s);
    CHECK(r.max_rel_error < tol);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(21);
  ParamStore<float> s;
  s.add_uniform("shared.word_emb", {7, 3}, 1.0, rng);
  s.add_uniform("selector.expert_emb.1", {3}, 0.1, rng);
  s.add("neg", Tensor<float>::vector({-0.0f, 1e-38f, 3.0e38f}));
  const auto dir = std::filesystem::temp_directory_path() / "focusmix_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "m.ckpt").string();
  CheckpointInfo info;
  info.config_hash = fnv1a_hex("cfg");
  info.step = 42;
  info.meta["vocab"] = {"<pad>", "a"};
  save_checkpoint(path, s, info);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.info.step == 42);
  CHECK(loaded.info.config_hash == info.config_hash);
  CHECK(loaded.info.meta["vocab"][1] == "a");
  REQUIRE(loaded.store.names() == s.names());
  for (const auto& name : s.names()) CHECK(loaded.store.get(name) == s.get(name));

  std::ifstream in(path, std::ios::binary);
  std::string head;
  std::getline(in, head);
  const auto header = nlohmann::json::parse(head);
  CHECK(header["format"] == "focusmix-ckpt-1");
  CHECK(header["params"][0]["dtype"] == "f32");

  {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "{\"format\":\"other\"}\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("rng is deterministic and portable") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  // First mt19937_64 output for the default seed is fixed by the standard.
  Rng d(5489);
  CHECK(d.next_u64() == 14514284786278117030ULL);
  Rng c(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.index(7) < 7);
  }
}
