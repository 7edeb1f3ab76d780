#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>

#include "focusmix/decoding/decoding.hpp"
#include "support/oracles.hpp"

using namespace focusmix;
using namespace focusmix::numerics;
using namespace focusmix::decoding;
using generator::DecoderSession;
using namespace focusmix::testing;

TEST_CASE("beam B=1, truncated k=1 and greedy agree on random models") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = random_model(seed, 5 + seed % 6);
    const auto greedy = generator::greedy_decode(m.store, m.ids, m.mask, 7);
    const auto beam = beam_search(m.store, m.ids, m.mask, 1, 7);
    REQUIRE(beam.size() == 1);
    CHECK(same_hyp(beam[0], greedy));
    CHECK(beam[0].attention == greedy.attention);
    CHECK(same_hyp(truncated_sampling(m.store, m.ids, m.mask, 1, seed, 7), greedy));
  }
}

TEST_CASE("diverse beam reductions") {
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    const auto m = random_model(seed, 6 + seed % 4);
    const auto beam4 = beam_search(m.store, m.ids, m.mask, 4, 6);
    // one group: nothing to penalise
    const auto one_group = diverse_beam_search(m.store, m.ids, m.mask, 4, 1, 0.5, 6);
    REQUIRE(one_group.size() == beam4.size());
    for (std::size_t i = 0; i < beam4.size(); ++i) CHECK(same_hyp(one_group[i], beam4[i]));
    // lambda = 0: every group is an independent beam of width B/G
    const auto beam2 = beam_search(m.store, m.ids, m.mask, 2, 6);
    const auto dbs = diverse_beam_search(m.store, m.ids, m.mask, 4, 2, 0.0, 6);
    REQUIRE(dbs.size() == 2 * beam2.size());
    for (std::size_t i = 0; i < dbs.size(); ++i) CHECK(same_hyp(dbs[i], beam2[i % beam2.size()]));
    const auto beam1 = beam_search(m.store, m.ids, m.mask, 1, 6);
    for (const auto& h : diverse_beam_search(m.store, m.ids, m.mask, 3, 3, 0.0, 6)) CHECK(same_hyp(h, beam1[0]));
  }
  const auto m = random_model(1, 6);
  CHECK_THROWS_AS(diverse_beam_search(m.store, m.ids, m.mask, 4, 3), ConfigError);
}

TEST_CASE("large diversity strength forces distinct first tokens") {
  auto m = random_model(7, 9);
  // uniform next-token distribution
  m.store.get("generator.out.W").fill(0);
  m.store.get("generator.out.b").fill(0);
  m.store.get("generator.out_bias").fill(0);
  const auto hyps = diverse_beam_search(m.store, m.ids, m.mask, 5, 5, 1000.0, 4);
  REQUIRE(hyps.size() == 5);
  std::vector<int> first;
  for (const auto& h : hyps) first.push_back(h.tokens.empty() ? corpus::kEos : h.tokens[0]);
  std::sort(first.begin(), first.end());
  CHECK(std::adjacent_find(first.begin(), first.end()) == first.end());
  // without the penalty every group takes the same argmax
  const auto plain = diverse_beam_search(m.store, m.ids, m.mask, 5, 5, 0.0, 4);
  for (const auto& h : plain) CHECK(h.tokens == plain[0].tokens);
}

TEST_CASE("beam search matches exhaustive enumeration") {
  for (std::uint64_t seed = 200; seed < 230; ++seed) {
    const std::size_t V = 4 + seed % 2;  // 4 or 5
    const std::size_t T = 1 + seed % 3;  // 1..3
    const auto m = random_model(seed, V);
    const auto all = enumerate_all(m, T);
    std::size_t B = 1;
    for (std::size_t i = 0; i < T; ++i) B *= V;
    const auto beam = beam_search(m.store, m.ids, m.mask, B, T);
    REQUIRE(beam.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      CHECK(beam[i].tokens == all[i].tokens);
      CHECK(beam[i].log_prob == doctest::Approx(all[i].log_prob).epsilon(1e-12));
      CHECK(beam[i].truncated == all[i].truncated);
    }
    // smaller beams on this model still return a sorted top list
    const auto b3 = beam_search(m.store, m.ids, m.mask, 3, T);
    CHECK(b3.size() <= 3);
    for (std::size_t i = 1; i < b3.size(); ++i) CHECK(b3[i - 1].log_prob >= b3[i].log_prob);
    if (T == 1) {
      for (std::size_t i = 0; i < b3.size(); ++i) CHECK(b3[i].tokens == all[i].tokens);
    }
  }
}

TEST_CASE("all strategies respect max_len and stop at EOS") {
  for (std::uint64_t seed = 300; seed < 320; ++seed) {
    const auto m = random_model(seed, 8);
    std::vector<Hypothesis> hyps = beam_search(m.store, m.ids, m.mask, 3, 5);
    for (auto& h : diverse_beam_search(m.store, m.ids, m.mask, 3, 3, 0.5, 5)) hyps.push_back(h);
    hyps.push_back(truncated_sampling(m.store, m.ids, m.mask, 10, seed, 5));
    for (const auto& h : hyps) {
      CHECK(h.tokens.size() <= 5);
      CHECK(std::find(h.tokens.begin(), h.tokens.end(), corpus::kEos) == h.tokens.end());
      CHECK(h.attention.size() == h.tokens.size() + (h.truncated ? 0 : 1));
      CHECK(h.log_prob <= 0.0);
      if (h.truncated) CHECK(h.tokens.size() == 5);
    }
  }
}

TEST_CASE("top-k sampling") {
  const std::vector<double> lp{std::log(0.7), std::log(0.2), std::log(0.1)};
  Rng rng(42);
  std::size_t counts[3] = {0, 0, 0};
  for (int i = 0; i < 10000; ++i) ++counts[sample_top_k(lp, 2, rng)];
  CHECK(counts[2] == 0);
  const double ratio = static_cast<double>(counts[0]) / static_cast<double>(counts[1]);
  CHECK(ratio == doctest::Approx(3.5).epsilon(0.05));

  SUBCASE("k = V is plain ancestral sampling") {
    Rng r2(43);
    std::size_t c[3] = {0, 0, 0};
    for (int i = 0; i < 20000; ++i) ++c[sample_top_k(lp, 3, r2)];
    CHECK(static_cast<double>(c[0]) / 20000 == doctest::Approx(0.7).epsilon(0.03));
    CHECK(static_cast<double>(c[2]) / 20000 == doctest::Approx(0.1).epsilon(0.1));
  }
  SUBCASE("k = 1 is argmax with low-id ties") {
    Rng r3(1);
    CHECK(sample_top_k(std::vector<double>{-1.0, -0.5, -0.5}, 1, r3) == 1);
  }
  SUBCASE("seeded determinism") {
    const auto m = random_model(5, 10);
    const auto a = truncated_sampling(m.store, m.ids, m.mask, 10, 77, 8);
    const auto b = truncated_sampling(m.store, m.ids, m.mask, 10, 77, 8);
    CHECK(same_hyp(a, b));
    bool differs = false;
    for (std::uint64_t s = 0; s < 20 && !differs; ++s)
      differs = truncated_sampling(m.store, m.ids, m.mask, 10, s, 8).tokens != a.tokens;
    CHECK(differs);
  }
}

TEST_CASE("mixture decoder hard-EM") {
  ParamStore<float> store;
  Rng rng(9);
  init_mixture_decoder(store, {.d_w = 8, .d_h = 8, .d_f = 3}, 3, 12, rng);
  CHECK(store.contains("mixdec.sos_emb.1"));
  CHECK(store.contains("mixdec.sos_emb.3"));

  std::vector<MixtureExample> data;
  for (int i = 0; i < 6; ++i) {
    MixtureExample ex;
    for (int t = 0; t < 4; ++t) ex.ids.push_back(4 + static_cast<int>(rng.index(8)));
    for (int t = 0; t < 3; ++t) ex.target.push_back(4 + static_cast<int>(rng.index(8)));
    data.push_back(ex);
  }
  std::size_t isolated = 0;
  for (int step = 0; step < 40; ++step) {
    std::vector<MixtureExample> batch{data[step % 6]};
    std::vector<Tensor<float>> before;
    for (std::size_t z = 0; z < 3; ++z) before.push_back(store.get(sos_param(z)));
    const auto r = mixture_decoder_train_step(store, 3, std::span<const MixtureExample>(batch));
    REQUIRE(r.chosen.size() == 1);
    for (std::size_t z = 0; z < 3; ++z) {
      const auto& after = store.get(sos_param(z));
      const bool same = std::memcmp(after.data(), before[z].data(), after.size() * sizeof(float)) == 0;
      if (z != r.chosen[0]) {
        CHECK(same);
        ++isolated;
      } else {
        CHECK_FALSE(same);
      }
    }
  }
  CHECK(isolated == 80);

  const auto a = mixture_decoder_generate(store, 3, data[0].ids, 6);
  const auto b = mixture_decoder_generate(store, 3, data[0].ids, 6);
  REQUIRE(a.size() == 3);
  for (std::size_t z = 0; z < 3; ++z) {
    CHECK(a[z].expert == z);
    CHECK(same_hyp(a[z], b[z]));
    CHECK(a[z].mask == Bits(4, 0));
  }
  SUBCASE("identical start rows give identical outputs") {
    store.get(sos_param(1)) = store.get(sos_param(0));
    store.get(sos_param(2)) = store.get(sos_param(0));
    const auto c = mixture_decoder_generate(store, 3, data[1].ids, 6);
    CHECK(same_hyp(c[0], c[1]));
    CHECK(same_hyp(c[0], c[2]));
  }
  SUBCASE("K=1 always chooses the only expert") {
    const auto r = mixture_decoder_train_step(store, 1, std::span<const MixtureExample>(data));
    CHECK(r.chosen == std::vector<std::size_t>(6, 0));
    CHECK(mixture_decoder_generate(store, 1, data[0].ids, 6).size() == 1);
  }
}
