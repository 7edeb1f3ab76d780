// Runs the eight acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is 0 only when every selected criterion passes.
//
//   acceptance [--only N[,N...]] [--work DIR] [--epochs E] [--seed S]
// --seed changes the synthetic data and training seed of criteria 5-7.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "focusmix/app/alignment.hpp"
#include "focusmix/app/generate.hpp"
#include "focusmix/app/grad_suite.hpp"
#include "focusmix/app/train.hpp"
#include "focusmix/corpus/synthetic.hpp"
#include "focusmix/decoding/decoding.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace focusmix;
using namespace focusmix::app;
using namespace focusmix::testing;
using Clock = std::chrono::steady_clock;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1 ---------------------------------------------------------------------

Result gradient_suite() {
  const auto t0 = Clock::now();
  const auto lines = run_grad_suite(1);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string where;
  for (const auto& l : lines)
    if (l.max_rel_error >= worst) {
      worst = l.max_rel_error;
      where = l.name;
    }
  const bool pass = worst < kGradTolerance && secs < 60.0;
  return {pass, fmt("%zu checks, max rel err %.2e (%s), %.2fs", lines.size(), worst, where.c_str(), secs)};
}

// ---- 2 ---------------------------------------------------------------------

Result metric_oracles() {
  numerics::Rng rng(2);
  double worst = 0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t alphabet = 2 + rng.index(5), n = 1 + rng.index(5);
    std::vector<Tokens> hyps, refs;
    for (std::size_t i = 0; i < n; ++i) {
      hyps.push_back(random_tokens(rng, 9, alphabet));
      refs.push_back(random_tokens(rng, 9, alphabet));
    }
    if (std::all_of(hyps.begin(), hyps.end(), [](const Tokens& t) { return t.empty(); })) hyps[0] = {"a"};
    worst = std::max(worst, std::abs(eval::bleu4_corpus(hyps, refs) - brute_bleu_corpus(hyps, refs)));
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(eval::bleu4_sentence(hyps[i], refs[i]) - brute_bleu_sentence(hyps[i], refs[i])));
      worst = std::max(worst, std::abs(eval::rouge2_f1(hyps[i], refs[i]) - brute_rouge2(hyps[i], refs[i])));
    }
  }
  const std::vector<Tokens> h{split("the cat sat on the mat")}, r{split("the cat sat on a mat")};
  const double bleu = eval::bleu4_corpus(h, r);
  const double rouge = eval::rouge2_f1(split("a b c d"), split("a b c e"));
  const double sent = eval::bleu4_sentence(split("a b c d"), split("a b c d e"));
  const bool anchors = std::abs(bleu - 0.5373) < 5e-5 && std::abs(rouge - 0.6667) < 5e-5 && std::abs(sent - 0.7788) < 5e-5;
  return {worst < 1e-9 && anchors,
          fmt("100 random cases, max |diff| %.1e; anchors BLEU %.4f ROUGE-2 %.4f sentence BLEU %.4f", worst, bleu,
              rouge, sent)};
}

// ---- 3 ---------------------------------------------------------------------

Result decoding_equivalences() {
  std::size_t mismatches = 0, models = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = random_model(1000 + seed, 5 + seed % 6);
    ++models;
    const auto greedy = generator::greedy_decode(m.store, m.ids, m.mask, 8);
    const auto beam1 = decoding::beam_search(m.store, m.ids, m.mask, 1, 8);
    const auto trunc1 = decoding::truncated_sampling(m.store, m.ids, m.mask, 1, seed, 8);
    mismatches += !(beam1.size() == 1 && same_hyp(beam1[0], greedy));
    mismatches += !same_hyp(trunc1, greedy);
    // lambda = 0: every group of width B/G equals an independent beam of that width
    const auto beam2 = decoding::beam_search(m.store, m.ids, m.mask, 2, 8);
    const auto dbs = decoding::diverse_beam_search(m.store, m.ids, m.mask, 6, 3, 0.0, 8);
    bool ok = dbs.size() == 3 * beam2.size();
    for (std::size_t i = 0; ok && i < dbs.size(); ++i) ok = same_hyp(dbs[i], beam2[i % beam2.size()]);
    const auto beam4 = decoding::beam_search(m.store, m.ids, m.mask, 4, 8);
    const auto one_group = decoding::diverse_beam_search(m.store, m.ids, m.mask, 4, 1, 0.0, 8);
    ok = ok && one_group.size() == beam4.size();
    for (std::size_t i = 0; ok && i < beam4.size(); ++i) ok = same_hyp(one_group[i], beam4[i]);
    mismatches += !ok;
  }
  std::size_t enum_cases = 0, enum_fail = 0;
  for (std::size_t V = 4; V <= 5; ++V)
    for (std::size_t T = 1; T <= 3; ++T)
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto m = random_model(5000 + 100 * V + 10 * T + seed, V);
        const auto all = enumerate_all(m, T);
        std::size_t B = 1;
        for (std::size_t i = 0; i < T; ++i) B *= V;
        const auto beam = decoding::beam_search(m.store, m.ids, m.mask, B, T);
        bool ok = beam.size() == std::min(B, all.size());
        for (std::size_t i = 0; ok && i < beam.size(); ++i)
          ok = std::abs(beam[i].log_prob - all[i].log_prob) < 1e-9;
        // the beam's set of outputs is exactly the enumerated top-B
        std::set<std::vector<int>> got, want;
        for (std::size_t i = 0; ok && i < beam.size(); ++i) {
          got.insert(beam[i].tokens);
          want.insert(all[i].tokens);
        }
        ok = ok && (got == want || std::abs(beam.back().log_prob - all[beam.size()].log_prob) < 1e-12);
        ++enum_cases;
        enum_fail += !ok;
      }
  return {mismatches == 0 && enum_fail == 0,
          fmt("%zu random models, %zu mismatches; exhaustive V<=5 T<=3: %zu/%zu cases agree", models, mismatches,
              enum_cases - enum_fail, enum_cases)};
}

// ---- 4 ---------------------------------------------------------------------

bool bytes_equal(const numerics::Tensor<float>& a, const numerics::Tensor<float>& b) {
  return a.size() == b.size() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(float)) == 0;
}

Result hard_em_isolation() {
  const std::size_t K = 3, V = 12;
  numerics::Rng rng(4);
  std::size_t checks = 0, violations = 0, moved = 0;

  numerics::ParamStore<float> sel;
  const selector::SelectorConfig scfg{.d_w = 6, .d_h = 6, .d_e = 4, .K = K};
  selector::init_word_embedding(sel, V, scfg.d_w, rng);
  selector::init_selector(sel, scfg, V, rng);
  numerics::ParamStore<float> mix;
  decoding::init_mixture_decoder(mix, {.d_w = 6, .d_h = 6, .d_f = 3}, K, V, rng);

  auto random_ids = [&](std::size_t S) {
    std::vector<int> ids;
    for (std::size_t i = 0; i < S; ++i) ids.push_back(4 + static_cast<int>(rng.index(V - 4)));
    return ids;
  };

  for (int step = 0; step < 1000; ++step) {
    std::vector<selector::SelectorExample> batch;
    for (std::size_t b = 0; b < 1 + rng.index(2); ++b) {
      auto ids = random_ids(2 + rng.index(5));
      Bits g(ids.size());
      for (auto& x : g) x = static_cast<std::uint8_t>(rng.index(2));
      batch.push_back({std::move(ids), std::move(g)});
    }
    std::vector<numerics::Tensor<float>> before;
    for (std::size_t z = 0; z < K; ++z) before.push_back(sel.get(selector::expert_param(z)));
    const auto r = selector::selector_train_step(sel, scfg, std::span<const selector::SelectorExample>(batch),
                                                 {.lr = 0.01});
    for (std::size_t z = 0; z < K; ++z) {
      const bool chosen = std::find(r.chosen.begin(), r.chosen.end(), z) != r.chosen.end();
      const bool same = bytes_equal(before[z], sel.get(selector::expert_param(z)));
      if (!chosen) {
        ++checks;
        violations += !same;
      } else {
        moved += !same;
      }
    }
  }
  for (int step = 0; step < 1000; ++step) {
    std::vector<decoding::MixtureExample> batch;
    for (std::size_t b = 0; b < 1 + rng.index(2); ++b)
      batch.push_back({random_ids(1 + rng.index(4)), random_ids(1 + rng.index(3))});
    std::vector<numerics::Tensor<float>> before;
    for (std::size_t z = 0; z < K; ++z) before.push_back(mix.get(decoding::sos_param(z)));
    const auto r = decoding::mixture_decoder_train_step(mix, K, std::span<const decoding::MixtureExample>(batch),
                                                        {.lr = 0.01});
    for (std::size_t z = 0; z < K; ++z) {
      const bool chosen = std::find(r.chosen.begin(), r.chosen.end(), z) != r.chosen.end();
      const bool same = bytes_equal(before[z], mix.get(decoding::sos_param(z)));
      if (!chosen) {
        ++checks;
        violations += !same;
      } else {
        moved += !same;
      }
    }
  }
  return {violations == 0 && checks > 0,
          fmt("2000 steps, %zu unchosen-embedding checks, %zu changed; chosen embeddings moved %zu times", checks,
              violations, moved)};
}

// ---- 5, 6, 7: one synthetic task -------------------------------------------

struct SyntheticRun {
  std::vector<corpus::Record> train, valid, test;
  corpus::Vocabulary vocab;
  TrainConfig tcfg;
  std::optional<Model> selector_gen, plain_gen;
  double selector_seconds = 0;
  std::size_t selector_best_epoch = 0;
};

ModelConfig desk_model(const std::string& kind) {
  ModelConfig m;
  m.kind = kind;
  return m;
}

DecodeConfig decode_for(const std::string& strategy) {
  DecodeConfig d;
  d.strategy = strategy;
  d.K = 3;
  return d;
}

SyntheticRun& synthetic_data(std::size_t epochs, std::uint64_t seed) {
  static std::optional<SyntheticRun> run;
  if (run) return *run;
  run.emplace();
  auto& r = *run;
  corpus::SyntheticSpec spec;
  spec.num_facts = 3;
  spec.num_records = 2400;
  spec.seed = seed;
  auto all = corpus::gen_synthetic(spec);
  r.train.assign(all.begin(), all.begin() + 2000);
  r.valid.assign(all.begin() + 2000, all.begin() + 2200);
  r.test.assign(all.begin() + 2200, all.end());
  r.tcfg.epochs = epochs;
  r.tcfg.seed = seed;
  r.vocab = training_vocab(r.train, 20000);
  return r;
}

EpochCallback progress(const char* name) {
  return [name](const EpochMetrics& m) {
    std::fprintf(stderr, "  [%s] epoch %zu selector %.4f generator %.4f valid oracle BLEU-4 %.4f\n", name, m.epoch,
                 m.selector_loss, m.generator_loss, m.valid_oracle_bleu4);
  };
}

const Model& selector_gen(SyntheticRun& r) {
  if (!r.selector_gen) {
    const auto t0 = Clock::now();
    auto out = train_model(init_model(desk_model("selector-gen"), r.vocab, r.tcfg.seed), r.train, r.valid, r.tcfg,
                           decode_for("mixture-selector"), corpus::GuideRule::kCopy, progress("selector-gen"));
    r.selector_seconds = seconds_since(t0);
    r.selector_best_epoch = out.best_epoch;
    r.selector_gen = std::move(out.best);
  }
  return *r.selector_gen;
}

const Model& plain_gen(SyntheticRun& r) {
  if (!r.plain_gen) {
    auto out = train_model(init_model(desk_model("plain-gen"), r.vocab, r.tcfg.seed), r.train, r.valid, r.tcfg,
                           decode_for("beam"), corpus::GuideRule::kCopy, progress("plain-gen"));
    r.plain_gen = std::move(out.best);
  }
  return *r.plain_gen;
}

Result expert_specialization(SyntheticRun& r) {
  const Model& model = selector_gen(r);
  const auto t0 = Clock::now();
  const auto a = expert_fact_alignment(model, r.test);
  const double secs = r.selector_seconds + seconds_since(t0);
  const bool pass = a.mean_iou >= 0.8 && a.bijective_fraction >= 0.9 && secs < 600.0;
  return {pass, fmt("%zu held-out records: mean IoU %.3f, bijective %.1f%% (epoch %zu of %zu, %.0fs)", a.records,
                    a.mean_iou, 100.0 * a.bijective_fraction, r.selector_best_epoch, r.tcfg.epochs, secs)};
}

struct Scores {
  eval::EvalReport report;
  std::vector<eval::HypothesisSet> sets;
};

Scores score(const Model& m, const DecodeConfig& d, const std::vector<corpus::Record>& test) {
  const auto outputs = generate_all(m, d, test);
  auto sets = build_sets(outputs, m.vocab, test, parse_ranking(d.ranking));
  return {eval::evaluate(sets, eval::Metric::kBleu4), std::move(sets)};
}

Result diversity_tradeoff(SyntheticRun& r) {
  const auto mix = score(selector_gen(r), decode_for("mixture-selector"), r.test);
  const auto beam = score(plain_gen(r), decode_for("beam"), r.test);
  const double gap = mix.report.oracle - beam.report.oracle;
  const bool pass = gap >= 0.10 && *mix.report.pairwise < *beam.report.pairwise;
  return {pass, fmt("oracle BLEU-4 mixture-selector %.4f vs beam(B=3) %.4f (gap %+.4f, need >= 0.10); pairwise %.4f "
                    "vs %.4f; top-1 %.4f vs %.4f",
                    mix.report.oracle, beam.report.oracle, gap, *mix.report.pairwise, *beam.report.pairwise,
                    mix.report.top1, beam.report.top1)};
}

// Share of sets whose oracle pick scores at least the rank-1 hypothesis.
double dominance(const std::vector<eval::HypothesisSet>& sets) {
  const auto picks = eval::oracle_picks(sets, eval::Metric::kBleu4);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < sets.size(); ++i)
    ok += eval::bleu4_sentence(sets[i].hyps[picks[i]], sets[i].reference) >=
          eval::bleu4_sentence(sets[i].hyps[0], sets[i].reference);
  return static_cast<double>(ok) / static_cast<double>(sets.size());
}

Result upper_bound(SyntheticRun& r) {
  auto ub_cfg = decode_for("mixture-selector");
  ub_cfg.upper_bound = true;
  const auto inferred = score(selector_gen(r), decode_for("mixture-selector"), r.test);
  const auto ub = score(selector_gen(r), ub_cfg, r.test);
  const auto beam = score(plain_gen(r), decode_for("beam"), r.test);
  const double dom = std::min({dominance(inferred.sets), dominance(ub.sets), dominance(beam.sets)});
  const bool pass = ub.report.oracle >= inferred.report.oracle && dom == 1.0;
  return {pass, fmt("oracle BLEU-4 upper bound %.4f vs inferred %.4f; oracle >= top-1 on %.1f%% of sets",
                    ub.report.oracle, inferred.report.oracle, 100.0 * dom)};
}

// ---- 8 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result determinism(const fs::path& work) {
  corpus::SyntheticSpec spec;
  spec.num_records = 160;
  spec.seed = 8;
  const auto all = corpus::gen_synthetic(spec);
  const std::vector<corpus::Record> train(all.begin(), all.begin() + 120), valid(all.begin() + 120, all.begin() + 140),
      test(all.begin() + 140, all.end());
  ModelConfig mc;
  mc.d_w = mc.d_h = mc.d_e = 16;
  mc.d_f = 4;
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 2;
  tc.seed = 8;
  const auto vocab = training_vocab(train, 20000);

  bool curves = true, files = true, roundtrip = true;
  std::size_t compared = 0;
  for (const std::string kind : {"selector-gen", "plain-gen", "mixture-decoder"}) {
    mc.kind = kind;
    const auto d = decode_for(resolve_strategy(mc, DecodeConfig{.strategy = "auto", .K = 3}));
    std::string csv[2], gen[2];
    Model best;
    for (int rep = 0; rep < 2; ++rep) {
      auto out = train_model(init_model(mc, vocab, tc.seed), train, valid, tc, d, corpus::GuideRule::kCopy);
      csv[rep] = metrics_csv(out.curve);
      const fs::path p = work / (kind + "_gen" + std::to_string(rep) + ".jsonl");
      write_generations(p, generate_all(out.best, d, test), out.best.vocab, false);
      gen[rep] = slurp(p);
      best = std::move(out.best);
    }
    curves = curves && csv[0] == csv[1];
    files = files && gen[0] == gen[1] && !gen[0].empty();

    const fs::path ck = work / (kind + ".ckpt");
    save_model(ck.string(), best, "acceptance", 1);
    const auto loaded = load_model(ck.string());
    for (const auto& rec : test) {
      const auto ids = best.vocab.encode(rec.source);
      const Bits zeros(ids.size(), 0);
      const auto a = generator::greedy_decode(best.store, ids, zeros, 30);
      const auto b = generator::greedy_decode(loaded.model.store, ids, zeros, 30);
      roundtrip = roundtrip && a.tokens == b.tokens && a.log_prob == b.log_prob;
      const auto ha = decode_record(best, d, rec, 0), hb = decode_record(loaded.model, d, rec, 0);
      for (std::size_t k = 0; k < ha.size(); ++k)
        roundtrip = roundtrip && k < hb.size() && ha[k].tokens == hb[k].tokens && ha[k].log_prob == hb[k].log_prob;
      ++compared;
    }
  }
  return {curves && files && roundtrip,
          fmt("3 model kinds x 2 runs: curves %s, generation files %s; %zu records decoded after reload %s",
              curves ? "identical" : "DIFFER", files ? "identical" : "DIFFER", compared,
              roundtrip ? "identical" : "DIFFER")};
}

std::set<int> parse_only(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.insert(std::stoi(part));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path work = fs::temp_directory_path() / "focusmix-acceptance";
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = parse_only(argv[++i]);
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--epochs" && i + 1 < argc) {
      epochs = std::stoul(argv[++i]);
    } else if (a == "--seed" && i + 1 < argc) {
      seed = std::stoull(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only N[,N...]] [--work DIR] [--epochs E] [--seed S]\n", argv[0]);
      return 2;
    }
  }
  if (epochs == 0 || epochs > 20) {
    std::fprintf(stderr, "--epochs must be in 1..20\n");
    return 2;
  }
  fs::create_directories(work);

  const std::vector<std::pair<const char*, std::function<Result()>>> criteria{
      {"gradient suite", gradient_suite},
      {"metric oracles", metric_oracles},
      {"decoding equivalences", decoding_equivalences},
      {"hard-EM isolation", hard_em_isolation},
      {"expert specialization", [&] { return expert_specialization(synthetic_data(epochs, seed)); }},
      {"diversity/accuracy trade-off", [&] { return diversity_tradeoff(synthetic_data(epochs, seed)); }},
      {"upper bound", [&] { return upper_bound(synthetic_data(epochs, seed)); }},
      {"determinism and persistence", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    Result r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("error: ") + e.what()};
    }
    failed += !r.pass;
    std::printf("%s criterion %d (%s): %s\n", r.pass ? "PASS" : "FAIL", n, criteria[i].first, r.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
