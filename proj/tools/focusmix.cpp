// focusmix command-line driver.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "focusmix/app/config.hpp"
#include "focusmix/app/generate.hpp"
#include "focusmix/app/grad_suite.hpp"
#include "focusmix/app/model.hpp"
#include "focusmix/app/train.hpp"
#include "focusmix/corpus/jsonl.hpp"
#include "focusmix/error.hpp"

namespace fs = std::filesystem;
using namespace focusmix;
using namespace focusmix::app;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;

struct Common {
  std::string config_path;
  std::string out_dir;
};

RunConfig base_config(const Common& c) {
  return c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FileError("cannot write " + tmp.string());
    out << text;
    if (!out) throw FileError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void make_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir + ": " + ec.message());
}

std::vector<corpus::Record> read_split(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " data given");
  return corpus::read_jsonl(path);
}

// Overrides `field` when the option was given on the command line.
template <typename V>
void take(CLI::Option* opt, const V& value, V& field) {
  if (opt->count() > 0) field = value;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  Common c;
  bool force = false;
  std::size_t facts = 0, n_train = 0, n_valid = 0, n_test = 0;
  std::uint64_t seed = 0;
  CLI::Option *o_facts, *o_train, *o_valid, *o_test, *o_seed;
};

int cmd_synth(SynthArgs& a) {
  RunConfig cfg = base_config(a.c);
  take(a.o_facts, a.facts, cfg.synth.num_facts);
  take(a.o_train, a.n_train, cfg.synth.n_train);
  take(a.o_valid, a.n_valid, cfg.synth.n_valid);
  take(a.o_test, a.n_test, cfg.synth.n_test);
  take(a.o_seed, a.seed, cfg.synth.seed);
  make_dir(a.c.out_dir);
  const fs::path dir(a.c.out_dir);
  cfg.data.train = (dir / "train.jsonl").string();
  cfg.data.valid = (dir / "valid.jsonl").string();
  cfg.data.test = (dir / "test.jsonl").string();
  cfg.validate();
  for (const auto& p : {cfg.data.train, cfg.data.valid, cfg.data.test})
    if (fs::exists(p) && !a.force) throw ConfigError(p + " exists; pass --force to overwrite");

  const auto records = corpus::gen_synthetic(cfg.synth.spec());
  const auto n1 = static_cast<std::ptrdiff_t>(cfg.synth.n_train);
  const auto n2 = n1 + static_cast<std::ptrdiff_t>(cfg.synth.n_valid);
  corpus::write_jsonl({records.begin(), records.begin() + n1}, cfg.data.train);
  corpus::write_jsonl({records.begin() + n1, records.begin() + n2}, cfg.data.valid);
  corpus::write_jsonl({records.begin() + n2, records.end()}, cfg.data.test);
  write_config(cfg, (dir / "resolved-config.json").string());
  std::fprintf(stderr, "wrote %zu/%zu/%zu records to %s\n", cfg.synth.n_train, cfg.synth.n_valid,
               cfg.synth.n_test, a.c.out_dir.c_str());
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  Common c;
  std::string train, valid, kind, decode, guide_rule;
  std::size_t epochs = 0, batch = 0, K = 0;
  double lr = 0;
  std::uint64_t seed = 0;
  CLI::Option *o_train, *o_valid, *o_kind, *o_decode, *o_rule, *o_epochs, *o_batch, *o_K, *o_lr, *o_seed;
};

int cmd_train(TrainArgs& a) {
  RunConfig cfg = base_config(a.c);
  take(a.o_train, a.train, cfg.data.train);
  take(a.o_valid, a.valid, cfg.data.valid);
  take(a.o_rule, a.guide_rule, cfg.data.guide_rule);
  take(a.o_kind, a.kind, cfg.model.kind);
  take(a.o_K, a.K, cfg.model.K);
  take(a.o_epochs, a.epochs, cfg.train.epochs);
  take(a.o_batch, a.batch, cfg.train.batch_size);
  take(a.o_lr, a.lr, cfg.train.lr);
  take(a.o_seed, a.seed, cfg.train.seed);
  take(a.o_decode, a.decode, cfg.decode.strategy);
  cfg.decode.strategy = resolve_strategy(cfg.model, cfg.decode);
  if (a.o_K->count() && (cfg.decode.strategy == "mixture-selector" || cfg.decode.strategy == "mixture-decoder"))
    cfg.decode.K = cfg.model.K;
  cfg.validate();
  check_compatible(cfg.model, cfg.decode);

  make_dir(a.c.out_dir);
  const fs::path dir(a.c.out_dir);
  auto train = read_split(cfg.data.train, "training");
  const auto valid = cfg.data.valid.empty() ? std::vector<corpus::Record>{} : corpus::read_jsonl(cfg.data.valid);
  std::vector<corpus::Record> valid_guided = valid;
  for (auto& r : valid_guided) corpus::ensure_focus_guides(r, cfg.data.rule());

  Model model = init_model(cfg.model, training_vocab(train, cfg.model.max_vocab), cfg.train.seed);
  write_config(cfg, (dir / "resolved-config.json").string());
  const std::string hash = config_hash(cfg);
  std::fprintf(stderr, "model %s, vocab %zu, %zu parameters, %zu training records\n", cfg.model.kind.c_str(),
               model.vocab.size(), model.store.num_values(), train.size());

  const auto start = std::chrono::steady_clock::now();
  auto outcome = train_model(std::move(model), std::move(train), valid_guided, cfg.train, cfg.decode,
                             cfg.data.rule(), [&](const EpochMetrics& m) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "epoch %zu  steps %llu  selector %.4f  generator %.4f  valid oracle BLEU-4 %.4f  (%.0fs)\n",
                 m.epoch, static_cast<unsigned long long>(m.steps), m.selector_loss, m.generator_loss,
                 m.valid_oracle_bleu4, secs);
  });
  write_text(dir / "metrics.csv", metrics_csv(outcome.curve));
  save_model((dir / "model.ckpt").string(), outcome.best, hash, outcome.best_step);
  std::fprintf(stderr, "kept epoch %zu -> %s\n", outcome.best_epoch, (dir / "model.ckpt").c_str());
  return kOk;
}

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
  Common c;
  std::string checkpoint, input, decode, dump_attention, ranking;
  std::size_t K = 0, beam = 0, groups = 0, topk = 0, max_len = 0;
  double lambda = 0;
  std::uint64_t seed = 0;
  bool upper_bound = false;
  CLI::Option *o_input, *o_decode, *o_K, *o_beam, *o_groups, *o_topk, *o_max_len, *o_lambda, *o_seed, *o_ranking;
};

int cmd_generate(GenerateArgs& a) {
  RunConfig cfg = base_config(a.c);
  auto loaded = load_model(a.checkpoint);
  cfg.model = loaded.model.cfg;
  take(a.o_input, a.input, cfg.data.test);
  take(a.o_decode, a.decode, cfg.decode.strategy);
  take(a.o_K, a.K, cfg.decode.K);
  take(a.o_beam, a.beam, cfg.decode.K);
  take(a.o_groups, a.groups, cfg.decode.groups);
  take(a.o_topk, a.topk, cfg.decode.topk);
  take(a.o_max_len, a.max_len, cfg.decode.max_len);
  take(a.o_lambda, a.lambda, cfg.decode.lambda);
  take(a.o_seed, a.seed, cfg.decode.seed);
  take(a.o_ranking, a.ranking, cfg.decode.ranking);
  if (a.upper_bound) cfg.decode.upper_bound = true;
  cfg.decode.strategy = resolve_strategy(cfg.model, cfg.decode);
  cfg.validate();
  check_compatible(cfg.model, cfg.decode);

  make_dir(a.c.out_dir);
  const fs::path dir(a.c.out_dir);
  auto records = read_split(cfg.data.test, "input");
  if (cfg.decode.upper_bound)
    for (auto& r : records) corpus::ensure_focus_guides(r, cfg.data.rule());
  const auto outputs = generate_all(loaded.model, cfg.decode, records);
  write_generations(dir / "generations.jsonl", outputs, loaded.model.vocab, cfg.decode.upper_bound);
  if (!a.dump_attention.empty()) dump_all_attention(a.dump_attention, outputs, records, loaded.model.vocab);
  write_config(cfg, (dir / "resolved-config.json").string());
  std::size_t n = 0;
  for (const auto& o : outputs) n += o.hyps.size();
  std::fprintf(stderr, "%zu hypotheses for %zu sources -> %s\n", n, outputs.size(),
               (dir / "generations.jsonl").c_str());
  return kOk;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  Common c;
  std::string generations, references, ranking = "normalized";
};

int cmd_evaluate(EvaluateArgs& a) {
  RunConfig cfg = base_config(a.c);
  cfg.decode.ranking = a.ranking;
  cfg.data.test = a.references;
  cfg.validate();
  const auto lines = read_generations(a.generations);
  const auto refs = corpus::read_jsonl(a.references);
  const auto sets = build_sets(lines, refs, parse_ranking(a.ranking));
  const std::vector<eval::EvalReport> reports{eval::evaluate(sets, eval::Metric::kBleu4),
                                              eval::evaluate(sets, eval::Metric::kRouge2)};
  make_dir(a.c.out_dir);
  const fs::path dir(a.c.out_dir);
  write_text(dir / "eval.csv", eval::to_csv(reports));
  const std::string md = eval::to_markdown(reports, fs::path(a.generations).parent_path().filename().string());
  write_text(dir / "eval.md", md);
  write_config(cfg, (dir / "resolved-config.json").string());
  std::cout << md;
  return kOk;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 1;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const auto lines = run_grad_suite(a.seed, a.corrupt);
  bool ok = true;
  for (const auto& l : lines) {
    const bool pass = l.max_rel_error < kGradTolerance;
    ok = ok && pass;
    std::printf("%-4s %-55s max rel err %.3e  (%zu entries, worst %s)\n", pass ? "ok" : "FAIL", l.name.c_str(),
                l.max_rel_error, l.entries, l.worst.c_str());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s in %.2fs\n", ok ? "all checks below 1e-4" : "gradient check failed", secs);
  return ok ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"focusmix: diverse sequence generation with a mixture of focus selectors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "focusmix 0.1.0");

  auto add_common = [](CLI::App* sub, Common& c, bool out_required) {
    sub->add_option("--config", c.config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
    auto* o = sub->add_option("--out", c.out_dir, "output directory");
    if (out_required) o->required();
  };

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write synthetic train/valid/test JSONL");
  add_common(synth, sa.c, true);
  synth->add_flag("--force", sa.force, "overwrite existing files");
  sa.o_facts = synth->add_option("--facts", sa.facts, "facts (and targets) per record");
  sa.o_train = synth->add_option("--train-records", sa.n_train);
  sa.o_valid = synth->add_option("--valid-records", sa.n_valid);
  sa.o_test = synth->add_option("--test-records", sa.n_test);
  sa.o_seed = synth->add_option("--seed", sa.seed);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model and keep the best validation checkpoint");
  add_common(train, ta.c, true);
  ta.o_train = train->add_option("--train", ta.train, "training JSONL");
  ta.o_valid = train->add_option("--valid", ta.valid, "validation JSONL");
  ta.o_kind = train->add_option("--model", ta.kind)->check(CLI::IsMember({"selector-gen", "mixture-decoder", "plain-gen"}));
  ta.o_decode = train->add_option("--decode", ta.decode, "validation decoding strategy");
  ta.o_rule = train->add_option("--guide-rule", ta.guide_rule)->check(CLI::IsMember({"qg", "copy"}));
  ta.o_epochs = train->add_option("--epochs", ta.epochs);
  ta.o_batch = train->add_option("--batch-size", ta.batch);
  ta.o_K = train->add_option("--K", ta.K, "experts");
  ta.o_lr = train->add_option("--lr", ta.lr);
  ta.o_seed = train->add_option("--seed", ta.seed);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "decode K hypotheses per source");
  add_common(gen, ga.c, true);
  gen->add_option("--checkpoint", ga.checkpoint)->required()->check(CLI::ExistingFile);
  ga.o_input = gen->add_option("--input", ga.input, "records to decode (default: data.test)");
  ga.o_decode = gen->add_option("--decode", ga.decode)
                    ->check(CLI::IsMember({"auto", "greedy", "beam", "dbs", "trunc", "mixture-decoder", "mixture-selector"}));
  ga.o_K = gen->add_option("--K", ga.K, "hypotheses per source");
  ga.o_beam = gen->add_option("--beam", ga.beam, "beam width (same as --K)");
  ga.o_groups = gen->add_option("--groups", ga.groups, "diverse beam groups (default K)");
  ga.o_lambda = gen->add_option("--lambda", ga.lambda, "diversity strength");
  ga.o_topk = gen->add_option("--topk", ga.topk, "truncated sampling width");
  ga.o_seed = gen->add_option("--seed", ga.seed);
  ga.o_max_len = gen->add_option("--max-len", ga.max_len);
  ga.o_ranking = gen->add_option("--ranking", ga.ranking)->check(CLI::IsMember({"normalized", "raw"}));
  gen->add_flag("--upper-bound", ga.upper_bound, "decode with the gold focus guides");
  gen->add_option("--dump-attention", ga.dump_attention, "directory for attention CSVs");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Top-1 / Oracle / Pairwise BLEU-4 and ROUGE-2");
  add_common(ev, ea.c, true);
  ev->add_option("--generations", ea.generations)->required()->check(CLI::ExistingFile);
  ev->add_option("--references", ea.references)->required()->check(CLI::ExistingFile);
  ev->add_option("--ranking", ea.ranking)->check(CLI::IsMember({"normalized", "raw"}));

  GradcheckArgs gca;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  gc->add_option("--seed", gca.seed);
  gc->add_flag("--corrupt-gradient", gca.corrupt, "perturb analytic gradients (must fail)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*train) return cmd_train(ta);
    if (*gen) return cmd_generate(ga);
    if (*ev) return cmd_evaluate(ea);
    if (*gc) return cmd_gradcheck(gca);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "focusmix: error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
