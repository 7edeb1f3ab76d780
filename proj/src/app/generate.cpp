#include "focusmix/app/generate.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "focusmix/app/parallel.hpp"
#include "focusmix/decoding/decoding.hpp"
#include "focusmix/error.hpp"

namespace focusmix::app {

using generator::Hypothesis;

std::string resolve_strategy(const ModelConfig& model, const DecodeConfig& decode) {
  if (decode.strategy != "auto") return decode.strategy;
  if (model.kind == "selector-gen") return "mixture-selector";
  if (model.kind == "mixture-decoder") return "mixture-decoder";
  return decode.K == 1 ? "greedy" : "beam";
}

void check_compatible(const ModelConfig& model, const DecodeConfig& decode) {
  const std::string s = resolve_strategy(model, decode);
  auto fail = [&](const std::string& why) {
    throw ConfigError("decode strategy '" + s + "' with a " + model.kind + " checkpoint: " + why);
  };
  if (decode.upper_bound) {
    if (model.kind != "selector-gen") fail("upper-bound mode needs a selector-gen checkpoint");
    return;
  }
  if (s == "mixture-selector" && model.kind != "selector-gen") fail("needs a selector-gen checkpoint");
  if (s == "mixture-decoder" && model.kind != "mixture-decoder") fail("needs a mixture-decoder checkpoint");
  if ((s == "greedy" || s == "beam" || s == "dbs" || s == "trunc") && model.kind != "plain-gen")
    fail("search baselines run on plain-gen checkpoints");
  if ((s == "mixture-selector" || s == "mixture-decoder") && decode.K != model.K)
    throw ConfigError("decode.K = " + std::to_string(decode.K) + " but the checkpoint has K = " +
                      std::to_string(model.K) + " experts");
  if (s == "greedy" && decode.K != 1) throw ConfigError("greedy decoding yields K = 1");
}

eval::Ranking parse_ranking(const std::string& name) {
  if (name == "normalized") return eval::Ranking::kLengthNormalized;
  if (name == "raw") return eval::Ranking::kRawSum;
  throw ConfigError("unknown ranking '" + name + "' (expected normalized or raw)");
}

namespace {

double rank_score(const Hypothesis& h, eval::Ranking r) {
  return r == eval::Ranking::kRawSum
             ? h.log_prob
             : h.log_prob / static_cast<double>(std::max<std::size_t>(1, h.tokens.size()));
}

}  // namespace

std::vector<Hypothesis> decode_record(const Model& model, const DecodeConfig& decode,
                                      const corpus::Record& record, std::size_t index) {
  const auto& st = model.store;
  const std::vector<int> ids = model.vocab.encode(record.source);
  const std::vector<std::uint8_t> zeros(ids.size(), 0);
  const std::size_t L = decode.max_len;
  std::vector<Hypothesis> out;

  if (decode.upper_bound) {
    if (!record.focus_guides) throw InputError("record " + std::to_string(index) + " has no focus guides");
    for (const auto& g : *record.focus_guides)
      out.push_back(generator::upper_bound_decode(st, ids, std::optional(g.bits), L));
  } else {
    const std::string s = resolve_strategy(model.cfg, decode);
    if (s == "greedy") {
      out.push_back(generator::greedy_decode(st, ids, zeros, L));
    } else if (s == "beam") {
      out = decoding::beam_search(st, ids, zeros, decode.K, L);
    } else if (s == "dbs") {
      const std::size_t G = decode.groups == 0 ? decode.K : decode.groups;
      out = decoding::diverse_beam_search(st, ids, zeros, decode.K, G, decode.lambda, L);
    } else if (s == "trunc") {
      numerics::Rng seeds = numerics::Rng::derive(decode.seed, index);
      for (std::size_t k = 0; k < decode.K; ++k)
        out.push_back(decoding::truncated_sampling(st, ids, zeros, decode.topk, seeds.next_u64(), L));
    } else if (s == "mixture-decoder") {
      out = decoding::mixture_decoder_generate(st, model.cfg.K, ids, L);
    } else {
      out = generator::generate_diverse(st, model.selector_cfg(), st, ids, L);
    }
  }
  const auto ranking = parse_ranking(decode.ranking);
  std::stable_sort(out.begin(), out.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    return rank_score(a, ranking) > rank_score(b, ranking);
  });
  return out;
}

std::vector<SourceOutput> generate_all(const Model& model, const DecodeConfig& decode,
                                       const std::vector<corpus::Record>& records) {
  check_compatible(model.cfg, decode);
  std::vector<SourceOutput> out(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    out[i].source_id = std::to_string(i);
    out[i].hyps = decode_record(model, decode, records[i], i);
  });
  return out;
}

void write_generations(const std::filesystem::path& path, const std::vector<SourceOutput>& outputs,
                       const corpus::Vocabulary& vocab, bool upper_bound) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw FileError("cannot write " + tmp.string());
    for (const auto& src : outputs) {
      for (std::size_t r = 0; r < src.hyps.size(); ++r) {
        const auto& h = src.hyps[r];
        nlohmann::ordered_json j;
        j["source_id"] = src.source_id;
        j["rank"] = r + 1;
        j["tokens"] = vocab.decode(h.tokens);
        j["log_prob"] = h.log_prob;
        j["truncated"] = h.truncated;
        if (h.expert) j["expert"] = *h.expert;
        if (!h.mask.empty() && std::any_of(h.mask.begin(), h.mask.end(), [](auto b) { return b != 0; }))
          j["mask"] = h.mask;
        j["upper_bound"] = upper_bound;
        out << j.dump() << "\n";
      }
    }
    if (!out) throw FileError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FileError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::vector<GenerationLine> read_generations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<GenerationLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      GenerationLine g;
      g.source_id = j.at("source_id").get<std::string>();
      g.rank = j.at("rank").get<std::size_t>();
      g.tokens = j.at("tokens").get<corpus::Tokens>();
      g.log_prob = j.at("log_prob").get<double>();
      out.push_back(std::move(g));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + e.what());
    }
  }
  return out;
}

namespace {

std::size_t record_index(const std::string& id, std::size_t n) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(id, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != id.size() || id.empty() || v >= n)
    throw InputError("generation source_id '" + id + "' matches no reference record");
  return static_cast<std::size_t>(v);
}

std::vector<eval::HypothesisSet> expand(const std::vector<std::vector<eval::ScoredHypothesis>>& per_record,
                                        const std::vector<corpus::Record>& references, eval::Ranking ranking) {
  std::vector<eval::HypothesisSet> sets;
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (per_record[i].empty()) throw InputError("no generations for record " + std::to_string(i));
    for (const auto& target : references[i].targets)
      sets.push_back(eval::make_hypothesis_set(std::to_string(i), per_record[i], target, ranking));
  }
  return sets;
}

}  // namespace

std::vector<eval::HypothesisSet> build_sets(const std::vector<GenerationLine>& lines,
                                            const std::vector<corpus::Record>& references,
                                            eval::Ranking ranking) {
  std::vector<std::vector<const GenerationLine*>> grouped(references.size());
  for (const auto& l : lines) grouped[record_index(l.source_id, references.size())].push_back(&l);
  std::vector<std::vector<eval::ScoredHypothesis>> per_record(references.size());
  for (std::size_t i = 0; i < grouped.size(); ++i) {
    auto& g = grouped[i];
    std::stable_sort(g.begin(), g.end(), [](const auto* a, const auto* b) { return a->rank < b->rank; });
    for (const auto* l : g) per_record[i].push_back({l->tokens, l->log_prob});
  }
  return expand(per_record, references, ranking);
}

std::vector<eval::HypothesisSet> build_sets(const std::vector<SourceOutput>& outputs,
                                            const corpus::Vocabulary& vocab,
                                            const std::vector<corpus::Record>& references,
                                            eval::Ranking ranking) {
  std::vector<std::vector<eval::ScoredHypothesis>> per_record(references.size());
  for (const auto& o : outputs) {
    auto& dst = per_record[record_index(o.source_id, references.size())];
    for (const auto& h : o.hyps) dst.push_back({vocab.decode(h.tokens), h.log_prob});
  }
  return expand(per_record, references, ranking);
}

void dump_all_attention(const std::filesystem::path& dir, const std::vector<SourceOutput>& outputs,
                        const std::vector<corpus::Record>& records, const corpus::Vocabulary& vocab) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& o : outputs) {
    const auto& source = records[record_index(o.source_id, records.size())].source;
    for (std::size_t r = 0; r < o.hyps.size(); ++r)
      generator::dump_attention(o.hyps[r], source, vocab, dir / (o.source_id + "_" + std::to_string(r + 1) + ".csv"));
  }
}

}  // namespace focusmix::app
