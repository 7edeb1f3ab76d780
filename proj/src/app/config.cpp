#include "focusmix/app/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "focusmix/error.hpp"
#include "focusmix/numerics/checkpoint.hpp"

namespace focusmix::app {
namespace {

using Json = nlohmann::json;
using OJson = nlohmann::ordered_json;

// Reads the keys of one section into fields, rejecting anything unknown.
class SectionReader {
 public:
  SectionReader(const Json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("config: '" + section_ + "' must be an object");
  }

  template <typename V>
  SectionReader& field(const std::string& key, V& out) {
    known_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        if constexpr (std::is_same_v<V, std::size_t> || std::is_same_v<V, std::uint64_t>) {
          if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
        } else if constexpr (std::is_same_v<V, double>) {
          if (!it->is_number()) throw ConfigError("expected a number");
        } else if constexpr (std::is_same_v<V, bool>) {
          if (!it->is_boolean()) throw ConfigError("expected true or false");
        } else {
          if (!it->is_string()) throw ConfigError("expected a string");
        }
        out = it->template get<V>();
      } catch (const std::exception& e) {
        throw ConfigError("config: " + section_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(known_.begin(), known_.end(), key) == known_.end())
        throw ConfigError("config: unknown key '" + section_ + "." + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string section_;
  std::vector<std::string> known_;
};

void one_of(const std::string& field, const std::string& value, std::initializer_list<const char*> allowed) {
  std::string list;
  for (const char* a : allowed) {
    if (value == a) return;
    list += list.empty() ? a : std::string("|") + a;
  }
  throw ConfigError("config: " + field + " = '" + value + "', expected " + list);
}

void positive(const std::string& field, std::size_t v) {
  if (v == 0) throw ConfigError("config: " + field + " must be positive");
}

}  // namespace

corpus::SyntheticSpec SynthConfig::spec() const {
  corpus::SyntheticSpec s;
  s.num_facts = num_facts;
  s.num_entities = num_entities;
  s.num_relations = num_relations;
  s.num_values = num_values;
  s.num_records = n_train + n_valid + n_test;
  s.seed = seed;
  return s;
}

corpus::GuideRule DataConfig::rule() const {
  return guide_rule == "qg" ? corpus::GuideRule::kQg : corpus::GuideRule::kCopy;
}

void RunConfig::validate() const {
  synth.spec().validate();
  positive("synth.n_train", synth.n_train);
  one_of("data.guide_rule", data.guide_rule, {"qg", "copy"});
  one_of("model.kind", model.kind, {"selector-gen", "mixture-decoder", "plain-gen"});
  positive("model.d_w", model.d_w);
  positive("model.d_h", model.d_h);
  positive("model.d_f", model.d_f);
  positive("model.d_e", model.d_e);
  positive("model.K", model.K);
  if (!(model.th > 0.0 && model.th < 1.0)) throw ConfigError("config: model.th must lie in (0, 1)");
  if (model.max_vocab <= 4) throw ConfigError("config: model.max_vocab must exceed the 4 reserved ids");
  if (!(train.lr > 0.0)) throw ConfigError("config: train.lr must be positive");
  positive("train.batch_size", train.batch_size);
  one_of("decode.strategy", decode.strategy,
         {"auto", "greedy", "beam", "dbs", "trunc", "mixture-decoder", "mixture-selector"});
  positive("decode.K", decode.K);
  positive("decode.topk", decode.topk);
  positive("decode.max_len", decode.max_len);
  if (decode.lambda < 0.0) throw ConfigError("config: decode.lambda must be >= 0");
  one_of("decode.ranking", decode.ranking, {"normalized", "raw"});
  if (decode.strategy == "greedy" && decode.K != 1) throw ConfigError("config: greedy decoding yields K = 1");
  if (decode.strategy == "dbs") {
    const std::size_t G = decode.groups == 0 ? decode.K : decode.groups;
    if (decode.K % G != 0)
      throw ConfigError("config: decode.groups (" + std::to_string(G) + ") must divide decode.K (" +
                        std::to_string(decode.K) + ")");
  }
}

OJson to_json(const RunConfig& c) {
  OJson j;
  j["synth"] = {{"num_facts", c.synth.num_facts},     {"num_entities", c.synth.num_entities},
                {"num_relations", c.synth.num_relations}, {"num_values", c.synth.num_values},
                {"n_train", c.synth.n_train},         {"n_valid", c.synth.n_valid},
                {"n_test", c.synth.n_test},           {"seed", c.synth.seed}};
  j["data"] = {{"train", c.data.train}, {"valid", c.data.valid}, {"test", c.data.test},
               {"guide_rule", c.data.guide_rule}};
  j["model"] = {{"kind", c.model.kind}, {"d_w", c.model.d_w}, {"d_h", c.model.d_h},
                {"d_f", c.model.d_f},   {"d_e", c.model.d_e}, {"K", c.model.K},
                {"th", c.model.th},     {"max_vocab", c.model.max_vocab}};
  j["train"] = {{"lr", c.train.lr}, {"batch_size", c.train.batch_size}, {"epochs", c.train.epochs},
                {"seed", c.train.seed}};
  j["decode"] = {{"strategy", c.decode.strategy}, {"K", c.decode.K},
                 {"groups", c.decode.groups},     {"lambda", c.decode.lambda},
                 {"topk", c.decode.topk},         {"seed", c.decode.seed},
                 {"max_len", c.decode.max_len},   {"upper_bound", c.decode.upper_bound},
                 {"ranking", c.decode.ranking}};
  return j;
}

RunConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "synth") {
      SectionReader(value, key)
          .field("num_facts", c.synth.num_facts)
          .field("num_entities", c.synth.num_entities)
          .field("num_relations", c.synth.num_relations)
          .field("num_values", c.synth.num_values)
          .field("n_train", c.synth.n_train)
          .field("n_valid", c.synth.n_valid)
          .field("n_test", c.synth.n_test)
          .field("seed", c.synth.seed)
          .finish();
    } else if (key == "data") {
      SectionReader(value, key)
          .field("train", c.data.train)
          .field("valid", c.data.valid)
          .field("test", c.data.test)
          .field("guide_rule", c.data.guide_rule)
          .finish();
    } else if (key == "model") {
      SectionReader(value, key)
          .field("kind", c.model.kind)
          .field("d_w", c.model.d_w)
          .field("d_h", c.model.d_h)
          .field("d_f", c.model.d_f)
          .field("d_e", c.model.d_e)
          .field("K", c.model.K)
          .field("th", c.model.th)
          .field("max_vocab", c.model.max_vocab)
          .finish();
    } else if (key == "train") {
      SectionReader(value, key)
          .field("lr", c.train.lr)
          .field("batch_size", c.train.batch_size)
          .field("epochs", c.train.epochs)
          .field("seed", c.train.seed)
          .finish();
    } else if (key == "decode") {
      SectionReader(value, key)
          .field("strategy", c.decode.strategy)
          .field("K", c.decode.K)
          .field("groups", c.decode.groups)
          .field("lambda", c.decode.lambda)
          .field("topk", c.decode.topk)
          .field("seed", c.decode.seed)
          .field("max_len", c.decode.max_len)
          .field("upper_bound", c.decode.upper_bound)
          .field("ranking", c.decode.ranking)
          .finish();
    } else {
      throw ConfigError("config: unknown section '" + key + "'");
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

void write_config(const RunConfig& cfg, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw FileError("cannot write " + tmp);
    out << to_json(cfg).dump(2) << "\n";
    if (!out) throw FileError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FileError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string config_hash(const RunConfig& cfg) {
  const auto j = to_json(cfg);
  OJson part;
  part["model"] = j["model"];
  part["train"] = j["train"];
  return numerics::fnv1a_hex(part.dump());
}

}  // namespace focusmix::app
