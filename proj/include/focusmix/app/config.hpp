#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "focusmix/corpus/focus_guide.hpp"
#include "focusmix/corpus/synthetic.hpp"

namespace focusmix::app {

struct SynthConfig {
  std::size_t num_facts = 3;
  std::size_t num_entities = 40;
  std::size_t num_relations = 12;
  std::size_t num_values = 40;
  std::size_t n_train = 2000;
  std::size_t n_valid = 200;
  std::size_t n_test = 200;
  std::uint64_t seed = 1;

  corpus::SyntheticSpec spec() const;
};

struct DataConfig {
  std::string train;
  std::string valid;
  std::string test;
  std::string guide_rule = "copy";  // qg | copy, used when a record carries no guides

  corpus::GuideRule rule() const;
};

struct ModelConfig {
  std::string kind = "selector-gen";  // selector-gen | mixture-decoder | plain-gen
  std::size_t d_w = 64;
  std::size_t d_h = 64;
  std::size_t d_f = 16;
  std::size_t d_e = 64;
  std::size_t K = 3;
  double th = 0.15;
  std::size_t max_vocab = 20000;
};

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
};

struct DecodeConfig {
  std::string strategy = "auto";  // auto | greedy | beam | dbs | trunc | mixture-decoder | mixture-selector
  std::size_t K = 3;                          // hypotheses per source (beam width for beam/dbs)
  std::size_t groups = 0;                     // dbs groups, 0 means K
  double lambda = 0.5;
  std::size_t topk = 10;
  std::uint64_t seed = 1;
  std::size_t max_len = 30;
  bool upper_bound = false;
  std::string ranking = "normalized";  // normalized | raw
};

struct RunConfig {
  SynthConfig synth;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;

  // ConfigError naming the offending field.
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
// Missing keys keep their defaults; unknown keys raise ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
// Atomic write of the pretty-printed JSON.
void write_config(const RunConfig& cfg, const std::string& path);

// Hash of the model and training sections; stored in checkpoints.
std::string config_hash(const RunConfig& cfg);

}  // namespace focusmix::app
