#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "focusmix/app/config.hpp"
#include "focusmix/corpus/record.hpp"
#include "focusmix/corpus/vocabulary.hpp"
#include "focusmix/generator/generator.hpp"
#include "focusmix/selector/selector.hpp"

namespace focusmix::app {

// A trained or freshly initialised model with everything needed to decode.
struct Model {
  ModelConfig cfg;
  corpus::Vocabulary vocab;
  numerics::ParamStore<float> store;

  bool has_selector() const { return cfg.kind == "selector-gen"; }
  bool is_mixture_decoder() const { return cfg.kind == "mixture-decoder"; }
  selector::SelectorConfig selector_cfg() const;
  generator::GeneratorConfig generator_cfg() const;
};

Model init_model(const ModelConfig& cfg, corpus::Vocabulary vocab, std::uint64_t seed);

// Meta carries the model section and the vocabulary, so a checkpoint is self-contained.
void save_model(const std::string& path, const Model& model, const std::string& config_hash,
                std::uint64_t step);
struct LoadedModel {
  Model model;
  std::string config_hash;
  std::uint64_t step = 0;
};
LoadedModel load_model(const std::string& path);

}  // namespace focusmix::app
