#include "focusmix/app/model.hpp"

#include "focusmix/decoding/decoding.hpp"
#include "focusmix/error.hpp"
#include "focusmix/numerics/checkpoint.hpp"

namespace focusmix::app {

selector::SelectorConfig Model::selector_cfg() const {
  selector::SelectorConfig s;
  s.d_w = cfg.d_w;
  s.d_h = cfg.d_h;
  s.d_e = cfg.d_e;
  s.K = cfg.K;
  s.th = cfg.th;
  return s;
}

generator::GeneratorConfig Model::generator_cfg() const {
  return {.d_w = cfg.d_w, .d_h = cfg.d_h, .d_f = cfg.d_f};
}

Model init_model(const ModelConfig& cfg, corpus::Vocabulary vocab, std::uint64_t seed) {
  Model m{cfg, std::move(vocab), {}};
  numerics::Rng rng(seed);
  const std::size_t V = m.vocab.size();
  selector::init_word_embedding(m.store, V, cfg.d_w, rng);
  if (m.has_selector()) selector::init_selector(m.store, m.selector_cfg(), V, rng);
  if (m.is_mixture_decoder())
    decoding::init_mixture_decoder(m.store, m.generator_cfg(), cfg.K, V, rng);
  else
    generator::init_generator(m.store, m.generator_cfg(), V, rng);
  return m;
}

void save_model(const std::string& path, const Model& model, const std::string& config_hash,
                std::uint64_t step) {
  numerics::CheckpointInfo info;
  info.config_hash = config_hash;
  info.step = step;
  RunConfig rc;
  rc.model = model.cfg;
  info.meta["model"] = nlohmann::json::parse(to_json(rc)["model"].dump());
  info.meta["vocab"] = model.vocab.tokens();
  numerics::save_checkpoint(path, model.store, info);
}

LoadedModel load_model(const std::string& path) {
  auto ck = numerics::load_checkpoint(path);
  const auto& meta = ck.info.meta;
  if (!meta.contains("model") || !meta.contains("vocab"))
    throw InputError(path + ": checkpoint lacks model meta");
  const RunConfig rc = config_from_json(nlohmann::json{{"model", meta["model"]}});
  LoadedModel out;
  out.model.cfg = rc.model;
  out.model.vocab = corpus::Vocabulary(meta["vocab"].get<std::vector<std::string>>());
  out.model.store = std::move(ck.store);
  out.config_hash = ck.info.config_hash;
  out.step = ck.info.step;
  if (!out.model.store.contains(selector::kWordEmb) ||
      out.model.store.get(selector::kWordEmb).shape()[0] != out.model.vocab.size())
    throw InputError(path + ": embedding does not match the stored vocabulary");
  return out;
}

}  // namespace focusmix::app
