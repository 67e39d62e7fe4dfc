#include "slicevlp/trainer/model.hpp"

namespace slicevlp::train {

std::vector<diff::Param*> Model::params() {
  std::vector<diff::Param*> out = text.params();
  for (auto* p : image.params()) out.push_back(p);
  for (auto* p : adapter.params()) out.push_back(p);
  return out;
}

std::vector<const diff::Param*> Model::params() const {
  std::vector<const diff::Param*> out = text.params();
  for (auto* p : image.params()) out.push_back(p);
  for (auto* p : adapter.params()) out.push_back(p);
  return out;
}

enc::TextEncoderConfig text_config(const TrainConfig& cfg) { return {cfg.vocab, cfg.d_text, cfg.d_model}; }

enc::ImageEncoderConfig image_config(const TrainConfig& cfg) { return {cfg.patch, cfg.d_hidden, cfg.d_model}; }

pool::AdapterConfig adapter_config(const TrainConfig& cfg) {
  return {cfg.max_slices, cfg.d_model, cfg.heads, cfg.dropout_rate};
}

Model init_model(const TrainConfig& cfg) {
  Model m;
  m.text = enc::init_text_encoder(text_config(cfg), cfg.seed);
  m.image = enc::init_image_encoder(image_config(cfg), cfg.seed);
  m.adapter = pool::init_adapter(adapter_config(cfg), cfg.seed);
  return m;
}

void set_stage_trainable(Model& model, int stage, const std::vector<std::string>& frozen) {
  for (auto* p : model.text.params()) p->trainable = false;
  model.image.set_trainable(stage == 1);
  model.adapter.set_trainable(stage == 2);
  for (auto* p : model.params()) {
    for (const auto& prefix : frozen) {
      if (p->name.rfind(prefix, 0) == 0) p->trainable = false;
    }
  }
}

}  // namespace slicevlp::train
