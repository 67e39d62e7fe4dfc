#pragma once

#include <string>
#include <vector>

#include "slicevlp/encoders/encoders.hpp"
#include "slicevlp/slice_pool/slice_pool.hpp"
#include "slicevlp/trainer/config.hpp"

namespace slicevlp::train {

struct Model {
  enc::TextEncoderParams text;
  enc::ImageEncoderParams image;
  pool::AdapterParams adapter;

  std::vector<diff::Param*> params();
  std::vector<const diff::Param*> params() const;
};

// Fresh initialization from cfg.seed through the named init sub-seeds.
Model init_model(const TrainConfig& cfg);
enc::TextEncoderConfig text_config(const TrainConfig& cfg);
enc::ImageEncoderConfig image_config(const TrainConfig& cfg);
pool::AdapterConfig adapter_config(const TrainConfig& cfg);

// Marks only the stage's parameter group trainable (stage 1: image encoder,
// stage 2: adapter), minus any Param whose name starts with a frozen prefix.
void set_stage_trainable(Model& model, int stage, const std::vector<std::string>& frozen);

}  // namespace slicevlp::train
