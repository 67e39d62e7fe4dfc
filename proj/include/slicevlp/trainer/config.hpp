#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace slicevlp::train {

struct TrainConfig {
  int stage = 1;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr0 = 1e-4;
  double lr_min = 1e-6;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout_rate = 0.5;
  double tau = 0.07;
  bool symmetric = true;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_text = 64;
  std::size_t d_hidden = 128;
  std::size_t patch = 8;
  std::size_t vocab = 4096;
  std::size_t max_slices = 64;
  std::size_t image_size = 32;  // preprocessing target; 0 keeps the native size
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  // Param-name prefixes held fixed even when the stage would train them.
  std::vector<std::string> frozen;

  void validate() const;  // ConfigError on any violated invariant
};

// lr_min + (lr0 - lr_min) * (1 + cos(pi * t / epochs)) / 2; lr0 when epochs == 0.
double cosine_lr(std::size_t t, const TrainConfig& cfg);

void to_json(nlohmann::json& j, const TrainConfig& cfg);
// Overlays the keys present in `j` onto `cfg`. Unknown keys and wrong types
// raise ConfigError.
void apply_json(TrainConfig& cfg, const nlohmann::json& j);

}  // namespace slicevlp::train
