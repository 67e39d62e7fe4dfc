#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "slicevlp/diffmath/tape.hpp"

namespace slicevlp::train {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct Moments {
  diff::Tensor m, v;
  friend bool operator==(const Moments&, const Moments&) = default;
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::map<std::string, Moments> moments;  // keyed by Param name

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// One Adam update with decoupled weight decay over the trainable Params:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
// Moments are created on first use; a shape mismatch raises CompatibilityError.
void adam_step(std::span<diff::Param* const> params, OptimizerState& state, double lr,
               const AdamSettings& settings);

}  // namespace slicevlp::train
