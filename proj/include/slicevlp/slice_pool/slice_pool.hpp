#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slicevlp/encoders/encoders.hpp"

namespace slicevlp::pool {

using diff::Param;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using enc::Embedding;
using enc::SliceStack;

enum class PoolMode { kAttention, kGap };

PoolMode parse_pool_mode(const std::string& text);  // "attn"/"attention" or "gap"
const char* to_string(PoolMode mode) noexcept;

struct AdapterConfig {
  std::size_t max_slices = 64;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  double dropout_rate = 0.5;
};

// Learnable slice positions plus one multi-head self-attention layer.
struct AdapterParams {
  Param pe_table;               // max_slices x d_model; row i encodes slice position i
  std::vector<Param> wq, wk, wv;  // per head: d_model x d_head
  Param wo;                     // (heads * d_head) x d_model
  std::size_t heads = 0;
  std::size_t d_head = 0;
  double dropout_rate = 0.5;

  std::size_t max_slices() const { return pe_table.value.rows(); }
  std::size_t d_model() const { return pe_table.value.cols(); }
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  void set_trainable(bool on);
};

AdapterParams init_adapter(const AdapterConfig& cfg, std::uint64_t seed);

struct AdapterVars {
  Var pe_table;
  std::vector<Var> wq, wk, wv;
  Var wo;
  std::size_t d_head = 0;
  std::size_t max_slices = 0;
  double dropout_rate = 0.0;
};

AdapterVars bind(Tape& tape, AdapterParams& params);
AdapterVars bind(Tape& tape, const AdapterParams& params);

// Per-head attention weights, recorded for inspection. Filled when requested.
using AttentionMaps = std::vector<Tensor>;

// Z = stack + PE[0..n); per head softmax(Z Wq (Z Wk)^T / sqrt(d_head)) Z Wv;
// heads are concatenated, projected by wo, dropped out in train mode, and the
// n output rows are averaged into one d_model row (1 x d_model Var).
Var attention_pool(const AdapterVars& adapter, Var stack, bool train_mode, diff::Rng* rng,
                   AttentionMaps* maps = nullptr);

Embedding attention_pool(const SliceStack& stack, const AdapterParams& params,
                         AttentionMaps* maps = nullptr);

// Mean over slices; bitwise invariant to slice order.
Embedding gap_pool(const SliceStack& stack);
Var gap_pool(Var stack);

// Eval-mode pooling by mode.
Embedding pool_stack(const SliceStack& stack, const AdapterParams& params, PoolMode mode);

}  // namespace slicevlp::pool
