#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slicevlp/datapipe/volume.hpp"
#include "slicevlp/diffmath/ops.hpp"
#include "slicevlp/diffmath/tape.hpp"

namespace slicevlp::enc {

using diff::Param;
using diff::Tape;
using diff::Tensor;
using diff::Var;

// A point in the shared image-text space.
struct Embedding {
  Tensor vec;
  std::size_t dim() const { return vec.size(); }
};

// Per-slice embeddings of one volume, one row per slice in slice order.
struct SliceStack {
  Tensor mat;
  std::size_t n() const { return mat.rows(); }
};

// ---- Text tower ---------------------------------------------------------------

struct TextEncoderConfig {
  std::size_t vocab = 4096;
  std::size_t d_text = 64;
  std::size_t d_model = 64;
};

// Hashed bag-of-tokens encoder. Never trained: every Param is non-trainable.
struct TextEncoderParams {
  Param embed_table;  // vocab x d_text
  Param proj;         // d_text x d_model
  std::uint64_t seed = 0;

  std::size_t vocab() const { return embed_table.value.rows(); }
  std::size_t d_model() const { return proj.value.cols(); }
  std::vector<Param*> params() { return {&embed_table, &proj}; }
  std::vector<const Param*> params() const { return {&embed_table, &proj}; }
};

TextEncoderParams init_text_encoder(const TextEncoderConfig& cfg, std::uint64_t seed);

// Mean of the looked-up rows, projected into the shared space. Pure; no tape.
Embedding encode_text(std::span<const std::uint32_t> token_ids, const TextEncoderParams& params);
// One row per caption.
Tensor encode_texts(std::span<const std::vector<std::uint32_t>> captions,
                    const TextEncoderParams& params);

// ---- 2D image tower ---------------------------------------------------------

struct ImageEncoderConfig {
  std::size_t patch = 8;
  std::size_t d_hidden = 128;
  std::size_t d_model = 64;
};

struct ImageEncoderParams {
  Param patch_proj;  // (P*P) x d_hidden
  Param mlp_hidden;  // d_hidden x d_hidden
  Param out_proj;    // d_hidden x d_model
  std::size_t patch = 8;

  std::size_t d_model() const { return out_proj.value.cols(); }
  std::vector<Param*> params() { return {&patch_proj, &mlp_hidden, &out_proj}; }
  std::vector<const Param*> params() const { return {&patch_proj, &mlp_hidden, &out_proj}; }
  void set_trainable(bool on);
};

ImageEncoderParams init_image_encoder(const ImageEncoderConfig& cfg, std::uint64_t seed);

struct ImageEncoderVars {
  Var patch_proj, mlp_hidden, out_proj;
  std::size_t patch = 0;
};

// Tracked binding: gradients flow into trainable Params.
ImageEncoderVars bind(Tape& tape, ImageEncoderParams& params);
// Constant binding for frozen / eval use.
ImageEncoderVars bind(Tape& tape, const ImageEncoderParams& params);

struct ForwardMode {
  bool train = false;
  double dropout_rate = 0.0;
  diff::Rng* rng = nullptr;  // required when train && dropout_rate > 0
};

// Non-overlapping P x P patches in raster order, one flattened patch per row.
Tensor extract_patches(const Tensor& image, std::size_t patch);

// Encodes a batch of H x W images into a B x d_model matrix. Patches go
// through patch_proj, relu, mlp_hidden, relu (dropout here in train mode),
// are averaged per image, then projected by out_proj.
Var encode_images(Tape& tape, const ImageEncoderVars& enc, std::span<const Tensor> images,
                  const ForwardMode& mode);

Embedding encode_image2d(const Tensor& image, const ImageEncoderParams& params);
Embedding encode_image2d(const Tensor& image, const ImageEncoderParams& params,
                         const ForwardMode& mode);

// Eval-mode per-slice embeddings; row i encodes slice i.
SliceStack encode_slices(const data::Volume& volume, const ImageEncoderParams& params,
                         std::size_t max_slices = 64);

}  // namespace slicevlp::enc
