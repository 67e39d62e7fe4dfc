#include "slicevlp/encoders/encoders.hpp"

#include "slicevlp/diffmath/rng.hpp"
#include "slicevlp/error.hpp"

namespace slicevlp::enc {

namespace {

constexpr double kInitStd = 0.02;

Tensor gaussian(diff::Shape shape, diff::Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, kInitStd);
  return t;
}

}  // namespace

TextEncoderParams init_text_encoder(const TextEncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab == 0 || cfg.d_text == 0 || cfg.d_model == 0) {
    throw ConfigError("text encoder dimensions must be positive");
  }
  diff::Rng rng(diff::derive_seed(seed, "init.text"));
  TextEncoderParams p;
  p.seed = seed;
  p.embed_table = Param("text.embed_table", gaussian({cfg.vocab, cfg.d_text}, rng), false);
  p.proj = Param("text.proj", gaussian({cfg.d_text, cfg.d_model}, rng), false);
  return p;
}

Embedding encode_text(std::span<const std::uint32_t> token_ids, const TextEncoderParams& params) {
  if (token_ids.empty()) throw InputError("encode_text: empty token list");
  const Tensor& table = params.embed_table.value;
  const std::size_t d = table.cols();
  Tensor rows({token_ids.size(), d});
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const std::uint32_t id = token_ids[i];
    if (id >= table.rows()) {
      throw InputError("encode_text: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(table.rows()));
    }
    auto src = table.row(id);
    std::copy(src.begin(), src.end(), rows.row(i).begin());
  }
  Tensor pooled = diff::mean_rows(rows).reshaped({1, d});
  Tensor out = diff::matmul(pooled, params.proj.value);
  return Embedding{out.reshaped({out.cols()})};
}

Tensor encode_texts(std::span<const std::vector<std::uint32_t>> captions,
                    const TextEncoderParams& params) {
  const std::size_t d = params.d_model();
  Tensor out({captions.size(), d});
  for (std::size_t i = 0; i < captions.size(); ++i) {
    Embedding e = encode_text(captions[i], params);
    std::copy(e.vec.data().begin(), e.vec.data().end(), out.row(i).begin());
  }
  return out;
}

void ImageEncoderParams::set_trainable(bool on) {
  for (Param* p : params()) p->trainable = on;
}

ImageEncoderParams init_image_encoder(const ImageEncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.patch == 0 || cfg.d_hidden == 0 || cfg.d_model == 0) {
    throw ConfigError("image encoder dimensions must be positive");
  }
  diff::Rng rng(diff::derive_seed(seed, "init.image"));
  ImageEncoderParams p;
  p.patch = cfg.patch;
  const std::size_t pp = cfg.patch * cfg.patch;
  p.patch_proj = Param("image.patch_proj", gaussian({pp, cfg.d_hidden}, rng));
  p.mlp_hidden = Param("image.mlp_hidden", gaussian({cfg.d_hidden, cfg.d_hidden}, rng));
  p.out_proj = Param("image.out_proj", gaussian({cfg.d_hidden, cfg.d_model}, rng));
  return p;
}

ImageEncoderVars bind(Tape& tape, ImageEncoderParams& params) {
  return {tape.param(params.patch_proj), tape.param(params.mlp_hidden),
          tape.param(params.out_proj), params.patch};
}

ImageEncoderVars bind(Tape& tape, const ImageEncoderParams& params) {
  return {tape.constant_ref(params.patch_proj.value), tape.constant_ref(params.mlp_hidden.value),
          tape.constant_ref(params.out_proj.value), params.patch};
}

Tensor extract_patches(const Tensor& image, std::size_t patch) {
  if (image.rank() != 2) {
    throw InputError("image must be H x W, got " + diff::shape_str(image.shape()));
  }
  const std::size_t h = image.rows(), w = image.cols();
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw InputError("image " + diff::shape_str(image.shape()) +
                     " is not divisible into patches of " + std::to_string(patch));
  }
  const std::size_t ph = h / patch, pw = w / patch;
  Tensor out({ph * pw, patch * patch});
  for (std::size_t by = 0; by < ph; ++by) {
    for (std::size_t bx = 0; bx < pw; ++bx) {
      auto dst = out.row(by * pw + bx);
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          dst[y * patch + x] = image.at(by * patch + y, bx * patch + x);
    }
  }
  return out;
}

Var encode_images(Tape& tape, const ImageEncoderVars& enc, std::span<const Tensor> images,
                  const ForwardMode& mode) {
  if (images.empty()) throw InputError("encode_images: empty batch");
  const diff::Shape& shape0 = images.front().shape();
  std::size_t per_image = 0;
  std::vector<double> rows;
  for (const Tensor& img : images) {
    if (img.shape() != shape0) {
      throw InputError("encode_images: mixed image shapes " + diff::shape_str(shape0) + " and " +
                       diff::shape_str(img.shape()));
    }
    Tensor p = extract_patches(img, enc.patch);
    per_image = p.rows();
    rows.insert(rows.end(), p.data().begin(), p.data().end());
  }
  const std::size_t pp = enc.patch * enc.patch;
  Var patches = tape.constant(Tensor({images.size() * per_image, pp}, std::move(rows)));

  Var h = diff::relu(diff::matmul(patches, enc.patch_proj));
  h = diff::relu(diff::matmul(h, enc.mlp_hidden));
  if (mode.train && mode.dropout_rate > 0.0) {
    if (!mode.rng) throw ContractError("train-mode dropout needs a generator");
    h = diff::dropout(h, mode.dropout_rate, true, *mode.rng);
  }
  Var pooled = diff::mean_row_groups(h, per_image);
  return diff::matmul(pooled, enc.out_proj);
}

Embedding encode_image2d(const Tensor& image, const ImageEncoderParams& params) {
  return encode_image2d(image, params, ForwardMode{});
}

Embedding encode_image2d(const Tensor& image, const ImageEncoderParams& params,
                         const ForwardMode& mode) {
  Tape tape;
  Var out = encode_images(tape, bind(tape, params), std::span<const Tensor>(&image, 1), mode);
  return Embedding{out.value().reshaped({params.d_model()})};
}

SliceStack encode_slices(const data::Volume& volume, const ImageEncoderParams& params,
                         std::size_t max_slices) {
  const std::size_t n = volume.voxels.rank() == 3 ? volume.slices() : 0;
  if (n == 0 || n > max_slices) {
    throw InputError("encode_slices: slice count " + std::to_string(n) + " outside [1, " +
                     std::to_string(max_slices) + "]");
  }
  std::vector<Tensor> slices;
  slices.reserve(n);
  for (std::size_t i = 0; i < n; ++i) slices.push_back(volume.slice(i));
  Tape tape;
  Var out = encode_images(tape, bind(tape, params), slices, ForwardMode{});
  return SliceStack{out.value()};
}

}  // namespace slicevlp::enc
