#pragma once

#include <cstddef>

#include "slicevlp/datapipe/volume.hpp"

namespace slicevlp::data {

// Bilinear resize with half-pixel centers: output pixel j samples the source
// at (j + 0.5) * in / out - 0.5, clamped to the image.
diff::Tensor resize_bilinear(const diff::Tensor& image, std::size_t out_h, std::size_t out_w);

// (x - mean) / max(std, eps) with the population standard deviation.
diff::Tensor zscore(const diff::Tensor& image, double eps = 1e-8);

// Resize every slice to size x size (0 keeps the native size), then z-score
// each slice.
Volume preprocess_volume(const Volume& volume, std::size_t size);

}  // namespace slicevlp::data
