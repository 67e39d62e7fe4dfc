#pragma once

#include <cstddef>
#include <span>

#include "slicevlp/diffmath/tensor.hpp"

namespace slicevlp::data {

// n x H x W voxels, slice-major. 2D samples have n == 1.
struct Volume {
  diff::Tensor voxels;

  std::size_t slices() const { return voxels.dim(0); }
  std::size_t height() const { return voxels.dim(1); }
  std::size_t width() const { return voxels.dim(2); }

  diff::Tensor slice(std::size_t i) const;
  void set_slice(std::size_t i, const diff::Tensor& image);
};

// Stacks H x W images into a volume; all must share one shape.
Volume make_volume(std::span<const diff::Tensor> slices);

}  // namespace slicevlp::data
