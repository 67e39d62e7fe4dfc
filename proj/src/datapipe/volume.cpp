#include "slicevlp/datapipe/volume.hpp"

#include <algorithm>

#include "slicevlp/error.hpp"

namespace slicevlp::data {

diff::Tensor Volume::slice(std::size_t i) const {
  if (i >= slices()) throw InputError("slice index " + std::to_string(i) + " out of range");
  const std::size_t hw = height() * width();
  auto src = voxels.data().subspan(i * hw, hw);
  return diff::Tensor({height(), width()}, std::vector<double>(src.begin(), src.end()));
}

void Volume::set_slice(std::size_t i, const diff::Tensor& image) {
  if (i >= slices() || image.shape() != diff::Shape{height(), width()}) {
    throw DimensionError("set_slice: image " + diff::shape_str(image.shape()) +
                         " does not fit volume " + diff::shape_str(voxels.shape()));
  }
  const std::size_t hw = height() * width();
  std::copy(image.data().begin(), image.data().end(), voxels.data().begin() + i * hw);
}

Volume make_volume(std::span<const diff::Tensor> slices) {
  if (slices.empty()) throw InputError("volume needs at least one slice");
  const auto& s0 = slices.front().shape();
  if (s0.size() != 2) throw DimensionError("slice must be a matrix, got " + diff::shape_str(s0));
  Volume v{diff::Tensor({slices.size(), s0[0], s0[1]})};
  for (std::size_t i = 0; i < slices.size(); ++i) v.set_slice(i, slices[i]);
  return v;
}

}  // namespace slicevlp::data
