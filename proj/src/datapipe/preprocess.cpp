#include "slicevlp/datapipe/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "slicevlp/diffmath/ops.hpp"
#include "slicevlp/error.hpp"

namespace slicevlp::data {

namespace {

struct Tap {
  std::size_t lo, hi;
  double t;
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> result(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t j = 0; j < out; ++j) {
    double src = (static_cast<double>(j) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    result[j] = {lo, hi, src - static_cast<double>(lo)};
  }
  return result;
}

double lerp(double a, double b, double t) { return t == 0.0 ? a : a + t * (b - a); }

}  // namespace

diff::Tensor resize_bilinear(const diff::Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 2) throw DimensionError("resize_bilinear expects H x W, got " + diff::shape_str(image.shape()));
  if (image.rows() == 0 || image.cols() == 0) throw InputError("resize_bilinear: empty source image");
  if (out_h == 0 || out_w == 0) throw InputError("resize_bilinear: target size must be >= 1");
  const auto ty = taps(image.rows(), out_h);
  const auto tx = taps(image.cols(), out_w);
  diff::Tensor out({out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const double top = lerp(image.at(ty[i].lo, tx[j].lo), image.at(ty[i].lo, tx[j].hi), tx[j].t);
      const double bottom = lerp(image.at(ty[i].hi, tx[j].lo), image.at(ty[i].hi, tx[j].hi), tx[j].t);
      out.at(i, j) = lerp(top, bottom, ty[i].t);
    }
  }
  return out;
}

diff::Tensor zscore(const diff::Tensor& image, double eps) {
  diff::Tensor out = image;
  const std::size_t n = image.size();
  if (n == 0) return out;
  const double mean = diff::exact_sum(image.data()) / static_cast<double>(n);
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (image[i] - mean) * (image[i] - mean);
  const double sd = std::sqrt(diff::exact_sum(sq) / static_cast<double>(n));
  const double denom = std::max(sd, eps);
  for (double& v : out.data()) v = (v - mean) / denom;
  return out;
}

Volume preprocess_volume(const Volume& volume, std::size_t size) {
  const std::size_t h = size == 0 ? volume.height() : size;
  const std::size_t w = size == 0 ? volume.width() : size;
  Volume out{diff::Tensor({volume.slices(), h, w})};
  for (std::size_t i = 0; i < volume.slices(); ++i) {
    diff::Tensor s = volume.slice(i);
    if (s.rows() != h || s.cols() != w) s = resize_bilinear(s, h, w);
    out.set_slice(i, zscore(s));
  }
  return out;
}

}  // namespace slicevlp::data
