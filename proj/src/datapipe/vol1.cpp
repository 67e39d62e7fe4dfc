#include "slicevlp/datapipe/vol1.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "slicevlp/error.hpp"

namespace slicevlp::data {

namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', '1'};
constexpr std::size_t kHeader = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_vol1(const Volume& volume) {
  const auto& v = volume.voxels;
  if (v.rank() != 3) throw DimensionError("VOL1 volume must be n x H x W, got " + diff::shape_str(v.shape()));
  for (std::size_t d = 0; d < 3; ++d) {
    if (v.dim(d) > std::numeric_limits<std::uint32_t>::max()) throw InputError("VOL1 dimension too large");
  }
  std::string out(kMagic, 4);
  out.reserve(kHeader + 4 * v.size());
  put_u32(out, static_cast<std::uint32_t>(v.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(v.dim(1)));
  put_u32(out, static_cast<std::uint32_t>(v.dim(2)));
  for (double x : v.data()) {
    const auto f = static_cast<float>(x);
    if (!std::isfinite(f)) throw InputError("VOL1 cannot store non-finite voxel");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Volume decode_vol1(std::string_view bytes) {
  if (bytes.size() < kHeader) throw FormatError("VOL1: file shorter than header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("VOL1: bad magic");
  const std::uint64_t n = get_u32(bytes, 4), h = get_u32(bytes, 8), w = get_u32(bytes, 12);
  if (n == 0 || h == 0 || w == 0) throw FormatError("VOL1: zero dimension in header");
  const std::uint64_t count = n * h * w;
  const std::uint64_t expected = kHeader + 4 * count;
  if (bytes.size() < expected) {
    throw FormatError("VOL1: truncated payload (" + std::to_string(bytes.size()) + " of " +
                      std::to_string(expected) + " bytes)");
  }
  if (bytes.size() > expected) throw FormatError("VOL1: trailing bytes after payload");
  Volume vol{diff::Tensor({n, h, w})};
  auto data = vol.voxels.data();
  for (std::uint64_t i = 0; i < count; ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, kHeader + 4 * i));
    if (!std::isfinite(f)) throw FormatError("VOL1: non-finite voxel at index " + std::to_string(i));
    data[i] = f;
  }
  return vol;
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("VOL1: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return decode_vol1(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_volume(const std::filesystem::path& path, const Volume& volume) {
  const std::string bytes = encode_vol1(volume);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace slicevlp::data
