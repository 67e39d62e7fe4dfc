#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "slicevlp/datapipe/volume.hpp"

namespace slicevlp::data {

// VOL1 container, little-endian: "VOL1", u32 n, u32 H, u32 W, then n*H*W
// float32 voxels, slice-major then row-major.
std::string encode_vol1(const Volume& volume);
Volume decode_vol1(std::string_view bytes);

Volume load_volume(const std::filesystem::path& path);
void save_volume(const std::filesystem::path& path, const Volume& volume);

}  // namespace slicevlp::data
