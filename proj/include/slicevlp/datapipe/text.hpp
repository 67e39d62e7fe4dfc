#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "slicevlp/datapipe/manifest.hpp"

namespace slicevlp::data {

inline constexpr std::size_t kDefaultVocab = 4096;

struct Caption {
  std::string text;
  std::vector<std::uint32_t> token_ids;
};

// "{body_region} {modality}" plus " with {condition}" when a condition is set.
std::string build_caption(const ManifestEntry& entry);
std::string build_caption(std::string_view body_region, std::string_view modality,
                          std::string_view condition = {});

// Lowercases, splits on runs of non-alphanumeric characters and maps each word
// to FNV-1a-64(word) mod vocab.
std::vector<std::uint32_t> tokenize(std::string_view text, std::size_t vocab = kDefaultVocab);

Caption make_caption(const ManifestEntry& entry, std::size_t vocab = kDefaultVocab);

}  // namespace slicevlp::data
