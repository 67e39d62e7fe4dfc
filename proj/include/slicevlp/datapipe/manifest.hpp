#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slicevlp::data {

enum class SampleKind { k2d, k3d };
enum class Split { kTrain, kVal, kTest };

const char* to_string(SampleKind kind) noexcept;
const char* to_string(Split split) noexcept;
SampleKind parse_sample_kind(std::string_view text);
Split parse_split(std::string_view text);

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  SampleKind kind = SampleKind::k2d;
  std::string body_region;
  std::string modality;
  std::optional<std::string> condition;
  std::int64_t label = 0;
  Split split = Split::kTrain;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// Parses and validates a manifest document (top-level JSON list). Sample paths
// are not checked here.
std::vector<ManifestEntry> parse_manifest(std::string_view text);
std::string manifest_to_json(const std::vector<ManifestEntry>& entries);

// parse_manifest plus a check that every sample path exists relative to the
// manifest's directory. All failures raise LoadError with line context.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// Accepts either a manifest file or a directory holding manifest.json.
std::filesystem::path resolve_manifest_path(const std::filesystem::path& data);

}  // namespace slicevlp::data
