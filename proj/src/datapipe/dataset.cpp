#include "slicevlp/datapipe/dataset.hpp"

#include <algorithm>
#include <set>

#include "slicevlp/datapipe/preprocess.hpp"
#include "slicevlp/datapipe/vol1.hpp"
#include "slicevlp/error.hpp"

namespace slicevlp::data {

std::size_t Dataset::num_classes() const {
  std::int64_t top = -1;
  for (const auto& e : entries) top = std::max(top, e.label);
  return static_cast<std::size_t>(top + 1);
}

Dataset Dataset::subset(Split split) const {
  Dataset out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split != split) continue;
    out.entries.push_back(entries[i]);
    out.volumes.push_back(volumes[i]);
  }
  return out;
}

void Dataset::require_kind(SampleKind kind) const {
  for (const auto& e : entries) {
    if (e.kind != kind) {
      throw InputError("sample '" + e.id + "' has kind " + to_string(e.kind) + ", expected " + to_string(kind));
    }
  }
}

Dataset load_dataset(const std::filesystem::path& data, std::size_t size) {
  const auto manifest = resolve_manifest_path(data);
  Dataset ds;
  ds.entries = load_manifest(manifest);
  const auto root = manifest.parent_path();
  for (const auto& e : ds.entries) {
    Volume v = load_volume(root / e.path);
    if (e.kind == SampleKind::k2d && v.slices() != 1) {
      throw InputError("sample '" + e.id + "' is marked 2d but has " + std::to_string(v.slices()) + " slices");
    }
    ds.volumes.push_back(preprocess_volume(v, size));
  }
  return ds;
}

Dataset dataset_from_samples(const std::vector<SynthSample>& samples, std::size_t size) {
  Dataset ds;
  for (const auto& s : samples) {
    ds.entries.push_back(s.entry);
    ds.volumes.push_back(preprocess_volume(s.volume, size));
  }
  return ds;
}

Dataset merge_datasets(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  const auto offset = static_cast<std::int64_t>(a.num_classes());
  std::set<std::string> ids;
  for (const auto& e : a.entries) ids.insert(e.id);
  for (std::size_t i = 0; i < b.size(); ++i) {
    ManifestEntry e = b.entries[i];
    if (!ids.insert(e.id).second) throw InputError("merge: duplicate id '" + e.id + "'");
    e.label += offset;
    out.entries.push_back(std::move(e));
    out.volumes.push_back(b.volumes[i]);
  }
  return out;
}

std::vector<ManifestEntry> class_caption_entries(const Dataset& ds) {
  const std::size_t classes = ds.num_classes();
  std::vector<std::optional<ManifestEntry>> found(classes);
  for (const auto& e : ds.entries) {
    auto& slot = found[static_cast<std::size_t>(e.label)];
    if (!slot) slot = e;
  }
  std::vector<ManifestEntry> out;
  for (std::size_t c = 0; c < classes; ++c) {
    if (!found[c]) throw InputError("class " + std::to_string(c) + " has no samples");
    out.push_back(*found[c]);
  }
  return out;
}

}  // namespace slicevlp::data
