#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "slicevlp/datapipe/manifest.hpp"
#include "slicevlp/datapipe/synth.hpp"
#include "slicevlp/datapipe/volume.hpp"

namespace slicevlp::data {

// Manifest entries with their preprocessed volumes, in manifest order.
struct Dataset {
  std::vector<ManifestEntry> entries;
  std::vector<Volume> volumes;

  std::size_t size() const { return entries.size(); }
  std::size_t num_classes() const;  // max label + 1
  Dataset subset(Split split) const;
  void require_kind(SampleKind kind) const;  // InputError on any other kind
};

// Loads the manifest (file or directory holding manifest.json) and every
// sample, then preprocesses each volume to size x size (0 keeps native size).
Dataset load_dataset(const std::filesystem::path& data, std::size_t size);

// Preprocesses in-memory synthetic samples the same way load_dataset would.
Dataset dataset_from_samples(const std::vector<SynthSample>& samples, std::size_t size);

// Concatenates two datasets; labels of `b` are shifted past those of `a`.
Dataset merge_datasets(const Dataset& a, const Dataset& b);

// One representative caption entry per class id, taken from the first entry
// carrying that label. Throws InputError if some class id in [0, C) is absent.
std::vector<ManifestEntry> class_caption_entries(const Dataset& ds);

}  // namespace slicevlp::data
