#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slicevlp/datapipe/manifest.hpp"
#include "slicevlp/datapipe/volume.hpp"

namespace slicevlp::data {

enum class SynthFamily { kPattern, kOrderCoded };

SynthFamily parse_synth_family(std::string_view text);  // "pattern" or "order-coded"
const char* to_string(SynthFamily family) noexcept;

// pattern: class c places pattern kind c (square, stripe, disk, blank, cross,
// checker) in a contiguous run of max(1, n/4) slices at a random depth, over
// Gaussian noise.
//
// order-coded: samples come in groups of one volume per class built from the
// same n slices (first half squares, second half stripes, each with its own
// noise). Class c is that sequence rotated by round(c * n / classes), so
// every class shares the group's slice multiset exactly. A group never
// straddles splits.
struct SynthSpec {
  SynthFamily family = SynthFamily::kPattern;
  std::size_t classes = 4;
  std::size_t per_class = 200;
  std::size_t slices = 8;
  std::size_t size = 32;
  double noise = 0.3;
  double amplitude = 2.0;
  std::size_t caption_offset = 0;  // first row of the caption table used
  std::string id_prefix = "s";
  double train_fraction = 0.6;
  double val_fraction = 0.2;

  void validate() const;
};

struct CaptionParts {
  const char* body_region;
  const char* modality;
  const char* condition;  // nullptr when absent
};

// Fixed table of distinct captions; class c uses row caption_offset + c.
const std::vector<CaptionParts>& synth_caption_table();

struct SynthSample {
  ManifestEntry entry;
  Volume volume;
};

std::vector<SynthSample> synth_samples(const SynthSpec& spec, std::uint64_t seed);

// Writes manifest.json and samples/<id>.vol under out_dir; returns the entries.
std::vector<ManifestEntry> synth_dataset(const SynthSpec& spec, std::uint64_t seed,
                                         const std::filesystem::path& out_dir);

}  // namespace slicevlp::data
