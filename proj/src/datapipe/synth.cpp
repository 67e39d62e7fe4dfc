#include "slicevlp/datapipe/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "slicevlp/datapipe/vol1.hpp"
#include "slicevlp/diffmath/rng.hpp"
#include "slicevlp/error.hpp"

namespace slicevlp::data {

namespace fs = std::filesystem;
using diff::Rng;
using diff::Tensor;

SynthFamily parse_synth_family(std::string_view text) {
  if (text == "pattern") return SynthFamily::kPattern;
  if (text == "order-coded" || text == "order_coded") return SynthFamily::kOrderCoded;
  throw ConfigError("unknown synth family '" + std::string(text) + "' (expected pattern or order-coded)");
}

const char* to_string(SynthFamily family) noexcept {
  return family == SynthFamily::kPattern ? "pattern" : "order-coded";
}

const std::vector<CaptionParts>& synth_caption_table() {
  static const std::vector<CaptionParts> table{
      {"Brain", "MRI", "Pituitary Tumor"},
      {"Chest", "X-ray", "Pleural Effusion"},
      {"Abdomen", "CT", "Prostate Lesion"},
      {"Knee", "MRI", nullptr},
      {"Lung", "CT", "Nodule"},
      {"Spine", "MRI", "Disc Herniation"},
      {"Pelvis", "CT", "Fracture"},
      {"Breast", "MRI", "Mass"},
  };
  return table;
}

namespace {

constexpr std::size_t kPatternKinds = 6;

bool pattern_pixel(std::size_t kind, std::size_t r, std::size_t c, std::size_t s) {
  const double x = static_cast<double>(c) + 0.5 - 0.5 * static_cast<double>(s);
  const double y = static_cast<double>(r) + 0.5 - 0.5 * static_cast<double>(s);
  const double q = static_cast<double>(s) / 4.0;
  switch (kind) {
    case 0: return std::abs(x) < q && std::abs(y) < q;                   // square
    case 1: return std::abs(y) < q / 2.0;                                  // horizontal stripe
    case 2: return x * x + y * y < (1.2 * q) * (1.2 * q);                 // disk
    case 3: return false;                                                  // blank
    case 4: return std::abs(x) < q / 3.0 || std::abs(y) < q / 3.0;         // cross
    default: return (x < 0) == (y < 0);                                    // checker
  }
}

Tensor pattern_slice(std::size_t kind, const SynthSpec& spec, Rng& rng) {
  const std::size_t s = spec.size;
  Tensor img({s, s});
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      const double base = pattern_pixel(kind, r, c, s) ? spec.amplitude : 0.0;
      img.at(r, c) = static_cast<float>(base + spec.noise * rng.normal());
    }
  }
  return img;
}

Tensor noise_slice(const SynthSpec& spec, Rng& rng) { return pattern_slice(3, spec, rng); }

// Per-class split assignment for `count` units (samples or groups).
std::vector<Split> assign_splits(std::size_t count, const SynthSpec& spec, Rng& rng) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * count));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * count));
  std::vector<Split> splits(count, Split::kTest);
  for (std::size_t i = 0; i < count; ++i) {
    if (i < n_train) splits[order[i]] = Split::kTrain;
    else if (i < n_train + n_val) splits[order[i]] = Split::kVal;
  }
  return splits;
}

ManifestEntry make_entry(const SynthSpec& spec, std::size_t index, std::size_t label, Split split) {
  char id[32];
  std::snprintf(id, sizeof id, "%05zu", index);
  const auto& row = synth_caption_table()[spec.caption_offset + label];
  ManifestEntry e;
  e.id = spec.id_prefix + id;
  e.path = "samples/" + e.id + ".vol";
  e.kind = spec.slices == 1 ? SampleKind::k2d : SampleKind::k3d;
  e.body_region = row.body_region;
  e.modality = row.modality;
  if (row.condition) e.condition = row.condition;
  e.label = static_cast<std::int64_t>(label);
  e.split = split;
  return e;
}

}  // namespace

void SynthSpec::validate() const {
  if (classes < 2) throw ConfigError("synth: classes must be >= 2");
  if (per_class < 1) throw ConfigError("synth: per_class must be >= 1");
  if (slices < 1) throw ConfigError("synth: slices must be >= 1");
  if (size < 2) throw ConfigError("synth: size must be >= 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("synth: noise must be finite and >= 0");
  if (!std::isfinite(amplitude)) throw ConfigError("synth: amplitude must be finite");
  if (caption_offset + classes > synth_caption_table().size()) {
    throw ConfigError("synth: caption_offset + classes exceeds the " +
                      std::to_string(synth_caption_table().size()) + "-row caption table");
  }
  if (id_prefix.empty()) throw ConfigError("synth: id_prefix must be non-empty");
  if (!(train_fraction >= 0 && val_fraction >= 0 && train_fraction + val_fraction <= 1.0)) {
    throw ConfigError("synth: split fractions must be >= 0 and sum to <= 1");
  }
  if (family == SynthFamily::kPattern && classes > kPatternKinds) {
    throw ConfigError("synth: pattern family supports at most " + std::to_string(kPatternKinds) + " classes");
  }
  if (family == SynthFamily::kOrderCoded) {
    if (slices < 2) throw ConfigError("synth: order-coded family needs >= 2 slices");
    if (slices < classes) throw ConfigError("synth: order-coded family needs slices >= classes");
  }
}

std::vector<SynthSample> synth_samples(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng split_rng(diff::derive_seed(seed, "synth.split"));
  Rng pixel_rng(diff::derive_seed(seed, "synth.pixels"));
  Rng place_rng(diff::derive_seed(seed, "synth.place"));
  std::vector<SynthSample> out;
  out.reserve(spec.classes * spec.per_class);
  const std::size_t n = spec.slices;

  if (spec.family == SynthFamily::kPattern) {
    std::vector<std::vector<Split>> splits;
    for (std::size_t c = 0; c < spec.classes; ++c) splits.push_back(assign_splits(spec.per_class, spec, split_rng));
    const std::size_t run = std::max<std::size_t>(1, n / 4);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      for (std::size_t c = 0; c < spec.classes; ++c) {
        const std::size_t start = static_cast<std::size_t>(place_rng.below(n - run + 1));
        std::vector<Tensor> slices;
        for (std::size_t k = 0; k < n; ++k) {
          const bool in_run = k >= start && k < start + run;
          slices.push_back(in_run ? pattern_slice(c, spec, pixel_rng) : noise_slice(spec, pixel_rng));
        }
        out.push_back({make_entry(spec, out.size(), c, splits[c][i]), make_volume(slices)});
      }
    }
    return out;
  }

  const auto splits = assign_splits(spec.per_class, spec, split_rng);
  for (std::size_t g = 0; g < spec.per_class; ++g) {
    std::vector<Tensor> base;
    for (std::size_t k = 0; k < n; ++k) base.push_back(pattern_slice(k < n / 2 ? 0 : 1, spec, pixel_rng));
    for (std::size_t c = 0; c < spec.classes; ++c) {
      const auto shift = static_cast<std::size_t>(
          std::llround(static_cast<double>(c) * static_cast<double>(n) / static_cast<double>(spec.classes)));
      std::vector<Tensor> slices;
      for (std::size_t k = 0; k < n; ++k) slices.push_back(base[(k + shift) % n]);
      out.push_back({make_entry(spec, out.size(), c, splits[g]), make_volume(slices)});
    }
  }
  return out;
}

std::vector<ManifestEntry> synth_dataset(const SynthSpec& spec, std::uint64_t seed, const fs::path& out_dir) {
  auto samples = synth_samples(spec, seed);
  std::error_code ec;
  fs::create_directories(out_dir / "samples", ec);
  if (ec) throw InputError("cannot create " + (out_dir / "samples").string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  for (const auto& s : samples) {
    save_volume(out_dir / s.entry.path, s.volume);
    entries.push_back(s.entry);
  }
  save_manifest(out_dir / "manifest.json", entries);
  return entries;
}

}  // namespace slicevlp::data
