#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include "doctest.h"
#include "slicevlp/datapipe/dataset.hpp"
#include "slicevlp/datapipe/preprocess.hpp"
#include "slicevlp/datapipe/text.hpp"
#include "slicevlp/datapipe/vol1.hpp"
#include "slicevlp/encoders/encoders.hpp"
#include "slicevlp/error.hpp"
#include "slicevlp/slice_pool/slice_pool.hpp"

using namespace slicevlp;
using namespace slicevlp::data;
using diff::Rng;
using diff::Tensor;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("slicevlp_test_datapipe_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ManifestEntry sample_entry(const std::string& id) {
  ManifestEntry e;
  e.id = id;
  e.path = "samples/" + id + ".vol";
  e.kind = SampleKind::k3d;
  e.body_region = "Brain";
  e.modality = "MRI";
  e.condition = "Pituitary Tumor";
  e.label = 1;
  e.split = Split::kVal;
  return e;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const LoadError& e) {
    return e.what();
  }
  return "<no LoadError>";
}

Tensor random_image(std::size_t h, std::size_t w, Rng& rng) {
  Tensor t({h, w});
  for (double& v : t.data()) v = rng.uniform(-3, 5);
  return t;
}

std::string vol1_bytes(std::uint32_t n, std::uint32_t h, std::uint32_t w, const std::vector<float>& payload) {
  std::string out = "VOL1";
  for (std::uint32_t v : {n, h, w})
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  for (float f : payload) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  return out;
}

}  // namespace

TEST_CASE("manifest parsing") {
  CHECK(parse_manifest("[]").empty());

  std::vector<ManifestEntry> entries{sample_entry("a"), sample_entry("b")};
  entries[1].condition.reset();
  entries[1].kind = SampleKind::k2d;
  entries[1].split = Split::kTest;
  entries[1].label = 0;
  CHECK(parse_manifest(manifest_to_json(entries)) == entries);

  auto dup = manifest_to_json({sample_entry("x1"), sample_entry("x1")});
  auto msg = error_text([&] { parse_manifest(dup); });
  CHECK(msg.find("duplicate id 'x1'") != std::string::npos);
  CHECK(msg.find("line") != std::string::npos);

  msg = error_text([] { parse_manifest("[\n{\"id\": \"a\",\n  oops }\n]"); });
  CHECK(msg.find("line 3") != std::string::npos);

  CHECK_THROWS_AS(parse_manifest("{}"), LoadError);
  auto bad_label = manifest_to_json({sample_entry("a")});
  bad_label.replace(bad_label.find("\"label\": 1"), 10, "\"label\": -1");
  CHECK_THROWS_AS(parse_manifest(bad_label), LoadError);
  auto bad_kind = manifest_to_json({sample_entry("a")});
  bad_kind.replace(bad_kind.find("\"3d\""), 4, "\"4d\"");
  CHECK_THROWS_AS(parse_manifest(bad_kind), LoadError);
  CHECK_THROWS_AS(parse_manifest("[{\"id\": \"a\"}]"), LoadError);
}

TEST_CASE("manifest files and dangling paths") {
  auto dir = scratch_dir("manifest");
  std::vector<ManifestEntry> entries{sample_entry("a")};
  save_manifest(dir / "manifest.json", entries);
  auto msg = error_text([&] { load_manifest(dir / "manifest.json"); });
  CHECK(msg.find("samples/a.vol") != std::string::npos);

  fs::create_directories(dir / "samples");
  save_volume(dir / "samples/a.vol", Volume{Tensor({1, 2, 2}, 1.0)});
  CHECK(load_manifest(dir / "manifest.json") == entries);
  CHECK(resolve_manifest_path(dir) == dir / "manifest.json");
  CHECK_THROWS_AS(load_manifest(dir / "missing.json"), LoadError);
  fs::remove_all(dir);
}

TEST_CASE("VOL1 container") {
  Rng rng(1);
  Volume v{Tensor({3, 4, 5})};
  for (double& x : v.voxels.data()) x = static_cast<float>(rng.normal());
  const std::string bytes = encode_vol1(v);
  CHECK(bytes.size() == 16 + 4 * 60);
  CHECK(bytes.substr(0, 4) == "VOL1");
  CHECK(static_cast<unsigned char>(bytes[4]) == 3);
  Volume back = decode_vol1(bytes);
  CHECK(back.voxels.shape() == v.voxels.shape());
  CHECK(diff::bitwise_equal(back.voxels, v.voxels));

  auto one = decode_vol1(vol1_bytes(1, 1, 2, {1.5f, -2.0f}));
  CHECK(one.voxels[0] == 1.5);
  CHECK(one.voxels[1] == -2.0);

  std::string bad = bytes;
  bad[3] = '2';
  CHECK_THROWS_AS(decode_vol1(bad), FormatError);
  CHECK_THROWS_AS(decode_vol1(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_vol1(bytes.substr(0, 10)), FormatError);
  CHECK_THROWS_AS(decode_vol1(bytes + "x"), FormatError);
  CHECK_THROWS_AS(decode_vol1(vol1_bytes(1, 1, 2, {1.0f, std::nanf("")})), FormatError);
  CHECK_THROWS_AS(decode_vol1(vol1_bytes(1, 1, 1, {INFINITY})), FormatError);
  CHECK_THROWS_AS(decode_vol1(vol1_bytes(0, 1, 1, {})), FormatError);

  auto dir = scratch_dir("vol1");
  save_volume(dir / "v.vol", v);
  CHECK(diff::bitwise_equal(load_volume(dir / "v.vol").voxels, v.voxels));
  CHECK_THROWS_AS(load_volume(dir / "none.vol"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("resize_bilinear examples") {
  Rng rng(2);
  Tensor img = random_image(7, 5, rng);
  CHECK(diff::max_abs_diff(resize_bilinear(img, 7, 5), img) <= 1e-12);

  Tensor flat({6, 9}, 0.37);
  Tensor up = resize_bilinear(flat, 13, 4);
  for (double v : up.data()) CHECK(v == 0.37);

  Tensor two = Tensor::matrix({{0, 0}, {2, 2}});
  CHECK(resize_bilinear(two, 1, 1).item() == 1.0);

  CHECK_THROWS_AS(resize_bilinear(img, 0, 3), InputError);
  CHECK_THROWS_AS(resize_bilinear(img, 3, 0), InputError);
}

TEST_CASE("resize_bilinear reproduces linear ramps at half-pixel sample points") {
  // A bilinear interpolant is exact on affine images wherever no clamping occurs.
  auto ramp = [](double r, double c) { return 0.75 * r - 1.25 * c + 3.0; };
  Tensor img({8, 12});
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 12; ++c) img.at(r, c) = ramp(r, c);
  for (auto [oh, ow] : {std::pair{4u, 6u}, std::pair{5u, 7u}, std::pair{16u, 24u}}) {
    Tensor out = resize_bilinear(img, oh, ow);
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double sr = (i + 0.5) * 8.0 / oh - 0.5, sc = (j + 0.5) * 12.0 / ow - 0.5;
        sr = std::clamp(sr, 0.0, 7.0);
        sc = std::clamp(sc, 0.0, 11.0);
        CHECK(std::abs(out.at(i, j) - ramp(sr, sc)) < 1e-12);
      }
    }
  }
}

TEST_CASE("zscore") {
  Tensor two = Tensor::matrix({{0, 2}});
  CHECK(zscore(two) == Tensor::matrix({{-1, 1}}));
  Tensor flat = zscore(Tensor({4, 4}, 5.5));
  for (double v : flat.data()) CHECK(v == 0.0);

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor z = zscore(random_image(9, 11, rng));
    double mean = 0, var = 0;
    for (double v : z.data()) mean += v;
    mean /= z.size();
    for (double v : z.data()) var += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(var / z.size()) - 1.0) < 1e-10);
  }
}

TEST_CASE("preprocess resizes before normalizing each slice") {
  Rng rng(4);
  std::vector<Tensor> slices{random_image(6, 6, rng), random_image(6, 6, rng)};
  Volume v = make_volume(slices);
  Volume p = preprocess_volume(v, 4);
  CHECK(p.voxels.shape() == diff::Shape{2, 4, 4});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(diff::bitwise_equal(p.slice(i), zscore(resize_bilinear(slices[i], 4, 4))));
  }
  Volume native = preprocess_volume(v, 0);
  CHECK(diff::bitwise_equal(native.slice(1), zscore(slices[1])));
}

TEST_CASE("build_caption") {
  CHECK(build_caption("Brain", "MRI", "Pituitary Tumor") == "Brain MRI with Pituitary Tumor");
  CHECK(build_caption("Abdomen", "CT", "Prostate Lesion") == "Abdomen CT with Prostate Lesion");
  CHECK(build_caption("Chest", "X-ray") == "Chest X-ray");
  ManifestEntry e = sample_entry("a");
  CHECK(build_caption(e) == "Brain MRI with Pituitary Tumor");
  e.condition.reset();
  CHECK(build_caption(e) == "Brain MRI");
  CHECK_THROWS_AS(build_caption("", "MRI"), InputError);
  CHECK_THROWS_AS(build_caption("Brain", ""), InputError);
}

TEST_CASE("tokenize") {
  CHECK(tokenize("MRI") == tokenize("mri"));
  CHECK(tokenize("MRI").size() == 1);
  auto a = tokenize("Brain MRI"), b = tokenize("MRI Brain");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  CHECK(tokenize("brain") == std::vector<std::uint32_t>{2771});
  CHECK(tokenize("Chest X-ray") == std::vector<std::uint32_t>{2582, 1799, 1887});
  CHECK(tokenize("  brain,,MRI!! ") == tokenize("brain mri"));
  for (auto id : tokenize("Abdomen CT with Prostate Lesion")) CHECK(id < 4096);
  CHECK(tokenize("brain", 10)[0] == 0xb48f021dfddefad3ULL % 10);
  CHECK_THROWS_AS(tokenize("--- !!"), InputError);
  CHECK_THROWS_AS(tokenize(""), InputError);
}

TEST_CASE("synthetic corpora are reproducible") {
  SynthSpec spec;
  spec.per_class = 6;
  spec.size = 8;
  auto a = synth_samples(spec, 11);
  auto b = synth_samples(spec, 11);
  auto c = synth_samples(spec, 12);
  REQUIRE(a.size() == 24);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].entry == b[i].entry);
    CHECK(diff::bitwise_equal(a[i].volume.voxels, b[i].volume.voxels));
    any_diff |= !(a[i].volume.voxels == c[i].volume.voxels);
  }
  CHECK(any_diff);

  std::map<std::int64_t, std::map<Split, int>> counts;
  for (const auto& s : a) counts[s.entry.label][s.entry.split]++;
  for (auto& [label, by_split] : counts) {
    CHECK(by_split[Split::kTrain] == 4);
    CHECK(by_split[Split::kVal] == 1);
    CHECK(by_split[Split::kTest] == 1);
  }
  CHECK(build_caption(a[0].entry) == "Brain MRI with Pituitary Tumor");
  CHECK(build_caption(a[3].entry) == "Knee MRI");
}

TEST_CASE("order-coded groups share one slice multiset") {
  SynthSpec spec;
  spec.family = SynthFamily::kOrderCoded;
  spec.classes = 2;
  spec.per_class = 5;
  spec.size = 16;
  auto samples = synth_samples(spec, 3);
  REQUIRE(samples.size() == 10);
  auto encoder = enc::init_image_encoder({}, 1);
  for (std::size_t g = 0; g < 5; ++g) {
    const auto& s0 = samples[2 * g];
    const auto& s1 = samples[2 * g + 1];
    CHECK(s0.entry.label == 0);
    CHECK(s1.entry.label == 1);
    CHECK(s0.entry.split == s1.entry.split);
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(diff::bitwise_equal(s1.volume.slice(k), s0.volume.slice((k + 4) % 8)));
    }
    auto p0 = preprocess_volume(s0.volume, 16), p1 = preprocess_volume(s1.volume, 16);
    auto g0 = pool::gap_pool(enc::encode_slices(p0, encoder));
    auto g1 = pool::gap_pool(enc::encode_slices(p1, encoder));
    CHECK(diff::bitwise_equal(g0.vec, g1.vec));
  }

  spec.classes = 4;
  auto four = synth_samples(spec, 3);
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(diff::bitwise_equal(four[2].volume.slice(k), four[0].volume.slice((k + 4) % 8)));
    CHECK(diff::bitwise_equal(four[3].volume.slice(k), four[0].volume.slice((k + 6) % 8)));
  }
}

TEST_CASE("synth spec validation") {
  SynthSpec spec;
  spec.classes = 1;
  CHECK_THROWS_AS(synth_samples(spec, 0), ConfigError);
  spec = {};
  spec.classes = 7;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.caption_offset = 6;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.family = SynthFamily::kOrderCoded;
  spec.slices = 1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.train_fraction = 0.9;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  CHECK_THROWS_AS(parse_synth_family("spiral"), ConfigError);
  CHECK(parse_synth_family("order-coded") == SynthFamily::kOrderCoded);
}

TEST_CASE("synth_dataset on disk round-trips through load_dataset") {
  auto dir = scratch_dir("synth");
  SynthSpec spec;
  spec.per_class = 3;
  spec.size = 8;
  spec.slices = 4;
  auto entries = synth_dataset(spec, 5, dir);
  CHECK(fs::exists(dir / "manifest.json"));
  Dataset loaded = load_dataset(dir, 8);
  Dataset direct = dataset_from_samples(synth_samples(spec, 5), 8);
  REQUIRE(loaded.size() == direct.size());
  CHECK(loaded.entries == entries);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(diff::bitwise_equal(loaded.volumes[i].voxels, direct.volumes[i].voxels));
  }
  CHECK(loaded.num_classes() == 4);
  CHECK_THROWS_AS(loaded.require_kind(SampleKind::k2d), InputError);
  CHECK(loaded.subset(Split::kTrain).size() + loaded.subset(Split::kVal).size() +
            loaded.subset(Split::kTest).size() ==
        loaded.size());
  fs::remove_all(dir);
}

TEST_CASE("merge_datasets offsets labels") {
  SynthSpec a;
  a.classes = 2;
  a.per_class = 2;
  a.size = 8;
  a.slices = 4;
  a.id_prefix = "p";
  SynthSpec b = a;
  b.family = SynthFamily::kOrderCoded;
  b.caption_offset = 4;
  b.id_prefix = "o";
  auto da = dataset_from_samples(synth_samples(a, 1), 0);
  auto db = dataset_from_samples(synth_samples(b, 1), 0);
  auto merged = merge_datasets(da, db);
  CHECK(merged.size() == 8);
  CHECK(merged.num_classes() == 4);
  auto captions = class_caption_entries(merged);
  CHECK(build_caption(captions[2]) == "Lung CT with Nodule");
  CHECK_THROWS_AS(merge_datasets(da, da), InputError);
}
