#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "slicevlp/error.hpp"
#include "slicevlp/evalkit/evalkit.hpp"
#include "slicevlp/trainer/train.hpp"

using namespace slicevlp;
using namespace slicevlp::eval;
using diff::Rng;
using diff::Tensor;
namespace fs = std::filesystem;

namespace {

train::TrainConfig small_config() {
  train::TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.lr0 = 1e-3;
  c.lr_min = 1e-5;
  c.d_model = 16;
  c.d_text = 16;
  c.d_hidden = 32;
  c.vocab = 256;
  c.max_slices = 8;
  c.heads = 2;
  c.image_size = 16;
  c.seed = 17;
  return c;
}

data::Dataset corpus(data::SynthFamily family, std::size_t per_class, std::size_t slices = 8) {
  data::SynthSpec s;
  s.family = family;
  s.classes = family == data::SynthFamily::kPattern ? 4 : 2;
  s.per_class = per_class;
  s.slices = slices;
  s.size = 16;
  return data::dataset_from_samples(data::synth_samples(s, 5), 16);
}

EmbeddingTable table_of(const Tensor& x, const std::vector<std::int64_t>& labels) {
  EmbeddingTable t;
  t.embeddings = x;
  t.labels = labels;
  for (std::size_t i = 0; i < labels.size(); ++i) t.ids.push_back("r" + std::to_string(i));
  return t;
}

// Two classes at +-(10, 0, ...) with small jitter on the remaining axes.
EmbeddingTable separable(std::size_t per_class, std::size_t d, Rng& rng) {
  Tensor x({2 * per_class, d});
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const std::int64_t y = static_cast<std::int64_t>(i % 2);
    labels.push_back(y);
    x.at(i, 0) = y == 0 ? 10.0 : -10.0;
    for (std::size_t j = 1; j < d; ++j) x.at(i, j) = 0.01 * rng.normal();
  }
  return table_of(x, labels);
}

bool rows_equal(const Tensor& m, std::size_t a, std::size_t b) {
  return std::equal(m.row(a).begin(), m.row(a).end(), m.row(b).begin());
}

}  // namespace

TEST_CASE("extract_embeddings is deterministic and row-aligned") {
  auto cfg = small_config();
  auto ckpt = train::initial_checkpoint(cfg);
  auto ds = corpus(data::SynthFamily::kPattern, 3);
  for (auto mode : {pool::PoolMode::kGap, pool::PoolMode::kAttention}) {
    auto a = extract_embeddings(ckpt, ds, mode);
    auto b = extract_embeddings(ckpt, ds, mode);
    CHECK(diff::bitwise_equal(a.embeddings, b.embeddings));
    CHECK(a.size() == ds.size());
    CHECK(a.dim() == 16);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(a.ids[i] == ds.entries[i].id);
      CHECK(a.labels[i] == ds.entries[i].label);
    }
  }

  data::Dataset dup = ds;
  dup.entries.push_back(ds.entries[2]);
  dup.entries.back().id = "copy";
  dup.volumes.push_back(ds.volumes[2]);
  auto t = extract_embeddings(ckpt, dup, pool::PoolMode::kAttention);
  CHECK(rows_equal(t.embeddings, 2, dup.size() - 1));
}

TEST_CASE("order-coded pair: gap rows coincide, attention rows differ") {
  auto cfg = small_config();
  auto ckpt = train::initial_checkpoint(cfg);
  Rng rng(6);
  for (diff::Param* p : ckpt.model.adapter.params())
    for (double& v : p->value.data()) v = rng.uniform(-1, 1);
  auto ds = corpus(data::SynthFamily::kOrderCoded, 2);
  REQUIRE(ds.entries[0].label != ds.entries[1].label);
  auto gap = extract_embeddings(ckpt, ds, pool::PoolMode::kGap);
  auto attn = extract_embeddings(ckpt, ds, pool::PoolMode::kAttention);
  CHECK(rows_equal(gap.embeddings, 0, 1));
  CHECK(rows_equal(gap.embeddings, 2, 3));

  // Direct evaluation of the mean of per-slice embeddings.
  auto stack = enc::encode_slices(ds.volumes[0], ckpt.model.image);
  for (std::size_t j = 0; j < 16; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < stack.n(); ++i) s += stack.mat.at(i, j);
    CHECK(std::abs(gap.embeddings.at(0, j) - s / static_cast<double>(stack.n())) < 1e-12);
  }

  double diffmax = 0.0;
  for (std::size_t j = 0; j < 16; ++j)
    diffmax = std::max(diffmax, std::abs(attn.embeddings.at(0, j) - attn.embeddings.at(1, j)));
  CHECK(diffmax > 1e-6);
}

TEST_CASE("extract_embeddings on 2D samples and incompatible checkpoints") {
  auto cfg = small_config();
  auto ckpt = train::initial_checkpoint(cfg);
  auto ds = corpus(data::SynthFamily::kPattern, 2, 1);
  auto t = extract_embeddings(ckpt, ds, pool::PoolMode::kAttention);
  auto direct = enc::encode_image2d(ds.volumes[0].slice(0), ckpt.model.image);
  CHECK(std::equal(direct.vec.data().begin(), direct.vec.data().end(), t.embeddings.row(0).begin()));

  auto other = cfg;
  other.d_model = 8;
  auto bad = ckpt;
  bad.model.adapter = train::initial_checkpoint(other).model.adapter;
  CHECK_THROWS_AS(extract_embeddings(bad, corpus(data::SynthFamily::kPattern, 2), pool::PoolMode::kAttention),
                  CompatibilityError);
}

TEST_CASE("embedding CSV round trip") {
  Rng rng(4);
  Tensor x({5, 3});
  for (double& v : x.data()) v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
  auto t = table_of(x, {0, 1, 2, 1, 0});
  auto back = parse_embedding_csv(embedding_csv(t));
  CHECK(back.ids == t.ids);
  CHECK(back.labels == t.labels);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(back.embeddings[i] - x[i]) <= 1e-9 * std::max(1.0, std::abs(x[i])));
  }
  CHECK(embedding_csv(back) == embedding_csv(t));

  fs::path p = fs::temp_directory_path() / "slicevlp_test_embeddings.csv";
  write_embedding_csv(p, t);
  CHECK(read_embedding_csv(p).ids == t.ids);
  fs::remove(p);

  CHECK_THROWS_AS(parse_embedding_csv(""), FormatError);
  CHECK_THROWS_AS(parse_embedding_csv("id,label,e0\na,0,1,2\n"), FormatError);
  CHECK_THROWS_AS(parse_embedding_csv("id,label,e0\na,x,1\n"), FormatError);
  CHECK_THROWS_AS(parse_embedding_csv("id,label,e0\na,0,abc\n"), FormatError);
  CHECK_THROWS_AS(parse_embedding_csv("name,label,e0\na,0,1\n"), FormatError);
  CHECK_THROWS_AS(read_embedding_csv("/nonexistent/table.csv"), FormatError);
}

TEST_CASE("EmbeddingTable validation") {
  auto t = table_of(Tensor({2, 2}), {0, 1});
  CHECK_NOTHROW(t.validate());
  t.ids[1] = t.ids[0];
  CHECK_THROWS_AS(t.validate(), InputError);
  auto neg = table_of(Tensor({2, 2}), {0, -1});
  CHECK_THROWS_AS(neg.validate(), InputError);
}

TEST_CASE("stratified folds partition the data and are seeded") {
  std::vector<std::int64_t> labels;
  for (int i = 0; i < 53; ++i) labels.push_back(i % 3 == 0 ? 0 : (i % 3 == 1 ? 1 : 2));
  auto a = stratified_folds(labels, 5, 11);
  auto b = stratified_folds(labels, 5, 11);
  auto c = stratified_folds(labels, 5, 12);
  CHECK(a == b);
  CHECK(a != c);
  REQUIRE(a.size() == labels.size());
  for (std::size_t f : a) CHECK(f < 5);
  for (std::int64_t cls = 0; cls < 3; ++cls) {
    std::vector<std::size_t> count(5, 0);
    std::size_t members = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) {
        ++count[a[i]];
        ++members;
      }
    }
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    CHECK(*hi - *lo <= 1);
    CHECK(std::accumulate(count.begin(), count.end(), std::size_t{0}) == members);
  }
}

TEST_CASE("macro_f1") {
  CHECK(macro_f1({0, 1, 0, 1}, {0, 1, 0, 1}, 2) == 1.0);
  // Oracle: per-class F1 computed by hand. class 0: tp 2 fp 1 fn 0 -> 0.8;
  // class 1: tp 1 fp 1 fn 1 -> 0.5; class 2: tp 0 -> 0.
  const double f = macro_f1({0, 0, 1, 1, 2}, {0, 0, 1, 0, 1}, 3);
  CHECK(std::abs(f - (0.8 + 0.5 + 0.0) / 3.0) < 1e-15);

  // Balanced binary with symmetric confusion: macro-F1 equals accuracy.
  std::vector<std::int64_t> truth, pred;
  for (int i = 0; i < 20; ++i) {
    truth.push_back(i < 10 ? 0 : 1);
    pred.push_back(i < 7 || (i >= 10 && i < 13) ? 0 : 1);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  CHECK(std::abs(macro_f1(truth, pred, 2) - static_cast<double>(correct) / 20.0) < 1e-15);
  CHECK_THROWS_AS(macro_f1({0, 1}, {0}, 2), InputError);
}

TEST_CASE("linear probe on separable embeddings") {
  Rng rng(1);
  auto t = separable(50, 6, rng);
  auto r = linear_probe_cv(t, 3);
  REQUIRE(r.folds.size() == 5);
  std::size_t held = 0;
  for (const auto& f : r.folds) {
    CHECK(f.accuracy == 1.0);
    CHECK(f.macro_f1 == 1.0);
    held += f.held_out;
  }
  CHECK(held == t.size());
  CHECK(r.accuracy_mean == 1.0);
  CHECK(r.accuracy_std == 0.0);

  auto again = linear_probe_cv(t, 3);
  for (std::size_t k = 0; k < 5; ++k) CHECK(again.folds[k].accuracy == r.folds[k].accuracy);

  ProbeSettings raw;
  raw.standardize = false;
  for (const auto& f : linear_probe_cv(t, 3, raw).folds) CHECK(f.accuracy == 1.0);
}

TEST_CASE("linear probe on shuffled labels is at chance") {
  Rng rng(2);
  Tensor x({200, 8});
  for (double& v : x.data()) v = rng.normal();
  std::vector<std::int64_t> labels(200);
  for (std::size_t i = 0; i < 200; ++i) labels[i] = static_cast<std::int64_t>(i % 2);
  rng.shuffle(labels);
  auto r = linear_probe_cv(table_of(x, labels), 9);
  CHECK(std::abs(r.accuracy_mean - 0.5) <= 0.1);
  for (const auto& f : r.folds) {
    CHECK(f.accuracy >= 0.0);
    CHECK(f.accuracy <= 1.0);
  }
}

TEST_CASE("linear probe precondition errors") {
  CHECK_THROWS_AS(linear_probe_cv(table_of(Tensor({10, 2}), std::vector<std::int64_t>(10, 1)), 0),
                  EvaluationError);
  std::vector<std::int64_t> labels(12, 0);
  labels[0] = labels[1] = labels[2] = 1;
  try {
    linear_probe_cv(table_of(Tensor({12, 2}), labels), 0);
    FAIL("expected EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(std::string(e.what()).find("stratification") != std::string::npos);
  }
}

TEST_CASE("the pattern corpus is linearly separable in pixel space") {
  auto ds = corpus(data::SynthFamily::kPattern, 40, 1);
  const std::size_t d = 16 * 16;
  Tensor x({ds.size(), d});
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto img = ds.volumes[i].slice(0);
    std::copy(img.data().begin(), img.data().end(), x.row(i).begin());
    labels.push_back(ds.entries[i].label);
  }
  auto r = linear_probe_cv(table_of(x, labels), 4);
  CHECK(r.accuracy_mean >= 0.99);
}

TEST_CASE("top1_match") {
  auto cfg = small_config();
  auto text = train::initial_checkpoint(cfg).model.text;
  auto ds = corpus(data::SynthFamily::kPattern, 2);
  auto caps = class_captions(ds, cfg.vocab);
  REQUIRE(caps.size() == 4);

  Tensor exact({8, 16});
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < 8; ++i) {
    const std::size_t c = i % 4;
    labels.push_back(static_cast<std::int64_t>(c));
    auto e = enc::encode_text(caps[c].token_ids, text);
    for (std::size_t j = 0; j < 16; ++j) exact.at(i, j) = e.vec[j] * (1.0 + static_cast<double>(i));
  }
  auto m = top1_match(table_of(exact, labels), caps, text);
  CHECK(m.precision == 1.0);
  CHECK(m.total == 8);
  for (std::size_t c = 0; c < 4; ++c) CHECK(m.confusion[c][c] == 2);

  auto zero = top1_match(table_of(Tensor({3, 16}), {2, 2, 2}), caps, text);
  CHECK(zero.confusion[2][0] == 3);
  CHECK(zero.precision == 0.0);

  auto dup = caps;
  dup[3] = data::Caption{"chest x ray pleural effusion", dup[1].token_ids};
  std::reverse(dup[3].token_ids.begin(), dup[3].token_ids.end());
  CHECK_THROWS_AS(top1_match(table_of(exact, labels), dup, text), EvaluationError);
}

TEST_CASE("top1_match precision is rescale invariant and near 1/k for random embeddings") {
  auto cfg = small_config();
  auto text = train::initial_checkpoint(cfg).model.text;
  auto caps = class_captions(corpus(data::SynthFamily::kPattern, 2), cfg.vocab);
  const std::size_t n = 2000, k = 4;
  Rng rng(21);
  Tensor x({n, 16});
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (double& v : x.row(i)) {
      v = rng.normal();
      norm += v * v;
    }
    for (double& v : x.row(i)) v /= std::sqrt(norm);
    labels.push_back(static_cast<std::int64_t>(rng.below(k)));
  }
  auto base = top1_match(table_of(x, labels), caps, text);
  const double p = 1.0 / static_cast<double>(k);
  CHECK(std::abs(base.precision - p) <= 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(n)));
  std::size_t counted = 0;
  for (const auto& row : base.confusion) counted += std::accumulate(row.begin(), row.end(), std::size_t{0});
  CHECK(counted == n);

  Tensor scaled = x;
  for (std::size_t i = 0; i < n; ++i)
    for (double& v : scaled.row(i)) v *= std::pow(10.0, static_cast<double>(i % 7) - 3.0);
  CHECK(top1_match(table_of(scaled, labels), caps, text).confusion == base.confusion);
}

TEST_CASE("run_ablation dependencies and shape") {
  auto cfg = small_config();
  auto ds = corpus(data::SynthFamily::kOrderCoded, 10);
  try {
    run_ablation(cfg, ds, AblationCheckpoints{}, 1);
    FAIL("expected DependencyError");
  } catch (const DependencyError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("train2d") != std::string::npos);
    CHECK(msg.find("--from init") != std::string::npos);
    CHECK(msg.find("--from stage1") != std::string::npos);
  }

  auto train = ds.subset(data::Split::kTrain);
  auto val = ds.subset(data::Split::kVal);
  auto init = train::initial_checkpoint(cfg);
  auto c2 = cfg;
  c2.stage = 2;
  auto vanilla = train::train_stage2(c2, train, val, init).best;
  auto s1cfg = cfg;
  auto s2d = corpus(data::SynthFamily::kPattern, 10, 1);
  auto stage1 = train::train_stage1(s1cfg, s2d.subset(data::Split::kTrain), s2d.subset(data::Split::kVal)).best;
  auto stage2 = train::train_stage2(c2, train, val, stage1).best;

  AblationCheckpoints ck{&vanilla, &stage1, &stage2};
  auto r = run_ablation(cfg, ds, ck, 1);
  REQUIRE(r.rows.size() == 4);
  CHECK(r.rows[0].encoder == "vanilla");
  CHECK(r.rows[0].pooling == "gap");
  CHECK(r.rows[3].encoder == "fine-tuned");
  CHECK(r.rows[3].pooling == "adapter");
  CHECK(r.rows[0].probe_accuracy <= 0.55);
  CHECK(r.rows[2].probe_accuracy <= 0.55);
  for (const auto& row : r.rows) {
    CHECK(row.match_precision >= 0.0);
    CHECK(row.match_precision <= 1.0);
  }
  auto again = run_ablation(cfg, ds, ck, 1);
  CHECK(ablation_report_csv(again) == ablation_report_csv(r));
  CHECK(ablation_report_text(r).find("fine-tuned") != std::string::npos);

  AblationCheckpoints swapped{&stage2, &stage1, &vanilla};
  CHECK_THROWS_AS(run_ablation(cfg, ds, swapped, 1), CompatibilityError);
  CHECK_THROWS_AS(run_ablation(cfg, corpus(data::SynthFamily::kPattern, 10, 1), ck, 1), InputError);
}

TEST_CASE("report formatting") {
  ProbeReport p;
  p.folds = {{1.0, 1.0, 10}, {0.5, 0.4, 10}};
  p.accuracy_mean = 0.75;
  auto csv = probe_report_csv(p);
  CHECK(csv.find("fold") != std::string::npos);
  CHECK(csv.find("0.7500") != std::string::npos);
  CHECK(probe_report_text(p).find("---") != std::string::npos);

  MatchReport m;
  m.precision = 0.5;
  m.total = 2;
  m.confusion = {{1, 0}, {1, 0}};
  CHECK(match_report_csv(m).find("0.5000") != std::string::npos);
}
