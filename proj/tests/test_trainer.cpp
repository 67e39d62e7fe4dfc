#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "slicevlp/error.hpp"
#include "slicevlp/trainer/train.hpp"

using namespace slicevlp;
using namespace slicevlp::train;
using diff::Tensor;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config(int stage) {
  TrainConfig c;
  c.stage = stage;
  c.epochs = 4;
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

data::Dataset corpus(std::size_t slices, data::SynthFamily family = data::SynthFamily::kPattern,
                     std::size_t per_class = 10) {
  data::SynthSpec s;
  s.family = family;
  s.classes = family == data::SynthFamily::kPattern ? 4 : 2;
  s.per_class = per_class;
  s.slices = slices;
  s.size = 16;
  return data::dataset_from_samples(data::synth_samples(s, 5), 16);
}

template <typename A, typename B>
bool same_values(const A& a, const B& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!diff::bitwise_equal(a[i]->value, b[i]->value)) return false;
  }
  return true;
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("slicevlp_test_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("cosine_lr") {
  TrainConfig c;
  c.epochs = 30;
  CHECK(cosine_lr(0, c) == 1e-4);
  CHECK(cosine_lr(30, c) == c.lr_min);
  CHECK(std::abs(cosine_lr(15, c) - (c.lr0 + c.lr_min) / 2) < 1e-18);
  for (std::size_t t = 1; t <= 30; ++t) CHECK(cosine_lr(t, c) <= cosine_lr(t - 1, c));
  c.epochs = 0;
  CHECK(cosine_lr(0, c) == c.lr0);
}

TEST_CASE("TrainConfig validation and JSON") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    CHECK_THROWS_AS(t.validate(), ConfigError);
  };
  bad([](TrainConfig& t) { t.batch_size = 1; });
  bad([](TrainConfig& t) { t.lr_min = t.lr0; });
  bad([](TrainConfig& t) { t.lr_min = -1.0; });
  bad([](TrainConfig& t) { t.dropout_rate = 1.0; });
  bad([](TrainConfig& t) { t.heads = 5; });
  bad([](TrainConfig& t) { t.tau = 0.0; });
  bad([](TrainConfig& t) { t.stage = 3; });
  bad([](TrainConfig& t) { t.image_size = 20; });

  TrainConfig d = small_config(2);
  d.frozen = {"adapter.pe"};
  nlohmann::json j = d;
  TrainConfig back;
  apply_json(back, j);
  CHECK(nlohmann::json(back) == j);

  TrainConfig e;
  CHECK_THROWS_AS(apply_json(e, nlohmann::json{{"learning_rate", 1}}), ConfigError);
  CHECK_THROWS_AS(apply_json(e, nlohmann::json{{"epochs", "ten"}}), ConfigError);
  CHECK_THROWS_AS(apply_json(e, nlohmann::json{{"epochs", -3}}), ConfigError);
  apply_json(e, nlohmann::json{{"epochs", 3}, {"lr0", 0.01}});
  CHECK(e.epochs == 3);
  CHECK(e.lr0 == 0.01);
}

TEST_CASE("adam_step matches a hand-rolled update") {
  diff::Param p("w", Tensor::vector({0.5, -1.0}));
  diff::Param frozen("f", Tensor::vector({2.0}), false);
  OptimizerState st;
  AdamSettings s{0.9, 0.999, 1e-8, 0.01};
  double w0 = 0.5, w1 = -1.0, m0 = 0, m1 = 0, v0 = 0, v1 = 0;
  const double g[3][2] = {{0.3, -0.2}, {0.1, 0.4}, {-0.5, 0.05}};
  std::vector<diff::Param*> ps{&p, &frozen};
  for (int k = 0; k < 3; ++k) {
    p.grad = Tensor::vector({g[k][0], g[k][1]});
    frozen.grad = Tensor::vector({1.0});
    adam_step(ps, st, 0.05, s);
    const int t = k + 1;
    auto upd = [&](double& w, double& m, double& v, double gi) {
      m = 0.9 * m + 0.1 * gi;
      v = 0.999 * v + 0.001 * gi * gi;
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      w = w - 0.05 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * w);
    };
    upd(w0, m0, v0, g[k][0]);
    upd(w1, m1, v1, g[k][1]);
    CHECK(std::abs(p.value[0] - w0) < 1e-15);
    CHECK(std::abs(p.value[1] - w1) < 1e-15);
  }
  CHECK(st.step == 3);
  CHECK(frozen.value[0] == 2.0);
  CHECK(st.moments.count("f") == 0);
}

TEST_CASE("stage 1 trains only the image encoder and reduces the loss") {
  auto ds = corpus(1);
  auto cfg = small_config(1);
  cfg.epochs = 6;
  cfg.dropout_rate = 0.1;
  auto result = train_stage1(cfg, ds.subset(data::Split::kTrain), ds.subset(data::Split::kVal));
  const auto& h = result.last.history;
  REQUIRE(h.size() >= 2);
  CHECK(h.back().train_loss < h.front().train_loss);
  Model init = init_model(cfg);
  CHECK(same_values(result.last.model.text.params(), init.text.params()));
  CHECK(same_values(result.last.model.adapter.params(), init.adapter.params()));
  CHECK_FALSE(same_values(result.last.model.image.params(), init.image.params()));
  for (const auto& rec : h) CHECK(result.best.best_val_loss <= rec.val_loss);
  for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i].lr <= h[i - 1].lr);
  CHECK(result.best.stage == 1);
  CHECK(result.best.epoch == result.last.best_epoch);
}

TEST_CASE("zero epochs returns the initialization") {
  auto ds = corpus(1);
  auto cfg = small_config(1);
  cfg.epochs = 0;
  auto result = train_stage1(cfg, ds.subset(data::Split::kTrain), ds.subset(data::Split::kVal));
  Model init = init_model(cfg);
  CHECK(same_values(result.best.model.params(), init.params()));
  CHECK(result.last.history.empty());
  CHECK(result.last.optimizer.step == 0);
}

TEST_CASE("training is bitwise reproducible") {
  auto ds = corpus(4);
  auto c1 = small_config(1);
  auto two_d = corpus(1);
  auto base = train_stage1(c1, two_d.subset(data::Split::kTrain), two_d.subset(data::Split::kVal)).best;
  auto cfg = small_config(2);
  auto a = train_stage2(cfg, ds.subset(data::Split::kTrain), ds.subset(data::Split::kVal), base);
  auto b = train_stage2(cfg, ds.subset(data::Split::kTrain), ds.subset(data::Split::kVal), base);
  CHECK(encode_checkpoint(a.last) == encode_checkpoint(b.last));
  CHECK(encode_checkpoint(a.best) == encode_checkpoint(b.best));
  CHECK(same_values(a.last.model.image.params(), base.model.image.params()));
  CHECK(same_values(a.last.model.text.params(), base.model.text.params()));
  CHECK_FALSE(same_values(a.last.model.adapter.params(), base.model.adapter.params()));
}

TEST_CASE("resume reproduces the uninterrupted trajectory") {
  auto ds = corpus(4);
  auto cfg = small_config(2);
  cfg.epochs = 5;
  auto base = initial_checkpoint(small_config(1));
  auto train = ds.subset(data::Split::kTrain), val = ds.subset(data::Split::kVal);
  auto straight = train_stage2(cfg, train, val, base);

  auto dir = scratch_dir("resume");
  TrainOptions first;
  first.max_epochs_this_run = 2;
  first.checkpoint_dir = dir;
  auto partial = train_stage2(cfg, train, val, base, first);
  CHECK(partial.last.epoch == 2);
  CHECK(fs::exists(dir / "epoch_001.ckpt"));
  CHECK(fs::exists(dir / "epoch_002.ckpt"));
  Checkpoint loaded = load_checkpoint(dir / "last.ckpt");
  TrainOptions second;
  second.resume = &loaded;
  auto resumed = train_stage2(cfg, train, val, base, second);

  REQUIRE(resumed.last.history.size() == straight.last.history.size());
  for (std::size_t i = 0; i < straight.last.history.size(); ++i) {
    CHECK(std::abs(resumed.last.history[i].train_loss - straight.last.history[i].train_loss) <= 1e-12);
    CHECK(std::abs(resumed.last.history[i].val_loss - straight.last.history[i].val_loss) <= 1e-12);
  }
  CHECK(encode_checkpoint(resumed.last) == encode_checkpoint(straight.last));
  CHECK(encode_checkpoint(resumed.best) == encode_checkpoint(straight.best));

  auto other = cfg;
  other.lr0 = 5e-3;
  CHECK_THROWS_AS(train_stage2(other, train, val, base, second), CompatibilityError);
  fs::remove_all(dir);
}

TEST_CASE("early stopping on a frozen model") {
  auto ds = corpus(4);
  auto cfg = small_config(2);
  cfg.epochs = 10;
  cfg.patience = 1;
  cfg.frozen = {"adapter"};
  auto base = initial_checkpoint(small_config(1));
  auto r = train_stage2(cfg, ds.subset(data::Split::kTrain), ds.subset(data::Split::kVal), base);
  CHECK(r.last.history.size() == 2);
  CHECK(r.last.stopped);
  CHECK(r.last.history[0].val_loss == r.last.history[1].val_loss);
  CHECK(same_values(r.last.model.adapter.params(), init_model(cfg).adapter.params()));
}

TEST_CASE("checkpoint encoding") {
  auto ds = corpus(4);
  auto cfg = small_config(2);
  cfg.epochs = 2;
  auto base = initial_checkpoint(small_config(1));
  auto r = train_stage2(cfg, ds.subset(data::Split::kTrain), ds.subset(data::Split::kVal), base);
  const std::string bytes = encode_checkpoint(r.last);
  CHECK(bytes.substr(0, 4) == "RCKP");
  Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.history == r.last.history);
  CHECK(back.optimizer == r.last.optimizer);
  CHECK(back.shuffle_rng == r.last.shuffle_rng);

  auto dir = scratch_dir("ckpt");
  save_checkpoint(dir / "a.ckpt", r.last);
  save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  CHECK(sa == bytes);

  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, cut)), LoadError);
  }
  std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 7);
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), LoadError);
  std::string wrong = bytes;
  wrong[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(wrong), LoadError);
  wrong = bytes;
  wrong[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(wrong), LoadError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), LoadError);
  fs::remove_all(dir);
}

TEST_CASE("trainer input validation") {
  auto ds3 = corpus(4);
  auto ds2 = corpus(1);
  auto base = initial_checkpoint(small_config(1));
  CHECK_THROWS_AS(train_stage1(small_config(1), ds3.subset(data::Split::kTrain), ds3.subset(data::Split::kVal)),
                  InputError);
  CHECK_THROWS_AS(train_stage2(small_config(2), ds2.subset(data::Split::kTrain), ds2.subset(data::Split::kVal), base),
                  InputError);
  auto big = small_config(1);
  big.batch_size = 64;
  CHECK_THROWS_AS(train_stage1(big, ds2.subset(data::Split::kTrain), ds2.subset(data::Split::kVal)), ConfigError);
  auto wide = small_config(2);
  wide.d_model = 32;
  wide.d_text = 32;
  CHECK_THROWS_AS(train_stage2(wide, ds3.subset(data::Split::kTrain), ds3.subset(data::Split::kVal), base),
                  CompatibilityError);
}
