#include "slicevlp/trainer/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "slicevlp/contrastive/contrastive.hpp"
#include "slicevlp/datapipe/text.hpp"
#include "slicevlp/error.hpp"

namespace slicevlp::train {

namespace fs = std::filesystem;
using diff::Param;
using diff::Rng;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

using EmbedFn = std::function<Var(Tape&, bool is_val, std::span<const std::size_t> idx, bool train, Rng* rng)>;

struct StageSpec {
  std::size_t n_train = 0, n_val = 0;
  Tensor text_train, text_val;
  EmbedFn embed;
  std::vector<Param*> group;  // the stage's parameter group (trainable or frozen)
};

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), m.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

loss::LossConfig loss_config(const TrainConfig& cfg) { return {cfg.tau, cfg.symmetric}; }

double validation_loss(const TrainConfig& cfg, const StageSpec& s) {
  double total = 0.0;
  std::size_t counted = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < s.n_val; start += cfg.batch_size) {
    const std::size_t count = std::min(cfg.batch_size, s.n_val - start);
    if (count < 2) break;
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    Tape t;
    Var img = s.embed(t, true, idx, false, nullptr);
    Var txt = t.constant(gather_rows(s.text_val, idx));
    total += loss::contrastive_loss(img, txt, loss_config(cfg)).value().item() * static_cast<double>(count);
    counted += count;
  }
  return total / static_cast<double>(counted);
}

void check_resume_compatible(const Checkpoint& r, const TrainConfig& cfg) {
  if (r.stage != cfg.stage) {
    throw CompatibilityError("resume checkpoint is stage " + std::to_string(r.stage) + ", run is stage " +
                             std::to_string(cfg.stage));
  }
  nlohmann::json a = r.config, b = cfg;
  if (a != b) throw CompatibilityError("resume checkpoint was written with a different training config");
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
  return buf;
}

TrainResult run(const TrainConfig& cfg, Checkpoint& state, StageSpec& spec, const TrainOptions& opt) {
  if (!opt.checkpoint_dir.empty()) fs::create_directories(opt.checkpoint_dir);
  Rng shuffle(state.shuffle_rng);
  Rng drop(state.dropout_rng);
  const AdamSettings adam{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
  std::vector<Param*> trainable;
  for (Param* p : spec.group) {
    if (p->trainable) trainable.push_back(p);
  }

  std::size_t ran = 0;
  while (state.epoch < cfg.epochs && !state.stopped && ran < opt.max_epochs_this_run) {
    const double lr = cosine_lr(state.epoch, cfg);
    std::vector<std::size_t> order(spec.n_train);
    std::iota(order.begin(), order.end(), 0);
    shuffle.shuffle(order);
    double total = 0.0;
    const std::size_t batches = spec.n_train / cfg.batch_size;
    for (std::size_t b = 0; b < batches; ++b) {
      std::span<const std::size_t> idx(order.data() + b * cfg.batch_size, cfg.batch_size);
      Tape t;
      Var img = spec.embed(t, false, idx, true, &drop);
      Var txt = t.constant(gather_rows(spec.text_train, idx));
      Var l = loss::contrastive_loss(img, txt, loss_config(cfg));
      diff::zero_grads(trainable);
      if (!trainable.empty()) {
        t.backward(l);
        adam_step(trainable, state.optimizer, lr, adam);
      }
      total += l.value().item();
    }
    EpochRecord rec{state.epoch + 1, lr, total / static_cast<double>(batches), validation_loss(cfg, spec)};
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      throw EvaluationError("non-finite loss at epoch " + std::to_string(rec.epoch));
    }
    state.history.push_back(rec);
    state.epoch = rec.epoch;
    if (rec.val_loss < state.best_val_loss) {
      state.best_val_loss = rec.val_loss;
      state.best_epoch = rec.epoch;
      state.bad_epochs = 0;
      state.best_params.clear();
      for (Param* p : spec.group) state.best_params.emplace_back(p->name, p->value, p->trainable);
    } else if (++state.bad_epochs >= cfg.patience) {
      state.stopped = true;
    }
    state.shuffle_rng = shuffle.state();
    state.dropout_rng = drop.state();
    if (!opt.checkpoint_dir.empty()) {
      if (opt.keep_epoch_checkpoints) save_checkpoint(opt.checkpoint_dir / epoch_name(rec.epoch), state);
      save_checkpoint(opt.checkpoint_dir / "last.ckpt", state);
    }
    if (opt.on_epoch) opt.on_epoch(rec);
    ++ran;
  }

  TrainResult result;
  result.last = state;
  Checkpoint& best = result.best;
  best = state;
  if (!state.best_params.empty()) {
    std::map<std::string, const Param*> snap;
    for (const auto& p : state.best_params) snap[p.name] = &p;
    for (Param* p : best.model.params()) {
      auto it = snap.find(p->name);
      if (it != snap.end()) p->value = it->second->value;
    }
    best.epoch = state.best_epoch;
    best.history.resize(state.best_epoch);
  }
  best.best_params.clear();
  best.optimizer = {};
  best.bad_epochs = 0;
  best.stopped = false;
  best.shuffle_rng = {};
  best.dropout_rng = {};
  for (Param* p : best.model.params()) p->zero_grad();
  if (!opt.checkpoint_dir.empty()) save_checkpoint(opt.checkpoint_dir / "best.ckpt", best);
  return result;
}

Checkpoint fresh_state(const TrainConfig& cfg, Model model) {
  Checkpoint c;
  c.stage = cfg.stage;
  c.config = cfg;
  c.model = std::move(model);
  c.best_val_loss = std::numeric_limits<double>::infinity();
  c.shuffle_rng = {diff::derive_seed(cfg.seed, "shuffle"), 0};
  c.dropout_rng = {diff::derive_seed(cfg.seed, "dropout"), 0};
  return c;
}

void check_sizes(const TrainConfig& cfg, const data::Dataset& train, const data::Dataset& val) {
  if (cfg.epochs == 0) return;
  if (train.size() < cfg.batch_size) {
    throw ConfigError("training set has " + std::to_string(train.size()) + " samples, fewer than batch_size " +
                      std::to_string(cfg.batch_size));
  }
  if (val.size() < 2) throw ConfigError("validation set needs at least 2 samples");
}

}  // namespace

Tensor caption_embeddings(const data::Dataset& ds, const enc::TextEncoderParams& text, std::size_t vocab) {
  std::map<std::string, Tensor> cache;
  Tensor out({ds.size(), text.d_model()});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string caption = data::build_caption(ds.entries[i]);
    auto it = cache.find(caption);
    if (it == cache.end()) {
      it = cache.emplace(caption, enc::encode_text(data::tokenize(caption, vocab), text).vec).first;
    }
    std::copy(it->second.data().begin(), it->second.data().end(), out.row(i).begin());
  }
  return out;
}

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint c = fresh_state(cfg, init_model(cfg));
  c.stage = 0;
  return c;
}

TrainResult train_stage1(const TrainConfig& cfg_in, const data::Dataset& train, const data::Dataset& val,
                         const TrainOptions& opt) {
  TrainConfig cfg = cfg_in;
  cfg.stage = 1;
  cfg.validate();
  train.require_kind(data::SampleKind::k2d);
  val.require_kind(data::SampleKind::k2d);
  check_sizes(cfg, train, val);

  Checkpoint state;
  if (opt.resume) {
    check_resume_compatible(*opt.resume, cfg);
    state = *opt.resume;
  } else {
    state = fresh_state(cfg, init_model(cfg));
  }
  set_stage_trainable(state.model, 1, cfg.frozen);

  StageSpec spec;
  spec.n_train = train.size();
  spec.n_val = val.size();
  spec.text_train = caption_embeddings(train, state.model.text, cfg.vocab);
  spec.text_val = caption_embeddings(val, state.model.text, cfg.vocab);
  std::vector<Tensor> train_images, val_images;
  for (const auto& v : train.volumes) train_images.push_back(v.slice(0));
  for (const auto& v : val.volumes) val_images.push_back(v.slice(0));
  enc::ImageEncoderParams& image = state.model.image;
  spec.group = image.params();
  spec.embed = [&](Tape& t, bool is_val, std::span<const std::size_t> idx, bool train_mode, Rng* rng) {
    const auto& images = is_val ? val_images : train_images;
    std::vector<Tensor> batch;
    for (std::size_t i : idx) batch.push_back(images[i]);
    enc::ForwardMode mode{train_mode, cfg.dropout_rate, rng};
    return enc::encode_images(t, enc::bind(t, image), batch, mode);
  };
  return run(cfg, state, spec, opt);
}

TrainResult train_stage2(const TrainConfig& cfg_in, const data::Dataset& train, const data::Dataset& val,
                         const Checkpoint& base, const TrainOptions& opt) {
  TrainConfig cfg = cfg_in;
  cfg.stage = 2;
  cfg.validate();
  train.require_kind(data::SampleKind::k3d);
  val.require_kind(data::SampleKind::k3d);
  if (base.stage > 1) throw CompatibilityError("stage 2 needs a stage-0 or stage-1 checkpoint as its base");
  if (base.model.image.d_model() != cfg.d_model || base.model.text.d_model() != cfg.d_model) {
    throw CompatibilityError("checkpoint d_model " + std::to_string(base.model.image.d_model()) +
                             " does not match config d_model " + std::to_string(cfg.d_model));
  }
  if (base.model.image.patch != cfg.patch) {
    throw CompatibilityError("checkpoint patch " + std::to_string(base.model.image.patch) +
                             " does not match config patch " + std::to_string(cfg.patch));
  }
  check_sizes(cfg, train, val);

  Checkpoint state;
  if (opt.resume) {
    check_resume_compatible(*opt.resume, cfg);
    state = *opt.resume;
  } else {
    Model m;
    m.text = base.model.text;
    m.image = base.model.image;
    m.adapter = pool::init_adapter(adapter_config(cfg), cfg.seed);
    state = fresh_state(cfg, std::move(m));
  }
  set_stage_trainable(state.model, 2, cfg.frozen);

  StageSpec spec;
  spec.n_train = train.size();
  spec.n_val = val.size();
  spec.text_train = caption_embeddings(train, state.model.text, cfg.vocab);
  spec.text_val = caption_embeddings(val, state.model.text, cfg.vocab);
  std::vector<enc::SliceStack> train_stacks, val_stacks;
  constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();
  for (const auto& v : train.volumes) train_stacks.push_back(enc::encode_slices(v, state.model.image, kNoLimit));
  for (const auto& v : val.volumes) val_stacks.push_back(enc::encode_slices(v, state.model.image, kNoLimit));
  pool::AdapterParams& adapter = state.model.adapter;
  spec.group = adapter.params();
  spec.embed = [&](Tape& t, bool is_val, std::span<const std::size_t> idx, bool train_mode, Rng* rng) {
    const auto& stacks = is_val ? val_stacks : train_stacks;
    pool::AdapterVars av = pool::bind(t, adapter);
    std::vector<Var> rows;
    for (std::size_t i : idx) {
      rows.push_back(pool::attention_pool(av, t.constant_ref(stacks[i].mat), train_mode, rng));
    }
    return diff::concat_rows(rows);
  };
  return run(cfg, state, spec, opt);
}

}  // namespace slicevlp::train
