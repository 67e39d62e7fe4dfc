#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "slicevlp/datapipe/dataset.hpp"
#include "slicevlp/datapipe/manifest.hpp"
#include "slicevlp/datapipe/synth.hpp"
#include "slicevlp/error.hpp"
#include "slicevlp/evalkit/evalkit.hpp"
#include "slicevlp/trainer/train.hpp"

namespace slicevlp::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using train::Checkpoint;
using train::TrainConfig;

std::string version_string() { return std::string("slicevlp ") + SLICEVLP_VERSION; }

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return kConfig;
    case ErrorCategory::kDependency: return kDependency;
    case ErrorCategory::kInput: return kInput;
    case ErrorCategory::kFormat: return kFormat;
    case ErrorCategory::kLoad: return kLoad;
    case ErrorCategory::kCompatibility: return kCompatibility;
    case ErrorCategory::kEvaluation: return kEvaluation;
    case ErrorCategory::kCapacity: return kCapacity;
    case ErrorCategory::kBatch: return kBatch;
    case ErrorCategory::kDimension: return kDimension;
    case ErrorCategory::kContract: return kContract;
  }
  return kInternal;
}

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("write failed: " + path.string());
}

// <command>.run.json: the resolved settings of one invocation.
void write_run_record(const fs::path& dir, const std::string& command, json settings) {
  settings["command"] = command;
  settings["version"] = version_string();
  write_text(dir / (command + ".run.json"), settings.dump(2) + "\n");
}

json path_list(const std::vector<std::string>& paths) { return json(paths); }

std::optional<data::Split> parse_split_option(const std::string& s) {
  if (s == "all") return std::nullopt;
  return data::parse_split(s);
}

data::Dataset load_data(const std::vector<std::string>& paths, std::size_t size) {
  if (paths.empty()) throw InputError("no data given");
  data::Dataset ds = data::load_dataset(paths[0], size);
  for (std::size_t i = 1; i < paths.size(); ++i) ds = data::merge_datasets(ds, data::load_dataset(paths[i], size));
  return ds;
}

data::Dataset select(const data::Dataset& ds, const std::optional<data::Split>& split) {
  return split ? ds.subset(*split) : ds;
}

Checkpoint load_required(const std::string& path, const std::string& produced_by) {
  if (!fs::exists(path)) {
    throw DependencyError("checkpoint not found: " + path + " (produce it with " + produced_by + ")");
  }
  return train::load_checkpoint(path);
}

void require_distinct_output(const fs::path& input, const fs::path& out_dir) {
  if (fs::weakly_canonical(fs::absolute(input)).parent_path() == fs::weakly_canonical(fs::absolute(out_dir))) {
    throw ConfigError("output directory " + out_dir.string() + " holds input " + input.string() +
                      "; choose another --out");
  }
}

// ---- training configuration -------------------------------------------------

// Top-level TrainConfig keys, plus optional "stage1" / "stage2" objects that
// apply on top for the matching stage.
struct TrainFlags {
  std::string config;
  std::vector<std::function<void(TrainConfig&)>> overrides;
};

template <typename T>
void override_flag(CLI::App* app, TrainFlags& flags, const std::string& name, T TrainConfig::*field,
                   const std::string& help) {
  auto value = std::make_shared<T>();
  CLI::Option* opt = app->add_option(name, *value, help);
  flags.overrides.push_back([opt, value, field](TrainConfig& c) {
    if (opt->count() > 0) c.*field = *value;
  });
}

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--config", f.config, "JSON training config");
  override_flag(app, f, "--epochs", &TrainConfig::epochs, "number of epochs");
  override_flag(app, f, "--batch-size", &TrainConfig::batch_size, "training batch size");
  override_flag(app, f, "--lr", &TrainConfig::lr0, "initial learning rate");
  override_flag(app, f, "--lr-min", &TrainConfig::lr_min, "final learning rate");
  override_flag(app, f, "--weight-decay", &TrainConfig::weight_decay, "decoupled weight decay");
  override_flag(app, f, "--dropout", &TrainConfig::dropout_rate, "dropout rate");
  override_flag(app, f, "--tau", &TrainConfig::tau, "InfoNCE temperature");
  override_flag(app, f, "--patience", &TrainConfig::patience, "early-stopping patience");
  override_flag(app, f, "--heads", &TrainConfig::heads, "adapter attention heads");
  override_flag(app, f, "--d-model", &TrainConfig::d_model, "shared embedding width");
  override_flag(app, f, "--image-size", &TrainConfig::image_size, "preprocessing size (0 = native)");
  override_flag(app, f, "--max-slices", &TrainConfig::max_slices, "positional table length");
  override_flag(app, f, "--seed", &TrainConfig::seed, "master seed");
}

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    json j = json::parse(ss.str());
    if (!j.is_object()) throw ConfigError("config " + path + " must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

TrainConfig resolve_config(const TrainFlags& flags, int stage) {
  json j = read_config_file(flags.config);
  TrainConfig cfg;
  json base = j;
  base.erase("stage1");
  base.erase("stage2");
  train::apply_json(cfg, base);
  const std::string section = "stage" + std::to_string(stage);
  if (j.contains(section)) train::apply_json(cfg, j[section]);
  if ((base.contains("stage") || (j.contains(section) && j[section].contains("stage"))) && cfg.stage != stage) {
    throw ConfigError("config sets stage " + std::to_string(cfg.stage) + " for a stage-" + std::to_string(stage) +
                      " command");
  }
  cfg.stage = stage;
  for (const auto& apply : flags.overrides) apply(cfg);
  cfg.validate();
  return cfg;
}

std::string loss_csv(const std::vector<train::EpochRecord>& history) {
  std::string s = "epoch,lr,train_loss,val_loss\n";
  for (const auto& r : history) {
    s += std::to_string(r.epoch) + "," + fmt_g17(r.lr) + "," + fmt_g17(r.train_loss) + "," + fmt_g17(r.val_loss) +
         "\n";
  }
  return s;
}

struct TrainRun {
  std::string out;
  bool resume = false;
  bool no_epoch_checkpoints = false;
  std::size_t stop_after = 0;
};

void add_run_flags(CLI::App* app, TrainRun& r) {
  app->add_option("--out", r.out, "output directory")->required();
  app->add_flag("--resume", r.resume, "continue from <out>/last.ckpt");
  app->add_flag("--no-epoch-checkpoints", r.no_epoch_checkpoints, "write only last.ckpt and best.ckpt");
  app->add_option("--stop-after", r.stop_after, "stop after this many epochs in this invocation");
}

train::TrainOptions make_options(const TrainRun& r, std::ostream& out, std::optional<Checkpoint>& resume_state) {
  train::TrainOptions o;
  o.checkpoint_dir = r.out;
  o.keep_epoch_checkpoints = !r.no_epoch_checkpoints;
  if (r.stop_after > 0) o.max_epochs_this_run = r.stop_after;
  if (r.resume) {
    const fs::path last = fs::path(r.out) / "last.ckpt";
    resume_state = load_required(last.string(), "an earlier run with the same --out");
    o.resume = &*resume_state;
  }
  o.on_epoch = [&out](const train::EpochRecord& e) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu lr %.6g train_loss %.6f val_loss %.6f\n", e.epoch, e.lr, e.train_loss,
                  e.val_loss);
    out << line << std::flush;
  };
  return o;
}

void finish_training(const TrainRun& r, const train::TrainResult& res, std::ostream& out) {
  write_text(fs::path(r.out) / "loss.csv", loss_csv(res.last.history));
  char line[160];
  std::snprintf(line, sizeof line, "best epoch %zu val_loss %.6f%s\n", res.best.best_epoch, res.best.best_val_loss,
                res.last.stopped ? " (early stop)" : "");
  out << line;
}

// ---- commands -----------------------------------------------------------------

struct SynthArgs {
  data::SynthSpec spec;
  std::string family = "pattern";
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  data::SynthSpec spec = a.spec;
  spec.family = data::parse_synth_family(a.family);
  spec.validate();
  auto entries = data::synth_dataset(spec, a.seed, a.out);
  json s{{"family", data::to_string(spec.family)},
         {"classes", spec.classes},
         {"per_class", spec.per_class},
         {"slices", spec.slices},
         {"size", spec.size},
         {"noise", spec.noise},
         {"amplitude", spec.amplitude},
         {"caption_offset", spec.caption_offset},
         {"id_prefix", spec.id_prefix},
         {"train_fraction", spec.train_fraction},
         {"val_fraction", spec.val_fraction},
         {"seed", a.seed},
         {"out", a.out}};
  write_run_record(a.out, "synth", s);
  out << "wrote " << entries.size() << " samples to " << a.out << "\n";
}

struct TrainArgs {
  TrainFlags flags;
  TrainRun run;
  std::vector<std::string> data;
  std::string from;
};

void cmd_train2d(const TrainArgs& a, std::ostream& out) {
  const TrainConfig cfg = resolve_config(a.flags, 1);
  fs::create_directories(a.run.out);
  write_run_record(a.run.out, "train2d",
                   json{{"config", cfg}, {"data", path_list(a.data)}, {"out", a.run.out}, {"resume", a.run.resume}});
  const auto ds = load_data(a.data, cfg.image_size);
  std::optional<Checkpoint> resume;
  auto opts = make_options(a.run, out, resume);
  auto res = train::train_stage1(cfg, ds.subset(data::Split::kTrain), ds.subset(data::Split::kVal), opts);
  finish_training(a.run, res, out);
}

void cmd_train3d(const TrainArgs& a, std::ostream& out) {
  const TrainConfig cfg = resolve_config(a.flags, 2);
  Checkpoint base;
  if (a.from == "init") {
    base = train::initial_checkpoint(cfg);
  } else {
    require_distinct_output(a.from, a.run.out);
    base = load_required(a.from, "train2d");
  }
  fs::create_directories(a.run.out);
  write_run_record(a.run.out, "train3d",
                   json{{"config", cfg},
                        {"data", path_list(a.data)},
                        {"from", a.from},
                        {"out", a.run.out},
                        {"resume", a.run.resume}});
  const auto ds = load_data(a.data, cfg.image_size);
  std::optional<Checkpoint> resume;
  auto opts = make_options(a.run, out, resume);
  auto res = train::train_stage2(cfg, ds.subset(data::Split::kTrain), ds.subset(data::Split::kVal), base, opts);
  finish_training(a.run, res, out);
}

struct EvalArgs {
  std::string ckpt;
  std::vector<std::string> data;
  std::vector<std::string> captions;
  std::string pool = "attn";
  std::string split = "test";
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  std::string out;
};

void cmd_probe(const EvalArgs& a, std::ostream& out) {
  const auto mode = pool::parse_pool_mode(a.pool);
  const auto split = parse_split_option(a.split);
  const Checkpoint ckpt = load_required(a.ckpt, "train2d or train3d");
  const auto ds = select(load_data(a.data, ckpt.config.image_size), split);
  eval::ProbeSettings settings;
  settings.folds = a.folds;
  const auto report = eval::linear_probe_cv(eval::extract_embeddings(ckpt, ds, mode), a.seed, settings);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "probe.csv", eval::probe_report_csv(report));
  write_text(fs::path(a.out) / "probe.txt", eval::probe_report_text(report));
  write_run_record(a.out, "probe",
                   json{{"ckpt", a.ckpt},
                        {"data", path_list(a.data)},
                        {"pool", a.pool},
                        {"split", a.split},
                        {"seed", a.seed},
                        {"folds", a.folds},
                        {"out", a.out}});
  out << eval::probe_report_text(report);
}

void cmd_match(const EvalArgs& a, std::ostream& out) {
  const auto mode = pool::parse_pool_mode(a.pool);
  const auto split = parse_split_option(a.split);
  const Checkpoint ckpt = load_required(a.ckpt, "train2d or train3d");
  const auto all = load_data(a.data, ckpt.config.image_size);
  data::Dataset caption_source;
  if (a.captions.empty()) {
    caption_source = all;
  } else {
    for (std::size_t i = 0; i < a.captions.size(); ++i) {
      data::Dataset part;
      part.entries = data::load_manifest(data::resolve_manifest_path(a.captions[i]));
      part.volumes.resize(part.entries.size());
      caption_source = i == 0 ? part : data::merge_datasets(caption_source, part);
    }
  }
  const auto captions = eval::class_captions(caption_source, ckpt.config.vocab);
  const auto table = eval::extract_embeddings(ckpt, select(all, split), mode);
  const auto report = eval::top1_match(table, captions, ckpt.model.text);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "match.csv", eval::match_report_csv(report));
  write_text(fs::path(a.out) / "match.txt", eval::match_report_text(report));
  write_run_record(a.out, "match",
                   json{{"ckpt", a.ckpt},
                        {"data", path_list(a.data)},
                        {"captions", path_list(a.captions)},
                        {"pool", a.pool},
                        {"split", a.split},
                        {"out", a.out}});
  out << eval::match_report_text(report);
}

void cmd_export(const EvalArgs& a, std::ostream& out) {
  const auto mode = pool::parse_pool_mode(a.pool);
  const auto split = parse_split_option(a.split);
  const Checkpoint ckpt = load_required(a.ckpt, "train2d or train3d");
  const auto ds = select(load_data(a.data, ckpt.config.image_size), split);
  const auto table = eval::extract_embeddings(ckpt, ds, mode);
  const fs::path dir = fs::path(a.out).has_parent_path() ? fs::path(a.out).parent_path() : fs::path(".");
  fs::create_directories(dir);
  eval::write_embedding_csv(a.out, table);
  write_run_record(dir, "export",
                   json{{"ckpt", a.ckpt}, {"data", path_list(a.data)}, {"pool", a.pool}, {"split", a.split},
                        {"out", a.out}});
  out << "wrote " << table.size() << " rows of dimension " << table.dim() << " to " << a.out << "\n";
}

struct AblateArgs {
  TrainFlags flags;
  std::vector<std::string> data;
  std::vector<std::string> data2d;
  std::string stage1, stage2, vanilla;
  std::string split = "test";
  bool train_missing = false;
  std::string out;
};

void cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const TrainConfig cfg1 = resolve_config(a.flags, 1);
  const TrainConfig cfg2 = resolve_config(a.flags, 2);
  const auto split = parse_split_option(a.split);
  fs::create_directories(a.out);
  write_run_record(a.out, "ablate",
                   json{{"stage1_config", cfg1},
                        {"stage2_config", cfg2},
                        {"data", path_list(a.data)},
                        {"data2d", path_list(a.data2d)},
                        {"stage1", a.stage1},
                        {"stage2", a.stage2},
                        {"vanilla_adapter", a.vanilla},
                        {"split", a.split},
                        {"train_missing", a.train_missing},
                        {"out", a.out}});

  const auto ds = load_data(a.data, cfg2.image_size);
  std::optional<Checkpoint> s1, s2, van;
  auto load_given = [](const std::string& path, const char* by, std::optional<Checkpoint>& slot) {
    if (!path.empty()) slot = load_required(path, by);
  };
  load_given(a.stage1, "train2d", s1);
  load_given(a.stage2, "train3d --from <stage1>", s2);
  load_given(a.vanilla, "train3d --from init", van);

  if (a.train_missing) {
    auto train_into = [&](const std::string& name, auto&& fn) {
      TrainRun run;
      run.out = (fs::path(a.out) / name).string();
      run.no_epoch_checkpoints = true;
      fs::create_directories(run.out);
      std::optional<Checkpoint> none;
      out << "training " << name << "\n";
      auto res = fn(make_options(run, out, none));
      finish_training(run, res, out);
      return res.best;
    };
    const auto tr = ds.subset(data::Split::kTrain);
    const auto va = ds.subset(data::Split::kVal);
    if (!s1) {
      if (a.data2d.empty()) {
        throw DependencyError("ablation needs a stage-1 checkpoint (--stage1) or a 2D corpus (--data2d) to train one");
      }
      const auto d2 = load_data(a.data2d, cfg1.image_size);
      s1 = train_into("stage1", [&](const train::TrainOptions& o) {
        return train::train_stage1(cfg1, d2.subset(data::Split::kTrain), d2.subset(data::Split::kVal), o);
      });
    }
    if (!van) {
      const Checkpoint init = train::initial_checkpoint(cfg2);
      van = train_into("vanilla_adapter",
                       [&](const train::TrainOptions& o) { return train::train_stage2(cfg2, tr, va, init, o); });
    }
    if (!s2) {
      s2 = train_into("stage2", [&](const train::TrainOptions& o) { return train::train_stage2(cfg2, tr, va, *s1, o); });
    }
  }

  eval::AblationCheckpoints ck{van ? &*van : nullptr, s1 ? &*s1 : nullptr, s2 ? &*s2 : nullptr};
  const auto report = eval::run_ablation(cfg2, select(ds, split), ck, cfg2.seed);
  write_text(fs::path(a.out) / "ablation.csv", eval::ablation_report_csv(report));
  write_text(fs::path(a.out) / "ablation.txt", eval::ablation_report_text(report));
  out << eval::ablation_report_text(report);
}

void add_eval_flags(CLI::App* app, EvalArgs& a, bool with_pool) {
  app->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
  app->add_option("--data", a.data, "dataset directory or manifest (repeatable)")->required();
  app->add_option("--split", a.split, "train, val, test or all")->capture_default_str();
  if (with_pool) app->add_option("--pool", a.pool, "gap or attn")->capture_default_str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Slice-pooling vision-language pretraining toolkit", "slicevlp"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  c_synth->add_option("--family", synth.family, "pattern or order-coded")->capture_default_str();
  c_synth->add_option("--classes", synth.spec.classes)->capture_default_str();
  c_synth->add_option("--per-class", synth.spec.per_class)->capture_default_str();
  c_synth->add_option("--slices", synth.spec.slices)->capture_default_str();
  c_synth->add_option("--size", synth.spec.size)->capture_default_str();
  c_synth->add_option("--noise", synth.spec.noise)->capture_default_str();
  c_synth->add_option("--amplitude", synth.spec.amplitude)->capture_default_str();
  c_synth->add_option("--caption-offset", synth.spec.caption_offset)->capture_default_str();
  c_synth->add_option("--id-prefix", synth.spec.id_prefix)->capture_default_str();
  c_synth->add_option("--train-fraction", synth.spec.train_fraction)->capture_default_str();
  c_synth->add_option("--val-fraction", synth.spec.val_fraction)->capture_default_str();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--out", synth.out, "output directory")->required();

  TrainArgs t2;
  auto* c_t2 = app.add_subcommand("train2d", "stage 1: fine-tune the image encoder on 2D samples");
  add_train_flags(c_t2, t2.flags);
  add_run_flags(c_t2, t2.run);
  c_t2->add_option("--data", t2.data, "dataset directory or manifest (repeatable)")->required();

  TrainArgs t3;
  auto* c_t3 = app.add_subcommand("train3d", "stage 2: train the slice-pooling adapter on 3D samples");
  add_train_flags(c_t3, t3.flags);
  add_run_flags(c_t3, t3.run);
  c_t3->add_option("--data", t3.data, "dataset directory or manifest (repeatable)")->required();
  c_t3->add_option("--from", t3.from, "stage-1 checkpoint, or 'init' for the untrained encoder")->required();

  EvalArgs probe;
  auto* c_probe = app.add_subcommand("probe", "linear-probe cross-validation on frozen embeddings");
  add_eval_flags(c_probe, probe, true);
  c_probe->add_option("--seed", probe.seed, "fold assignment seed")->capture_default_str();
  c_probe->add_option("--folds", probe.folds)->capture_default_str();
  c_probe->add_option("--out", probe.out, "output directory")->required();

  EvalArgs match;
  auto* c_match = app.add_subcommand("match", "top-1 image-to-caption matching");
  add_eval_flags(c_match, match, true);
  c_match->add_option("--captions", match.captions, "manifests supplying one caption per class (default: --data)");
  c_match->add_option("--out", match.out, "output directory")->required();

  EvalArgs exp;
  exp.split = "all";
  auto* c_export = app.add_subcommand("export", "write an embedding table as CSV");
  add_eval_flags(c_export, exp, true);
  c_export->add_option("--out", exp.out, "output CSV file")->required();

  AblateArgs abl;
  auto* c_abl = app.add_subcommand("ablate", "four-way encoder x pooling ablation");
  add_train_flags(c_abl, abl.flags);
  c_abl->add_option("--data", abl.data, "3D dataset directory or manifest (repeatable)")->required();
  c_abl->add_option("--data2d", abl.data2d, "2D corpus for training a missing stage-1 checkpoint");
  c_abl->add_option("--stage1", abl.stage1, "fine-tuned encoder checkpoint");
  c_abl->add_option("--stage2", abl.stage2, "adapter checkpoint trained on --stage1");
  c_abl->add_option("--vanilla-adapter", abl.vanilla, "adapter checkpoint trained on the untrained encoder");
  c_abl->add_option("--split", abl.split, "evaluation split")->capture_default_str();
  c_abl->add_flag("--train-missing", abl.train_missing, "train any checkpoint not supplied");
  c_abl->add_option("--out", abl.out, "output directory")->required();

  try {
    std::vector<std::string> rest(args.rbegin(), args.rend());
    if (!rest.empty()) rest.pop_back();
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (c_synth->parsed()) cmd_synth(synth, out);
    else if (c_t2->parsed()) cmd_train2d(t2, out);
    else if (c_t3->parsed()) cmd_train3d(t3, out);
    else if (c_probe->parsed()) cmd_probe(probe, out);
    else if (c_match->parsed()) cmd_match(match, out);
    else if (c_export->parsed()) cmd_export(exp, out);
    else if (c_abl->parsed()) cmd_ablate(abl, out);
    return kOk;
  } catch (const Error& e) {
    err << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: input: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace slicevlp::cli
