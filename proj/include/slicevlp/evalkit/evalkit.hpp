#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slicevlp/datapipe/dataset.hpp"
#include "slicevlp/datapipe/text.hpp"
#include "slicevlp/slice_pool/slice_pool.hpp"
#include "slicevlp/trainer/checkpoint.hpp"

namespace slicevlp::eval {

using diff::Tensor;

// One row per sample: ids[i], labels[i] and embeddings.row(i).
struct EmbeddingTable {
  std::vector<std::string> ids;
  std::vector<std::int64_t> labels;
  Tensor embeddings;  // N x d

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return embeddings.rank() == 2 ? embeddings.cols() : 0; }
  std::size_t num_classes() const;
  void validate() const;  // uniform shape, unique ids, labels >= 0
};

// Eval-mode embeddings (no dropout) in dataset order. 2D samples use the image
// encoder directly; 3D samples are encoded per slice and pooled by `mode`.
EmbeddingTable extract_embeddings(const train::Checkpoint& ckpt, const data::Dataset& ds, pool::PoolMode mode);

// CSV with header id,label,e0,...,e{d-1}; values printed with 17 significant digits.
std::string embedding_csv(const EmbeddingTable& table);
EmbeddingTable parse_embedding_csv(std::string_view text);
void write_embedding_csv(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embedding_csv(const std::filesystem::path& path);

struct ProbeSettings {
  std::size_t folds = 5;
  std::size_t iterations = 500;
  double step = 0.1;
  // Standardize features with statistics of the training folds.
  bool standardize = true;
};

struct FoldMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t held_out = 0;
};

struct ProbeReport {
  std::vector<FoldMetrics> folds;
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
};

// Stratified seeded k-fold assignment of sample indices: fold_of[i] in [0, k).
std::vector<std::size_t> stratified_folds(const std::vector<std::int64_t>& labels, std::size_t k,
                                          std::uint64_t seed);

// Unweighted mean over classes of per-class F1.
double macro_f1(const std::vector<std::int64_t>& truth, const std::vector<std::int64_t>& pred,
                std::size_t classes);

// Multinomial logistic regression (with bias) trained by full-batch gradient
// descent on each set of training folds, scored on the held-out fold.
ProbeReport linear_probe_cv(const EmbeddingTable& table, std::uint64_t seed, const ProbeSettings& settings = {});

struct MatchReport {
  double precision = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t total = 0;
};

// Argmax cosine similarity against the caption embedding of each class;
// ties go to the lowest class id.
MatchReport top1_match(const EmbeddingTable& images, const std::vector<data::Caption>& class_captions,
                       const enc::TextEncoderParams& text);

// One caption per class, as found in the dataset entries.
std::vector<data::Caption> class_captions(const data::Dataset& ds, std::size_t vocab);

struct AblationRow {
  std::string encoder;  // "vanilla" or "fine-tuned"
  std::string pooling;  // "gap" or "adapter"
  double probe_accuracy = 0.0;
  double probe_f1 = 0.0;
  double match_precision = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // always (a), (b), (c), (d)
};

struct AblationCheckpoints {
  const train::Checkpoint* vanilla_adapter = nullptr;  // stage 2 trained on the untrained encoder
  const train::Checkpoint* stage1 = nullptr;           // fine-tuned encoder
  const train::Checkpoint* stage2 = nullptr;           // adapter trained on the fine-tuned encoder
};

// Evaluates (a) untrained encoder + gap, (b) untrained encoder + trained
// adapter, (c) fine-tuned encoder + gap, (d) fine-tuned encoder + its
// adapter on `eval_set`. The untrained encoder comes from `cfg.seed`. Missing
// checkpoints raise DependencyError naming what to train first.
AblationReport run_ablation(const train::TrainConfig& cfg, const data::Dataset& eval_set,
                            const AblationCheckpoints& ckpts, std::uint64_t probe_seed);

std::string probe_report_csv(const ProbeReport& r);
std::string probe_report_text(const ProbeReport& r);
std::string match_report_csv(const MatchReport& r);
std::string match_report_text(const MatchReport& r);
std::string ablation_report_csv(const AblationReport& r);
std::string ablation_report_text(const AblationReport& r);

}  // namespace slicevlp::eval
