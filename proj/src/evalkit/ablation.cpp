#include "slicevlp/error.hpp"
#include "slicevlp/evalkit/evalkit.hpp"
#include "slicevlp/trainer/train.hpp"

namespace slicevlp::eval {

namespace {

bool same_encoder(const enc::ImageEncoderParams& a, const enc::ImageEncoderParams& b) {
  const auto pa = a.params(), pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!diff::bitwise_equal(pa[i]->value, pb[i]->value)) return false;
  }
  return true;
}

AblationRow evaluate(const train::Checkpoint& ckpt, const data::Dataset& ds, pool::PoolMode mode,
                     std::uint64_t seed, const char* encoder) {
  const auto table = extract_embeddings(ckpt, ds, mode);
  const auto probe = linear_probe_cv(table, seed);
  const auto match = top1_match(table, class_captions(ds, ckpt.config.vocab), ckpt.model.text);
  return {encoder, mode == pool::PoolMode::kGap ? "gap" : "adapter", probe.accuracy_mean, probe.f1_mean,
          match.precision};
}

}  // namespace

AblationReport run_ablation(const train::TrainConfig& cfg, const data::Dataset& eval_set,
                            const AblationCheckpoints& ck, std::uint64_t probe_seed) {
  if (eval_set.size() == 0) throw InputError("ablation: evaluation corpus is empty");
  eval_set.require_kind(data::SampleKind::k3d);
  std::vector<std::string> missing;
  if (!ck.vanilla_adapter) missing.push_back("an adapter trained on the untrained encoder (train3d --from init)");
  if (!ck.stage1) missing.push_back("a fine-tuned 2D encoder (train2d)");
  if (!ck.stage2) missing.push_back("an adapter trained on the fine-tuned encoder (train3d --from stage1)");
  if (!missing.empty()) {
    std::string msg = "ablation needs";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? "; " : " ") + missing[i];
    throw DependencyError(msg);
  }
  const train::Checkpoint vanilla = train::initial_checkpoint(cfg);
  if (!same_encoder(ck.vanilla_adapter->model.image, vanilla.model.image)) {
    throw CompatibilityError("vanilla-encoder adapter checkpoint was trained on a different initialization");
  }
  if (!same_encoder(ck.stage2->model.image, ck.stage1->model.image)) {
    throw CompatibilityError("stage-2 checkpoint was not trained on the given stage-1 encoder");
  }
  AblationReport r;
  r.rows.push_back(evaluate(vanilla, eval_set, pool::PoolMode::kGap, probe_seed, "vanilla"));
  r.rows.push_back(evaluate(*ck.vanilla_adapter, eval_set, pool::PoolMode::kAttention, probe_seed, "vanilla"));
  r.rows.push_back(evaluate(*ck.stage1, eval_set, pool::PoolMode::kGap, probe_seed, "fine-tuned"));
  r.rows.push_back(evaluate(*ck.stage2, eval_set, pool::PoolMode::kAttention, probe_seed, "fine-tuned"));
  return r;
}

}  // namespace slicevlp::eval
