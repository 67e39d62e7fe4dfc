#include "slicevlp/contrastive/contrastive.hpp"

#include <cmath>

#include "slicevlp/error.hpp"

namespace slicevlp::loss {

namespace {

constexpr double kNormEps = 1e-12;

void check_pair(const Tensor& images, const Tensor& texts) {
  if (images.rank() != 2 || texts.rank() != 2) {
    throw InputError("similarity inputs must be N x d matrices");
  }
  if (images.cols() != texts.cols() || images.rows() != texts.rows()) {
    throw InputError("similarity input mismatch: images " + diff::shape_str(images.shape()) +
                     " vs texts " + diff::shape_str(texts.shape()));
  }
  if (images.rows() < 2) {
    throw BatchError("contrastive batch needs N >= 2 pairs, got " +
                     std::to_string(images.rows()));
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("temperature must be positive, got " + std::to_string(tau));
  }
}

SimilarityMatrix similarity_matrix(const Tensor& images, const Tensor& texts,
                                   const LossConfig& cfg) {
  cfg.validate();
  check_pair(images, texts);
  Tensor a = diff::l2_normalize_rows(images, kNormEps);
  Tensor b = diff::l2_normalize_rows(texts, kNormEps);
  Tensor logits = diff::scale(diff::matmul(a, diff::transpose(b)), 1.0 / cfg.tau);
  return SimilarityMatrix{std::move(logits), cfg.tau};
}

Var similarity_matrix(Var images, Var texts, const LossConfig& cfg) {
  cfg.validate();
  check_pair(images.value(), texts.value());
  Var a = diff::l2_normalize_rows(images, kNormEps);
  Var b = diff::l2_normalize_rows(texts, kNormEps);
  return diff::scale(diff::matmul(a, diff::transpose(b)), 1.0 / cfg.tau);
}

Var info_nce(Var logits, const LossConfig& cfg) {
  const Tensor& l = logits.value();
  if (l.rank() != 2 || l.rows() != l.cols()) {
    throw InputError("info_nce needs a square logit matrix, got " + diff::shape_str(l.shape()));
  }
  Var i2t = diff::scale(diff::diag_mean(diff::log_softmax_rows(logits)), -1.0);
  if (!cfg.symmetric) return i2t;
  Var t2i = diff::scale(diff::diag_mean(diff::log_softmax_rows(diff::transpose(logits))), -1.0);
  return diff::scale(diff::add(i2t, t2i), 0.5);
}

double info_nce(const SimilarityMatrix& sim, const LossConfig& cfg) {
  diff::Tape tape;
  return info_nce(tape.constant_ref(sim.logits), cfg).value().item();
}

Var contrastive_loss(Var images, Var texts, const LossConfig& cfg) {
  return info_nce(similarity_matrix(images, texts, cfg), cfg);
}

}  // namespace slicevlp::loss
