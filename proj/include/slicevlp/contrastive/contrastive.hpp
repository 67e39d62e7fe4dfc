#pragma once

#include "slicevlp/diffmath/ops.hpp"

namespace slicevlp::loss {

using diff::Tensor;
using diff::Var;

struct LossConfig {
  double tau = 0.07;
  bool symmetric = true;  // false: image->text direction only

  void validate() const;
};

// logits[i][j] = cos(image_i, text_j) / tau; matching pairs on the diagonal.
struct SimilarityMatrix {
  Tensor logits;
  double tau = 0.07;
};

SimilarityMatrix similarity_matrix(const Tensor& images, const Tensor& texts,
                                   const LossConfig& cfg);
Var similarity_matrix(Var images, Var texts, const LossConfig& cfg);

// Mean over rows of -log softmax(row)[diagonal]; when symmetric, averaged
// with the same quantity on the transpose (text->image).
Var info_nce(Var logits, const LossConfig& cfg);
double info_nce(const SimilarityMatrix& sim, const LossConfig& cfg);

// similarity_matrix followed by info_nce.
Var contrastive_loss(Var images, Var texts, const LossConfig& cfg);

}  // namespace slicevlp::loss
