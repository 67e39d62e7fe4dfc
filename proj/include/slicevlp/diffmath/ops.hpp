#pragma once

#include <span>
#include <vector>

#include "slicevlp/diffmath/rng.hpp"
#include "slicevlp/diffmath/tape.hpp"
#include "slicevlp/diffmath/tensor.hpp"

namespace slicevlp::diff {

// Correctly rounded sum of `values`; the result does not depend on their order.
double exact_sum(std::span<const double> values);

// ---- Tensor kernels (no tape) ----------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
// [m x d] -> [d]; column sums are exact so any row permutation gives the same bits.
Tensor mean_rows(const Tensor& a);
// Row-stable softmax (max subtracted per row).
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
// Rows with norm < eps are passed through unchanged.
Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);

// ---- Recorded ops ------------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var mean_rows(Var a);
// [(g*k) x d] -> [g x d]: mean over consecutive blocks of `group` rows.
Var mean_row_groups(Var a, std::size_t group);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var l2_normalize_rows(Var a, double eps = 1e-12);
// Inverted dropout. Identity in eval mode or when rate == 0 (no draws taken).
Var dropout(Var a, double rate, bool train_mode, Rng& rng);
// Rank-1 inputs are treated as single rows.
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var sum_all(Var a);
// Mean of the main diagonal of a square matrix; scalar result.
Var diag_mean(Var a);

}  // namespace slicevlp::diff
