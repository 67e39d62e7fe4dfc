#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slicevlp/diffmath/tape.hpp"

namespace slicevlp::diff {

// Builds a scalar loss on the given tape, binding Params with tape.param().
// Must be deterministic: repeated calls with the same Param values return the
// same number (reseed any dropout generator inside).
using ScalarFn = std::function<Var(Tape&)>;

struct ParamCheck {
  std::string name;
  // ||a - n||_2 / max(||a||_2, ||n||_2, denom_floor) over the whole tensor.
  double rel_error = 0.0;
  double max_abs_error = 0.0;
  // Worst single entry by |a - n| / max(|a|, |n|, denom_floor). Diagnostic
  // only: entries far below the finite-difference noise level dominate it.
  double max_entry_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  // Entries checked with a one-sided stencil because a kink was within h.
  std::size_t one_sided = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;  // max over params of rel_error
  double tolerance = 0.0;
  bool passed = false;
};

// Compares reverse-mode gradients a against central differences
// n = (f(x+h) - f(x-h)) / 2h for every entry of every param. Each param gets
// one relative error, the norm of the difference over the larger gradient
// norm; the check passes iff every param's error is <= tol.
//
// When a probe at x+h or x-h lands on a different piece of a piecewise
// function (its tape branch signature differs from the base tape), that entry
// uses the second-order one-sided stencil (-3f(x) + 4f(x+h) - f(x+2h)) / 2h
// on the side that stays on the base piece.
GradCheckReport grad_check(const ScalarFn& f, std::span<Param* const> params, double h = 1e-5,
                           double tol = 1e-4, double denom_floor = 1e-7);

std::string to_string(const GradCheckReport& report);

}  // namespace slicevlp::diff
