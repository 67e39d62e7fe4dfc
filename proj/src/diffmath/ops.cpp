#include "slicevlp/diffmath/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "slicevlp/error.hpp"

namespace slicevlp::diff {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Treats a rank-1 tensor as a 1 x d row.
std::size_t as_rows(const Tensor& t) { return t.rank() == 1 ? 1 : t.rows(); }
std::size_t as_cols(const Tensor& t) { return t.rank() == 1 ? t.dim(0) : t.cols(); }

void accumulate(Tape& tape, std::size_t id, const Tensor& g) {
  if (!tape.needs_grad(id)) return;
  auto dst = tape.grad(id).data();
  auto src = g.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

// c += a * b (a: m x k, b: k x n), fixed i-k-j order.
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = &c.at(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      if (aip == 0.0) continue;
      const double* bp = &b.at(p, 0);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c += a * b^T (a: m x k, b: n x k)
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = &a.at(i, 0);
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = &b.at(j, 0);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c.at(i, j) += s;
    }
  }
}

// c += a^T * b (a: k x m, b: k x n)
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = &a.at(p, 0);
    const double* bp = &b.at(p, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = &c.at(i, 0);
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

}  // namespace

double exact_sum(std::span<const double> values) {
  // Shewchuk's non-overlapping partials with a correctly rounded final step.
  std::vector<double> partials;
  for (double x : values) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  std::size_t n = partials.size();
  if (n == 0) return 0.0;
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

// ---- Tensor kernels --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  gemm_acc(a, b, c);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

Tensor relu(const Tensor& a) {
  Tensor c = a;
  for (double& v : c.data()) v = v > 0.0 ? v : 0.0;
  return c;
}

Tensor mean_rows(const Tensor& a) {
  require_matrix(a, "mean_rows");
  const std::size_t m = a.rows(), d = a.cols();
  if (m == 0) throw DimensionError("mean_rows of an empty matrix");
  Tensor out({d});
  std::vector<double> column(m);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < m; ++i) column[i] = a.at(i, j);
    out[j] = exact_sum(column) / static_cast<double>(m);
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  Tensor y = a;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      s += v;
    }
    for (double& v : r) v /= s;
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& a) {
  require_matrix(a, "log_softmax_rows");
  Tensor y = a;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (double& v : r) v -= lse;
  }
  return y;
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
  require_matrix(a, "l2_normalize_rows");
  Tensor y = a;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    double ss = 0.0;
    for (double v : r) ss += v * v;
    const double norm = std::sqrt(ss);
    if (norm < eps) continue;
    for (double& v : r) v /= norm;
  }
  return y;
}

// ---- Recorded ops ------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = a.tape();
  Tensor out = matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) gemm_nt_acc(g, t.value(ib), t.grad(ia));
    if (t.needs_grad(ib)) gemm_tn_acc(t.value(ia), g, t.grad(ib));
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(transpose(a.value()), {ia}, [ia](Tape& t, std::size_t self) {
    accumulate(t, ia, transpose(t.grad(self)));
  });
}

Var add(Var a, Var b) {
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(add(a.value(), b.value()), {ia, ib},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           accumulate(t, ia, g);
                           accumulate(t, ib, g);
                         });
}

Var sub(Var a, Var b) {
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(sub(a.value(), b.value()), {ia, ib},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           accumulate(t, ia, g);
                           accumulate(t, ib, scale(g, -1.0));
                         });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return a.tape().record(scale(a.value(), s), {ia}, [ia, s](Tape& t, std::size_t self) {
    accumulate(t, ia, scale(t.grad(self), s));
  });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  std::uint64_t word = 0;
  std::size_t bit = 0;
  for (double v : a.value().data()) {
    word = (word << 1) | (v > 0.0 ? 1u : 0u);
    if (++bit == 64) {
      a.tape().note_branch(word);
      word = 0;
      bit = 0;
    }
  }
  a.tape().note_branch(word ^ (static_cast<std::uint64_t>(bit) << 58));
  return a.tape().record(relu(a.value()), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) gx[i] += g[i];
  });
}

Var mean_rows(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(mean_rows(a.value()), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    const double inv = 1.0 / static_cast<double>(gx.rows());
    for (std::size_t i = 0; i < gx.rows(); ++i)
      for (std::size_t j = 0; j < gx.cols(); ++j) gx.at(i, j) += g[j] * inv;
  });
}

Var mean_row_groups(Var a, std::size_t group) {
  const Tensor& x = a.value();
  require_matrix(x, "mean_row_groups");
  if (group == 0 || x.rows() % group != 0) {
    throw DimensionError("mean_row_groups: " + std::to_string(x.rows()) +
                         " rows are not a multiple of group size " + std::to_string(group));
  }
  const std::size_t groups = x.rows() / group, d = x.cols();
  Tensor out({groups, d});
  std::vector<double> column(group);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < group; ++i) column[i] = x.at(gi * group + i, j);
      out.at(gi, j) = exact_sum(column) / static_cast<double>(group);
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, group](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    const double inv = 1.0 / static_cast<double>(group);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t j = 0; j < gx.cols(); ++j) gx.at(r, j) += g.at(r / group, j) * inv;
  });
}

Var softmax_rows(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(softmax_rows(a.value()), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(log_softmax_rows(a.value()), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) gs += g.at(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j)
        gx.at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gs;
    }
  });
}

Var l2_normalize_rows(Var a, double eps) {
  const std::size_t ia = a.id();
  for (std::size_t i = 0; i < a.value().rows(); ++i) {
    double ss = 0.0;
    for (double v : a.value().row(i)) ss += v * v;
    if (std::sqrt(ss) < eps) a.tape().note_branch(0x5BD1E995ULL + i);
  }
  return a.tape().record(
      l2_normalize_rows(a.value(), eps), {ia}, [ia, eps](Tape& t, std::size_t self) {
        if (!t.needs_grad(ia)) return;
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < x.rows(); ++i) {
          double ss = 0.0;
          for (std::size_t j = 0; j < x.cols(); ++j) ss += x.at(i, j) * x.at(i, j);
          const double norm = std::sqrt(ss);
          if (norm < eps) {
            for (std::size_t j = 0; j < x.cols(); ++j) gx.at(i, j) += g.at(i, j);
            continue;
          }
          double dot = 0.0;
          for (std::size_t j = 0; j < x.cols(); ++j) dot += y.at(i, j) * g.at(i, j);
          for (std::size_t j = 0; j < x.cols(); ++j)
            gx.at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / norm;
        }
      });
}

Var dropout(Var a, double rate, bool train_mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!train_mode || rate == 0.0) return a;
  Tensor mask(a.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [ia, mask = std::move(mask)](Tape& t, std::size_t self) {
                           if (!t.needs_grad(ia)) return;
                           const Tensor& g = t.grad(self);
                           Tensor& gx = t.grad(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero parts");
  const std::size_t d = as_cols(parts[0].value());
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (as_cols(p.value()) != d) {
      throw DimensionError("concat_rows column mismatch: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += as_rows(p.value());
    ids.push_back(p.id());
  }
  std::vector<double> data;
  data.reserve(total * d);
  for (const Var& p : parts) {
    auto src = p.value().data();
    data.insert(data.end(), src.begin(), src.end());
  }
  return parts[0].tape().record(
      Tensor({total, d}, std::move(data)), ids, [ids](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t id : ids) {
          const std::size_t n = t.value(id).size();
          if (t.needs_grad(id)) {
            auto dst = t.grad(id).data();
            for (std::size_t k = 0; k < n; ++k) dst[k] += g[offset + k];
          }
          offset += n;
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero parts");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != m) {
      throw DimensionError("concat_cols row mismatch: " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out({m, total});
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out.at(i, c0 + j) = v.at(i, j);
    c0 += v.cols();
  }
  return parts[0].tape().record(std::move(out), ids, [ids, widths](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        Tensor& gp = t.grad(ids[k]);
        for (std::size_t i = 0; i < gp.rows(); ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gp.at(i, j) += g.at(i, c + j);
      }
      c += widths[k];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_rows");
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_str(x.shape()));
  }
  const std::size_t d = x.cols();
  auto src = x.data().subspan(begin * d, count * d);
  Tensor out({count, d}, std::vector<double>(src.begin(), src.end()));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, begin, d](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    auto dst = t.grad(ia).data().subspan(begin * d, g.size());
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_cols");
  if (begin + count > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_str(x.shape()));
  }
  Tensor out({x.rows(), count});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = x.at(i, begin + j);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, begin](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gx.at(i, begin + j) += g.at(i, j);
  });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ia).data()) v += g;
  });
}

Var diag_mean(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "diag_mean");
  if (x.rows() != x.cols() || x.rows() == 0) {
    throw DimensionError("diag_mean needs a non-empty square matrix, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x.at(i, i);
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s / static_cast<double>(n)), {ia},
                         [ia, n](Tape& t, std::size_t self) {
                           if (!t.needs_grad(ia)) return;
                           const double g = t.grad(self)[0] / static_cast<double>(n);
                           Tensor& gx = t.grad(ia);
                           for (std::size_t i = 0; i < n; ++i) gx.at(i, i) += g;
                         });
}

}  // namespace slicevlp::diff
