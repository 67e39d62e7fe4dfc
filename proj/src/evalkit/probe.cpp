#include <algorithm>
#include <cmath>
#include <numeric>

#include "slicevlp/diffmath/ops.hpp"
#include "slicevlp/diffmath/rng.hpp"
#include "slicevlp/error.hpp"
#include "slicevlp/evalkit/evalkit.hpp"

namespace slicevlp::eval {

namespace {

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

struct LinearModel {
  Tensor w;  // d x C
  std::vector<double> b;
};

LinearModel fit_logistic(const Tensor& x, const std::vector<std::size_t>& y, std::size_t classes,
                         const ProbeSettings& s) {
  const std::size_t n = x.rows(), d = x.cols();
  LinearModel m{Tensor({d, classes}), std::vector<double>(classes, 0.0)};
  const Tensor xt = diff::transpose(x);
  Tensor g({n, classes});
  for (std::size_t it = 0; it < s.iterations; ++it) {
    Tensor logits = diff::matmul(x, m.w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < classes; ++c) logits.at(i, c) += m.b[c];
    const Tensor p = diff::softmax_rows(logits);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < classes; ++c) g.at(i, c) = (p.at(i, c) - (y[i] == c ? 1.0 : 0.0)) / n;
    }
    const Tensor gw = diff::matmul(xt, g);
    for (std::size_t k = 0; k < m.w.size(); ++k) m.w[k] -= s.step * gw[k];
    for (std::size_t c = 0; c < classes; ++c) {
      double gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) gb += g.at(i, c);
      m.b[c] -= s.step * gb;
    }
  }
  return m;
}

std::vector<std::int64_t> predict(const LinearModel& m, const Tensor& x) {
  Tensor logits = diff::matmul(x, m.w);
  std::vector<std::int64_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < m.b.size(); ++c) logits.at(i, c) += m.b[c];
    out[i] = static_cast<std::int64_t>(argmax_row(logits.row(i)));
  }
  return out;
}

Tensor take_rows(const Tensor& m, const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), m.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void standardize(Tensor& train, Tensor& test) {
  const std::size_t n = train.rows(), d = train.cols();
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += train.at(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (train.at(i, j) - mean) * (train.at(i, j) - mean);
    double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) sd = 0.0;
    auto apply = [&](Tensor& t) {
      for (std::size_t i = 0; i < t.rows(); ++i) t.at(i, j) = sd == 0.0 ? 0.0 : (t.at(i, j) - mean) / sd;
    };
    apply(train);
    apply(test);
  }
}

}  // namespace

std::vector<std::size_t> stratified_folds(const std::vector<std::int64_t>& labels, std::size_t k,
                                          std::uint64_t seed) {
  if (k < 2) throw ConfigError("probe needs at least 2 folds");
  std::int64_t top = -1;
  for (auto l : labels) {
    if (l < 0) throw InputError("negative label");
    top = std::max(top, l);
  }
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(top + 1));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  std::size_t present = 0;
  for (const auto& m : members) present += !m.empty();
  if (present < 2) throw EvaluationError("probe needs at least 2 classes, found " + std::to_string(present));
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (!members[c].empty() && members[c].size() < k) {
      throw EvaluationError("stratification: class " + std::to_string(c) + " has " +
                            std::to_string(members[c].size()) + " samples, fewer than " + std::to_string(k) +
                            " folds");
    }
  }
  diff::Rng rng(diff::derive_seed(seed, "probe.folds"));
  std::vector<std::size_t> fold(labels.size());
  std::size_t offset = 0;
  for (auto& m : members) {
    rng.shuffle(m);
    for (std::size_t p = 0; p < m.size(); ++p) fold[m[p]] = (offset + p) % k;
    offset += m.size();
  }
  return fold;
}

double macro_f1(const std::vector<std::int64_t>& truth, const std::vector<std::int64_t>& pred, std::size_t classes) {
  if (truth.size() != pred.size()) throw InputError("macro_f1: length mismatch");
  std::vector<double> tp(classes), fp(classes), fn(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]), p = static_cast<std::size_t>(pred[i]);
    if (t == p) tp[t] += 1;
    else {
      fp[p] += 1;
      fn[t] += 1;
    }
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    sum += 2 * tp[c] / denom;
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

ProbeReport linear_probe_cv(const EmbeddingTable& table, std::uint64_t seed, const ProbeSettings& s) {
  table.validate();
  const auto fold = stratified_folds(table.labels, s.folds, seed);
  const std::size_t classes = table.num_classes();
  ProbeReport r;
  std::vector<double> accs, f1s;
  for (std::size_t f = 0; f < s.folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < table.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
    Tensor xtr = take_rows(table.embeddings, tr), xte = take_rows(table.embeddings, te);
    if (s.standardize) standardize(xtr, xte);
    std::vector<std::size_t> ytr;
    for (auto i : tr) ytr.push_back(static_cast<std::size_t>(table.labels[i]));
    const LinearModel model = fit_logistic(xtr, ytr, classes, s);
    const auto pred = predict(model, xte);
    std::vector<std::int64_t> truth;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < te.size(); ++i) {
      truth.push_back(table.labels[te[i]]);
      correct += pred[i] == truth.back();
    }
    FoldMetrics m{static_cast<double>(correct) / static_cast<double>(te.size()), macro_f1(truth, pred, classes),
                  te.size()};
    r.folds.push_back(m);
    accs.push_back(m.accuracy);
    f1s.push_back(m.macro_f1);
  }
  mean_std(accs, r.accuracy_mean, r.accuracy_std);
  mean_std(f1s, r.f1_mean, r.f1_std);
  return r;
}

}  // namespace slicevlp::eval
