#include "slicevlp/trainer/optimizer.hpp"

#include <cmath>

#include "slicevlp/error.hpp"

namespace slicevlp::train {

void adam_step(std::span<diff::Param* const> params, OptimizerState& state, double lr,
               const AdamSettings& s) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (diff::Param* p : params) {
    if (!p->trainable) continue;
    auto [it, fresh] = state.moments.try_emplace(p->name);
    Moments& mo = it->second;
    if (fresh) {
      mo.m = diff::Tensor(p->value.shape());
      mo.v = diff::Tensor(p->value.shape());
    } else if (mo.m.shape() != p->value.shape()) {
      throw CompatibilityError("optimizer moments for " + p->name + " have shape " +
                               diff::shape_str(mo.m.shape()) + ", param is " +
                               diff::shape_str(p->value.shape()));
    }
    if (p->grad.shape() != p->value.shape()) {
      throw ContractError("gradient of " + p->name + " has not been allocated");
    }
    auto w = p->value.data();
    auto g = p->grad.data();
    auto m = mo.m.data();
    auto v = mo.v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      w[i] -= lr * (mh / (std::sqrt(vh) + s.eps) + s.weight_decay * w[i]);
    }
  }
}

}  // namespace slicevlp::train
