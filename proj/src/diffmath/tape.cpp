#include "slicevlp/diffmath/tape.hpp"

#include "slicevlp/error.hpp"

namespace slicevlp::diff {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Param& p) {
  Node n;
  n.external = &p.value;
  if (p.trainable) {
    n.sink = &p;
    n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  if (backward_done_) throw ContractError("cannot record onto a tape after backward");
  Node n;
  n.value = std::move(value);
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw ContractError("tape input refers to a later node");
    n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  }
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss was recorded on a different tape");
  if (backward_done_) throw ContractError("backward already ran on this tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(lv.shape()));
  }
  backward_done_ = true;
  grad(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.needs_grad) continue;
    if (n.sink) {
      auto g = n.grad.data();
      auto dst = n.sink->grad.data();
      if (dst.size() != g.size()) n.sink->grad = Tensor(n.sink->value.shape());
      dst = n.sink->grad.data();
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

void Tape::note_branch(std::uint64_t bits) noexcept {
  branch_signature_ = (branch_signature_ ^ bits) * 0x100000001B3ULL;
  branch_signature_ ^= branch_signature_ >> 29;
}

void zero_grads(std::vector<Param*> params) {
  for (Param* p : params) p->zero_grad();
}

}  // namespace slicevlp::diff
