#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "slicevlp/diffmath/tensor.hpp"

namespace slicevlp::diff {

// A named trainable (or frozen) tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of a forward computation. Nodes are stored in creation
// order, which is a topological order, so backward is a single reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // No copy; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  // Leaf bound to `p`. Gradients reach p.grad only when p.trainable is set.
  Var param(Param& p);

  // Records an operation. `fn` runs during backward when the node needs a grad.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const;
  // Gradient buffer of node `id`, allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

  // Non-smooth ops (relu, guarded normalization) fold their branch decisions
  // in here. Two tapes with equal signatures evaluated the same linear piece.
  void note_branch(std::uint64_t bits) noexcept;
  std::uint64_t branch_signature() const noexcept { return branch_signature_; }

  // Accumulates d(loss)/d(param) into every trainable Param bound to this
  // tape. Allowed once per tape.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Param* sink = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  bool backward_done_ = false;
  std::uint64_t branch_signature_ = 0xCBF29CE484222325ULL;
};

// Convenience: backward on a fresh set of zeroed grads is the caller's job.
void zero_grads(std::vector<Param*> params);

}  // namespace slicevlp::diff
