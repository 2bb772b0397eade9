#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "emohead/numerics/tensor.hpp"

namespace emohead::numerics {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive operations for reverse-mode differentiation.
///
/// Backward visits nodes in exact reverse of recording order; each node adds
/// its adjoint contributions into its inputs, so a value consumed by several
/// operations receives the sum of their adjoints. Nodes that do not depend on
/// any leaf are recorded without a backward closure, which makes a tape that
/// only holds constants a plain forward evaluator.
class Tape {
 public:
  /// Adjoint callback: receives the tape and the node's own id; reads
  /// `grad(self)` and calls `accumulate` on inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);
  /// Records an operation result. `backward` is dropped when `requires_grad` is false.
  Var record(Tensor value, bool requires_grad, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Adds `g` into the gradient of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor& g);
  /// Adds `scale * g`.
  void accumulate_scaled(std::size_t id, const Tensor& g, double scale);
  /// Mutable gradient buffer of node `id`, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

  /// Seeds d(out)/d(out) = 1 for a single-element `out` and runs adjoints.
  void backward(Var out);

  /// Gradient of the last backward target w.r.t. `v`; zeros if `v` was unreached.
  Tensor grad(Var v) const;
  const Tensor& grad(std::size_t id) const;
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

/// Extracts gradients for a list of leaves, in order.
std::vector<Tensor> gradients(const Tape& tape, std::span<const Var> vars);

}  // namespace emohead::numerics
