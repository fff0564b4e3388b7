#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

#include "pdcrn/tensor.hpp"

namespace pdcrn {

/// Misuse of the gradient engine (e.g. backward from a non-scalar root).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
/// tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor4<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
/// node index is a topological order and backward() just walks it in reverse.
/// A tape is single-threaded; independent tapes share nothing.
template <typename T>
class Tape {
 public:
  /// Propagates `grad_out` (the gradient w.r.t. the node's value) into the
  /// node's inputs through Tape::grad_buffer / Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor4<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node. Trainable tensors and inputs being checked use requires_grad.
  Var<T> leaf(Tensor4<T> value, bool requires_grad = false);

  /// Interior node. The backward rule is dropped when no input needs a gradient.
  Var<T> record(Tensor4<T> value, std::span<const Var<T>> inputs, BackwardFn backward);
  Var<T> record(Tensor4<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Tensor4<T>& value(Var<T> v) const;
  bool requires_grad(Var<T> v) const;

  /// Gradient accumulated so far; zeros if the node never received one.
  Tensor4<T> grad(Var<T> v) const;

  /// Mutable gradient storage, zero-initialised on first use.
  Tensor4<T>& grad_buffer(Var<T> v);
  void accumulate(Var<T> v, const Tensor4<T>& g);

  /// Seeds d(root)/d(root) = seed and runs every recorded rule once in
  /// reverse order. The root must hold exactly one element.
  void backward(Var<T> root, T seed = T(1));

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor4<T> value;
    Tensor4<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Node& node(Var<T> v);
  const Node& node(Var<T> v) const;

  std::vector<Node> nodes_;
  bool in_backward_ = false;
};

/// Result of comparing analytic gradients with central differences.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Builds a scalar loss on `tape` from the variable being checked.
template <typename T>
using ScalarFn = std::function<Var<T>(Tape<T>& tape, Var<T> x)>;

/// Max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-8).
///
/// When `max_coords` is non-zero only that many coordinates, spread evenly
/// through the tensor, are perturbed.
template <typename T>
GradCheckResult grad_check(const ScalarFn<T>& fn, const Tensor4<T>& point, double eps = 1e-5,
                           std::size_t max_coords = 0);

}  // namespace pdcrn
