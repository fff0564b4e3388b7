#include "pdcrn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pdcrn {

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var<T> v) {
  if (&v.tape() != this || v.id() >= nodes_.size())
    throw UsageError("variable does not belong to this tape");
  return nodes_[v.id()];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var<T> v) const {
  if (&v.tape() != this || v.id() >= nodes_.size())
    throw UsageError("variable does not belong to this tape");
  return nodes_[v.id()];
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor4<T> value, bool requires_grad) {
  if (in_backward_) throw UsageError("cannot record during backward");
  nodes_.push_back(Node{std::move(value), {}, requires_grad, false, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor4<T> value, std::span<const Var<T>> inputs,
                       BackwardFn backward) {
  if (in_backward_) throw UsageError("cannot record during backward");
  bool needs = false;
  for (const Var<T>& in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(backward) : nullptr});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor4<T>& Tape<T>::value(Var<T> v) const {
  return node(v).value;
}

template <typename T>
bool Tape<T>::requires_grad(Var<T> v) const {
  return node(v).requires_grad;
}

template <typename T>
Tensor4<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = node(v);
  return n.has_grad ? n.grad : Tensor4<T>(n.value.shape());
}

template <typename T>
Tensor4<T>& Tape<T>::grad_buffer(Var<T> v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor4<T>(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate(Var<T> v, const Tensor4<T>& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    require_same_shape(n.value.shape(), g.shape(), "gradient");
    n.grad = g;
    n.has_grad = true;
    return;
  }
  pdcrn::accumulate(n.grad, g);
}

template <typename T>
void Tape<T>::backward(Var<T> root, T seed) {
  Node& r = node(root);
  if (r.value.size() != 1)
    throw UsageError("backward: root must be a scalar, got " + r.value.shape().str());
  if (!std::isfinite(seed)) throw UsageError("backward: non-finite seed");
  for (Node& n : nodes_) {
    n.grad = {};
    n.has_grad = false;
  }
  r.grad = Tensor4<T>(r.value.shape(), seed);
  r.has_grad = true;

  in_backward_ = true;
  try {
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      // The rule may write into other nodes' buffers but never this one's.
      n.backward(*this, n.grad);
    }
  } catch (...) {
    in_backward_ = false;
    throw;
  }
  in_backward_ = false;
}

template <typename T>
GradCheckResult grad_check(const ScalarFn<T>& fn, const Tensor4<T>& point, double eps,
                           std::size_t max_coords) {
  Tensor4<T> analytic;
  {
    Tape<T> tape;
    Var<T> x = tape.leaf(point, true);
    Var<T> loss = fn(tape, x);
    tape.backward(loss);
    analytic = tape.grad(x);
  }

  auto evaluate = [&](const Tensor4<T>& at) {
    Tape<T> tape;
    Var<T> x = tape.leaf(at, false);
    return static_cast<double>(fn(tape, x).value()[0]);
  };

  const std::size_t total = point.size();
  const std::size_t count = (max_coords == 0 || max_coords >= total) ? total : max_coords;
  GradCheckResult result;
  result.coordinates = count;
  Tensor4<T> probe = point;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = count == total ? k : (k * total) / count;
    const T original = probe[i];
    probe[i] = static_cast<T>(original + eps);
    const double up = evaluate(probe);
    probe[i] = static_cast<T>(original - eps);
    const double down = evaluate(probe);
    probe[i] = original;

    const double numeric = (up - down) / (2.0 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (k == 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  return result;
}

template class Tape<float>;
template class Tape<double>;
template GradCheckResult grad_check(const ScalarFn<float>&, const Tensor4<float>&, double,
                                    std::size_t);
template GradCheckResult grad_check(const ScalarFn<double>&, const Tensor4<double>&, double,
                                    std::size_t);

}  // namespace pdcrn
