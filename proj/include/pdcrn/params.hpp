#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pdcrn/autograd.hpp"
#include "pdcrn/tensor.hpp"

namespace pdcrn {

enum class ParamRole { weight, bias };

/// Name, shape and role of one trainable tensor, as declared by the
/// architecture before any values exist.
struct ParamDecl {
  std::string name;
  Shape shape;
  ParamRole role = ParamRole::weight;
  /// Multiplier on the He-normal std for weights.
  double init_scale = 1.0;
};

/// Init multiplier for convs whose output is added onto a residual path
/// (block fusions and the exit conv): they start small so the stacked
/// residual additions begin close to the identity.
inline constexpr double kResidualInitScale = 0.1;

/// Ordered declarations; order is the architecture's depth-first order.
class ParamLayout {
 public:
  void add(std::string name, Shape shape, ParamRole role, double init_scale = 1.0);
  /// Convenience for a conv: "<prefix>.w" with `weight_shape` and "<prefix>.b"
  /// with (1, bias_channels, 1, 1).
  void add_conv(const std::string& prefix, Shape weight_shape, std::size_t bias_channels,
                double init_scale = 1.0);

  const std::vector<ParamDecl>& entries() const { return entries_; }
  std::size_t scalar_count() const;

 private:
  std::vector<ParamDecl> entries_;
};

/// Named trainable tensors with deterministic ordering.
template <typename T>
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor4<T>>;

  void add(std::string name, Tensor4<T> value);
  bool contains(std::string_view name) const;
  const Tensor4<T>& get(std::string_view name) const;
  Tensor4<T>& get(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Throws ShapeError unless `a` and `b` have identical names, order and shapes.
template <typename T>
void require_aligned(const ParamSet<T>& a, const ParamSet<T>& b, const char* what);

template <typename U, typename T>
ParamSet<U> param_cast(const ParamSet<T>& params) {
  ParamSet<U> out;
  for (const auto& [name, t] : params.entries()) out.add(name, tensor_cast<U>(t));
  return out;
}

/// A ParamSet placed on a tape as leaves, addressable by name.
template <typename T>
class BoundParams {
 public:
  /// `overrides` substitute existing variables for the named parameters
  /// (used to differentiate w.r.t. one tensor while holding the rest).
  BoundParams(Tape<T>& tape, const ParamSet<T>& params, bool requires_grad,
              const std::map<std::string, Var<T>, std::less<>>& overrides = {});

  Var<T> operator[](std::string_view name) const;
  /// Gradients for every bound parameter, ordered like the source ParamSet.
  ParamSet<T> gradients() const;

 private:
  Tape<T>* tape_;
  std::vector<std::pair<std::string, Var<T>>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace pdcrn
