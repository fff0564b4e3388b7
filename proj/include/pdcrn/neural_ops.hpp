#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "pdcrn/autograd.hpp"
#include "pdcrn/tensor.hpp"

namespace pdcrn {

/// Square-kernel convolution geometry.
///
/// conv2d weights are (out_ch, in_ch, k, k). conv_transpose2d is the adjoint
/// of the conv2d with the same spec read "backwards", so its weights are
/// (in_ch, out_ch, k, k) where in_ch is the channel count of its input.
struct ConvSpec {
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t pad = 0;

  /// Stride-1 spec whose output has the input's spatial size (odd kernel).
  static ConvSpec same(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                       std::size_t dilation = 1);

  void validate() const;
  /// floor((in + 2p - d(k-1) - 1) / s) + 1; throws if the window never fits.
  std::size_t out_size(std::size_t in) const;
  /// (in - 1) s + d(k-1) + 1 - 2p
  std::size_t transposed_out_size(std::size_t in) const;
  std::string str() const;
};

enum class ActivationKind { leaky_relu, identity };

struct Activation {
  ActivationKind kind = ActivationKind::leaky_relu;
  double alpha = 0.2;

  static Activation leaky(double alpha = 0.2) { return {ActivationKind::leaky_relu, alpha}; }
  static Activation linear() { return {ActivationKind::identity, 0.0}; }
};

// ---------------------------------------------------------------------------
// Plain tensor kernels. Bias tensors are (1, out_ch, 1, 1).

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& weights, const Tensor4<T>& bias,
                  const ConvSpec& spec);

template <typename T>
Tensor4<T> conv_transpose2d(const Tensor4<T>& x, const Tensor4<T>& weights,
                            const Tensor4<T>& bias, const ConvSpec& spec);

template <typename T>
Tensor4<T> activation(const Tensor4<T>& x, Activation act);

/// Elementwise min(max(t, lo), hi); requires lo < hi.
template <typename T>
Tensor4<T> clamp(const Tensor4<T>& x, T lo, T hi);

namespace kernels {
// Raw convolution kernels shared by the forward and backward rules. Weights
// are always in conv2d layout (out, in, k, k) relative to `spec`.

/// out(n,o,y,x) += sum_{i,u,v} x(n,i,y*s+u*d-p, x*s+v*d-p) w(o,i,u,v)
template <typename T>
void conv_accumulate(const Tensor4<T>& x, const Tensor4<T>& w, const ConvSpec& spec,
                     Tensor4<T>& out);
/// Transpose of conv_accumulate w.r.t. x: scatters `g` back into `gx`.
template <typename T>
void conv_input_grad(const Tensor4<T>& g, const Tensor4<T>& w, const ConvSpec& spec,
                     Tensor4<T>& gx);
/// gw(o,i,u,v) += sum_{n,y,x} g(n,o,y,x) x(n,i,y*s+u*d-p, x*s+v*d-p)
template <typename T>
void conv_weight_grad(const Tensor4<T>& x, const Tensor4<T>& g, const ConvSpec& spec,
                      Tensor4<T>& gw);
template <typename T>
void bias_grad(const Tensor4<T>& g, Tensor4<T>& gb);
}  // namespace kernels

// ---------------------------------------------------------------------------
// Differentiable versions recorded on a tape.

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weights, Var<T> bias, const ConvSpec& spec);

template <typename T>
Var<T> conv_transpose2d(Var<T> x, Var<T> weights, Var<T> bias, const ConvSpec& spec);

template <typename T>
Var<T> activation(Var<T> x, Activation act);

/// Gradient passes only where lo < t < hi.
template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T s);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);

template <typename T>
Var<T> dwt_haar2(Var<T> x);
template <typename T>
Var<T> idwt_haar2(Var<T> x);
template <typename T>
Var<T> dct2_blockwise(Var<T> x, std::size_t block);
template <typename T>
Var<T> idct2_blockwise(Var<T> x, std::size_t block);
template <typename T>
Var<T> space_to_depth(Var<T> x, std::size_t r);
template <typename T>
Var<T> depth_to_space(Var<T> x, std::size_t r);

/// Scalar sum of all elements, shape (1,1,1,1).
template <typename T>
Var<T> sum(Var<T> x);

/// Scalar <x, weights> against a constant tensor.
template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor4<T>& weights);

/// Mean squared error over every element (batch included).
template <typename T>
Var<T> mse_loss(Var<T> pred, Var<T> target);

}  // namespace pdcrn
