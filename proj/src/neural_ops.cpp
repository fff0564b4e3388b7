#include "pdcrn/neural_ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pdcrn/transforms.hpp"

namespace pdcrn {

ConvSpec ConvSpec::same(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                        std::size_t dilation) {
  if (kernel % 2 == 0) throw ShapeError("ConvSpec::same needs an odd kernel");
  return ConvSpec{in_ch, out_ch, kernel, 1, dilation, dilation * (kernel - 1) / 2};
}

void ConvSpec::validate() const {
  if (kernel == 0 || stride == 0 || dilation == 0 || in_ch == 0 || out_ch == 0)
    throw ShapeError("invalid conv spec " + str());
}

std::size_t ConvSpec::out_size(std::size_t in) const {
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (in + 2 * pad < span)
    throw ShapeError("conv window " + str() + " larger than input extent " + std::to_string(in));
  return (in + 2 * pad - span) / stride + 1;
}

std::size_t ConvSpec::transposed_out_size(std::size_t in) const {
  const std::size_t full = (in - 1) * stride + dilation * (kernel - 1) + 1;
  if (full <= 2 * pad) throw ShapeError("transposed conv " + str() + " yields empty output");
  return full - 2 * pad;
}

std::string ConvSpec::str() const {
  return "{in=" + std::to_string(in_ch) + " out=" + std::to_string(out_ch) +
         " k=" + std::to_string(kernel) + " s=" + std::to_string(stride) +
         " d=" + std::to_string(dilation) + " p=" + std::to_string(pad) + "}";
}

namespace {

// Output indices o in [lo, hi) for which o*stride + offset lies in [0, in).
struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

Range valid_range(long long offset, std::size_t stride, std::size_t in, std::size_t out) {
  const long long s = static_cast<long long>(stride);
  long long lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  const long long last = static_cast<long long>(in) - 1 - offset;
  long long hi = last < 0 ? 0 : last / s + 1;
  hi = std::min<long long>(hi, static_cast<long long>(out));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void check_conv_shapes(const Shape& x, const Shape& w, const ConvSpec& spec, const char* what) {
  spec.validate();
  if (x.c != spec.in_ch)
    throw ShapeError(std::string(what) + ": input channels " + std::to_string(x.c) +
                     " do not match " + spec.str());
  const Shape expect{spec.out_ch, spec.in_ch, spec.kernel, spec.kernel};
  if (w != expect)
    throw ShapeError(std::string(what) + ": weights " + w.str() + " expected " + expect.str());
}

void check_bias(const Shape& b, std::size_t channels, const char* what) {
  if (b != Shape{1, channels, 1, 1})
    throw ShapeError(std::string(what) + ": bias " + b.str() + " expected (1," +
                     std::to_string(channels) + ",1,1)");
}

ConvSpec adjoint_spec(const ConvSpec& spec) {
  ConvSpec s = spec;
  std::swap(s.in_ch, s.out_ch);
  return s;
}

template <typename T>
void fill_bias(Tensor4<T>& out, const Tensor4<T>& bias) {
  const std::size_t plane = out.shape().plane();
  for (std::size_t n = 0; n < out.n(); ++n)
    for (std::size_t o = 0; o < out.c(); ++o) std::fill_n(out.plane(n, o), plane, bias[o]);
}

}  // namespace

namespace kernels {

template <typename T>
void conv_accumulate(const Tensor4<T>& x, const Tensor4<T>& w, const ConvSpec& spec,
                     Tensor4<T>& out) {
  const std::size_t H = x.h(), W = x.w(), Ho = out.h(), Wo = out.w();
  const std::size_t k = spec.kernel, s = spec.stride;
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < spec.out_ch; ++o) {
      T* dst = out.plane(n, o);
      for (std::size_t i = 0; i < spec.in_ch; ++i) {
        const T* src = x.plane(n, i);
        const T* wk = w.data().data() + w.offset(o, i, 0, 0);
        for (std::size_t u = 0; u < k; ++u) {
          const long long offy = static_cast<long long>(u * spec.dilation) - static_cast<long long>(spec.pad);
          const Range ry = valid_range(offy, s, H, Ho);
          for (std::size_t v = 0; v < k; ++v) {
            const T wv = wk[u * k + v];
            const long long offx = static_cast<long long>(v * spec.dilation) - static_cast<long long>(spec.pad);
            const Range rx = valid_range(offx, s, W, Wo);
            if (rx.lo >= rx.hi) continue;
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              const T* row = src + static_cast<long long>(oy * s) * static_cast<long long>(W) +
                             offy * static_cast<long long>(W) + offx;
              T* orow = dst + oy * Wo;
              if (s == 1) {
#pragma omp simd
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * row[ox];
              } else {
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * row[ox * s];
              }
            }
          }
        }
      }
    }
}

template <typename T>
void conv_input_grad(const Tensor4<T>& g, const Tensor4<T>& w, const ConvSpec& spec,
                     Tensor4<T>& gx) {
  const std::size_t H = gx.h(), W = gx.w(), Ho = g.h(), Wo = g.w();
  const std::size_t k = spec.kernel, s = spec.stride;
  for (std::size_t n = 0; n < g.n(); ++n)
    for (std::size_t i = 0; i < spec.in_ch; ++i) {
      T* dst = gx.plane(n, i);
      for (std::size_t o = 0; o < spec.out_ch; ++o) {
        const T* src = g.plane(n, o);
        const T* wk = w.data().data() + w.offset(o, i, 0, 0);
        for (std::size_t u = 0; u < k; ++u) {
          const long long offy = static_cast<long long>(u * spec.dilation) - static_cast<long long>(spec.pad);
          const Range ry = valid_range(offy, s, H, Ho);
          for (std::size_t v = 0; v < k; ++v) {
            const T wv = wk[u * k + v];
            const long long offx = static_cast<long long>(v * spec.dilation) - static_cast<long long>(spec.pad);
            const Range rx = valid_range(offx, s, W, Wo);
            if (rx.lo >= rx.hi) continue;
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              T* row = dst + static_cast<long long>(oy * s) * static_cast<long long>(W) +
                       offy * static_cast<long long>(W) + offx;
              const T* grow = src + oy * Wo;
              if (s == 1) {
#pragma omp simd
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) row[ox] += wv * grow[ox];
              } else {
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) row[ox * s] += wv * grow[ox];
              }
            }
          }
        }
      }
    }
}

template <typename T>
void conv_weight_grad(const Tensor4<T>& x, const Tensor4<T>& g, const ConvSpec& spec,
                      Tensor4<T>& gw) {
  const std::size_t H = x.h(), W = x.w(), Ho = g.h(), Wo = g.w();
  const std::size_t k = spec.kernel, s = spec.stride;
  for (std::size_t o = 0; o < spec.out_ch; ++o)
    for (std::size_t i = 0; i < spec.in_ch; ++i) {
      T* gk = gw.data().data() + gw.offset(o, i, 0, 0);
      for (std::size_t u = 0; u < k; ++u) {
        const long long offy = static_cast<long long>(u * spec.dilation) - static_cast<long long>(spec.pad);
        const Range ry = valid_range(offy, s, H, Ho);
        for (std::size_t v = 0; v < k; ++v) {
          const long long offx = static_cast<long long>(v * spec.dilation) - static_cast<long long>(spec.pad);
          const Range rx = valid_range(offx, s, W, Wo);
          if (rx.lo >= rx.hi) continue;
          T acc = 0;
          for (std::size_t n = 0; n < x.n(); ++n) {
            const T* src = x.plane(n, i);
            const T* gsrc = g.plane(n, o);
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              const T* row = src + static_cast<long long>(oy * s) * static_cast<long long>(W) +
                             offy * static_cast<long long>(W) + offx;
              const T* grow = gsrc + oy * Wo;
              if (s == 1) {
#pragma omp simd reduction(+ : acc)
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * row[ox];
              } else {
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * row[ox * s];
              }
            }
          }
          gk[u * k + v] += acc;
        }
      }
    }
}

template <typename T>
void bias_grad(const Tensor4<T>& g, Tensor4<T>& gb) {
  const std::size_t plane = g.shape().plane();
  for (std::size_t o = 0; o < g.c(); ++o) {
    T acc = 0;
    for (std::size_t n = 0; n < g.n(); ++n) {
      const T* src = g.plane(n, o);
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < plane; ++j) acc += src[j];
    }
    gb[o] += acc;
  }
}

}  // namespace kernels

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& weights, const Tensor4<T>& bias,
                  const ConvSpec& spec) {
  check_conv_shapes(x.shape(), weights.shape(), spec, "conv2d");
  check_bias(bias.shape(), spec.out_ch, "conv2d");
  Tensor4<T> out({x.n(), spec.out_ch, spec.out_size(x.h()), spec.out_size(x.w())});
  fill_bias(out, bias);
  kernels::conv_accumulate(x, weights, spec, out);
  return out;
}

template <typename T>
Tensor4<T> conv_transpose2d(const Tensor4<T>& x, const Tensor4<T>& weights,
                            const Tensor4<T>& bias, const ConvSpec& spec) {
  // Weights (in, out, k, k) are exactly conv2d weights of the adjoint spec.
  const ConvSpec adj = adjoint_spec(spec);
  adj.validate();
  if (x.c() != spec.in_ch)
    throw ShapeError("conv_transpose2d: input channels " + std::to_string(x.c()) +
                     " do not match " + spec.str());
  const Shape expect{spec.in_ch, spec.out_ch, spec.kernel, spec.kernel};
  if (weights.shape() != expect)
    throw ShapeError("conv_transpose2d: weights " + weights.shape().str() + " expected " +
                     expect.str());
  check_bias(bias.shape(), spec.out_ch, "conv_transpose2d");
  Tensor4<T> out(
      {x.n(), spec.out_ch, spec.transposed_out_size(x.h()), spec.transposed_out_size(x.w())});
  fill_bias(out, bias);
  kernels::conv_input_grad(x, weights, adj, out);
  return out;
}

template <typename T>
Tensor4<T> activation(const Tensor4<T>& x, Activation act) {
  if (act.kind == ActivationKind::identity) return x;
  const T alpha = static_cast<T>(act.alpha);
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= T(0) ? x[i] : alpha * x[i];
  return out;
}

template <typename T>
Tensor4<T> clamp(const Tensor4<T>& x, T lo, T hi) {
  if (!(lo < hi)) throw std::invalid_argument("clamp: lower bound must be below upper bound");
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::min(std::max(x[i], lo), hi);
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weights, Var<T> bias, const ConvSpec& spec) {
  Tape<T>& tape = x.tape();
  return tape.record(
      conv2d(x.value(), weights.value(), bias.value(), spec), {x, weights, bias},
      [x, weights, bias, spec](Tape<T>& t, const Tensor4<T>& g) {
        if (t.requires_grad(x)) kernels::conv_input_grad(g, weights.value(), spec, t.grad_buffer(x));
        if (t.requires_grad(weights))
          kernels::conv_weight_grad(x.value(), g, spec, t.grad_buffer(weights));
        if (t.requires_grad(bias)) kernels::bias_grad(g, t.grad_buffer(bias));
      });
}

template <typename T>
Var<T> conv_transpose2d(Var<T> x, Var<T> weights, Var<T> bias, const ConvSpec& spec) {
  Tape<T>& tape = x.tape();
  const ConvSpec adj = adjoint_spec(spec);
  return tape.record(
      conv_transpose2d(x.value(), weights.value(), bias.value(), spec), {x, weights, bias},
      [x, weights, bias, adj](Tape<T>& t, const Tensor4<T>& g) {
        if (t.requires_grad(x)) kernels::conv_accumulate(g, weights.value(), adj, t.grad_buffer(x));
        // The forward map is conv_input_grad(x; w), so dL/dw pairs g (the
        // adjoint conv's "input") with x (its "output gradient").
        if (t.requires_grad(weights))
          kernels::conv_weight_grad(g, x.value(), adj, t.grad_buffer(weights));
        if (t.requires_grad(bias)) kernels::bias_grad(g, t.grad_buffer(bias));
      });
}

template <typename T>
Var<T> activation(Var<T> x, Activation act) {
  if (act.kind == ActivationKind::identity) return x;
  Tape<T>& tape = x.tape();
  return tape.record(activation(x.value(), act), {x},
                     [x, act](Tape<T>& t, const Tensor4<T>& g) {
                       const T alpha = static_cast<T>(act.alpha);
                       const Tensor4<T>& in = x.value();
                       Tensor4<T>& gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         gx[i] += in[i] >= T(0) ? g[i] : alpha * g[i];
                     });
}

template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  Tape<T>& tape = x.tape();
  return tape.record(clamp(x.value(), lo, hi), {x}, [x, lo, hi](Tape<T>& t, const Tensor4<T>& g) {
    const Tensor4<T>& in = x.value();
    Tensor4<T>& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] > lo && in[i] < hi) gx[i] += g[i];
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = a.tape();
  return tape.record(add(a.value(), b.value()), {a, b}, [a, b](Tape<T>& t, const Tensor4<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var<T> scale(Var<T> x, T s) {
  Tape<T>& tape = x.tape();
  return tape.record(scale(x.value(), s), {x}, [x, s](Tape<T>& t, const Tensor4<T>& g) {
    if (t.requires_grad(x)) t.accumulate(x, scale(g, s));
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
  if (parts.size() == 1) return parts.front();
  const Shape first = parts.front().shape();
  std::size_t channels = 0;
  for (const Var<T>& p : parts) {
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      throw ShapeError("concat_channels: " + first.str() + " vs " + s.str());
    channels += s.c;
  }
  Tensor4<T> out({first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  for (std::size_t n = 0; n < first.n; ++n) {
    std::size_t c0 = 0;
    for (const Var<T>& p : parts) {
      const Tensor4<T>& v = p.value();
      std::copy_n(v.plane(n, 0), v.c() * plane, out.plane(n, c0));
      c0 += v.c();
    }
  }
  Tape<T>& tape = parts.front().tape();
  std::vector<Var<T>> saved(parts.begin(), parts.end());
  return tape.record(std::move(out), parts, [saved, plane](Tape<T>& t, const Tensor4<T>& g) {
    for (std::size_t n = 0; n < g.n(); ++n) {
      std::size_t c0 = 0;
      for (const Var<T>& p : saved) {
        const std::size_t pc = p.shape().c;
        if (t.requires_grad(p)) {
          const T* src = g.plane(n, c0);
          T* dst = t.grad_buffer(p).plane(n, 0);
          for (std::size_t j = 0; j < pc * plane; ++j) dst[j] += src[j];
        }
        c0 += pc;
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const Var<T> parts[] = {a, b};
  return concat_channels<T>(std::span<const Var<T>>(parts));
}

namespace {

template <typename T, typename Fwd, typename Adj>
Var<T> linear_map(Var<T> x, Fwd forward, Adj adjoint) {
  Tape<T>& tape = x.tape();
  return tape.record(forward(x.value()), {x}, [x, adjoint](Tape<T>& t, const Tensor4<T>& g) {
    t.accumulate(x, adjoint(g));
  });
}

}  // namespace

template <typename T>
Var<T> dwt_haar2(Var<T> x) {
  return linear_map(
      x, [](const Tensor4<T>& v) { return transforms::dwt_haar2(v); },
      [](const Tensor4<T>& g) {
        // Adjoint of s * H is s * H^T = (s / 0.5) * idwt.
        const double ratio = transforms::testing::haar_scale() / 0.5;
        Tensor4<T> back = transforms::idwt_haar2(g);
        return ratio == 1.0 ? back : scale(back, static_cast<T>(ratio));
      });
}

template <typename T>
Var<T> idwt_haar2(Var<T> x) {
  return linear_map(
      x, [](const Tensor4<T>& v) { return transforms::idwt_haar2(v); },
      [](const Tensor4<T>& g) {
        const double ratio = 0.5 / transforms::testing::haar_scale();
        Tensor4<T> back = transforms::dwt_haar2(g);
        return ratio == 1.0 ? back : scale(back, static_cast<T>(ratio));
      });
}

template <typename T>
Var<T> dct2_blockwise(Var<T> x, std::size_t block) {
  return linear_map(
      x, [block](const Tensor4<T>& v) { return transforms::dct2_blockwise(v, block); },
      [block](const Tensor4<T>& g) { return transforms::idct2_blockwise(g, block); });
}

template <typename T>
Var<T> idct2_blockwise(Var<T> x, std::size_t block) {
  return linear_map(
      x, [block](const Tensor4<T>& v) { return transforms::idct2_blockwise(v, block); },
      [block](const Tensor4<T>& g) { return transforms::dct2_blockwise(g, block); });
}

template <typename T>
Var<T> space_to_depth(Var<T> x, std::size_t r) {
  return linear_map(
      x, [r](const Tensor4<T>& v) { return transforms::space_to_depth(v, r); },
      [r](const Tensor4<T>& g) { return transforms::depth_to_space(g, r); });
}

template <typename T>
Var<T> depth_to_space(Var<T> x, std::size_t r) {
  return linear_map(
      x, [r](const Tensor4<T>& v) { return transforms::depth_to_space(v, r); },
      [r](const Tensor4<T>& g) { return transforms::space_to_depth(g, r); });
}

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& tape = x.tape();
  Tensor4<T> out({1, 1, 1, 1}, static_cast<T>(pdcrn::sum(x.value())));
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, const Tensor4<T>& g) {
    Tensor4<T>& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor4<T>& weights) {
  require_same_shape(x.shape(), weights.shape(), "weighted_sum");
  Tape<T>& tape = x.tape();
  Tensor4<T> out({1, 1, 1, 1}, static_cast<T>(dot(x.value(), weights)));
  return tape.record(std::move(out), {x}, [x, weights](Tape<T>& t, const Tensor4<T>& g) {
    Tensor4<T>& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * weights[i];
  });
}

template <typename T>
Var<T> mse_loss(Var<T> pred, Var<T> target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  const Tensor4<T>& p = pred.value();
  const Tensor4<T>& q = target.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
    acc += d * d;
  }
  const double count = static_cast<double>(p.size());
  Tape<T>& tape = pred.tape();
  return tape.record(Tensor4<T>({1, 1, 1, 1}, static_cast<T>(acc / count)), {pred, target},
                     [pred, target, count](Tape<T>& t, const Tensor4<T>& g) {
                       const Tensor4<T>& pv = pred.value();
                       const Tensor4<T>& tv = target.value();
                       const T k = static_cast<T>(2.0 * static_cast<double>(g[0]) / count);
                       if (t.requires_grad(pred)) {
                         Tensor4<T>& gp = t.grad_buffer(pred);
                         for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += k * (pv[i] - tv[i]);
                       }
                       if (t.requires_grad(target)) {
                         Tensor4<T>& gt = t.grad_buffer(target);
                         for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= k * (pv[i] - tv[i]);
                       }
                     });
}

#define PDCRN_INSTANTIATE(T)                                                                   \
  template Tensor4<T> conv2d(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&,          \
                             const ConvSpec&);                                                 \
  template Tensor4<T> conv_transpose2d(const Tensor4<T>&, const Tensor4<T>&,                   \
                                       const Tensor4<T>&, const ConvSpec&);                    \
  template Tensor4<T> activation(const Tensor4<T>&, Activation);                               \
  template Tensor4<T> clamp(const Tensor4<T>&, T, T);                                          \
  template void kernels::conv_accumulate(const Tensor4<T>&, const Tensor4<T>&,                 \
                                         const ConvSpec&, Tensor4<T>&);                        \
  template void kernels::conv_input_grad(const Tensor4<T>&, const Tensor4<T>&,                 \
                                         const ConvSpec&, Tensor4<T>&);                        \
  template void kernels::conv_weight_grad(const Tensor4<T>&, const Tensor4<T>&,                \
                                          const ConvSpec&, Tensor4<T>&);                       \
  template void kernels::bias_grad(const Tensor4<T>&, Tensor4<T>&);                            \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, const ConvSpec&);                             \
  template Var<T> conv_transpose2d(Var<T>, Var<T>, Var<T>, const ConvSpec&);                   \
  template Var<T> activation(Var<T>, Activation);                                              \
  template Var<T> clamp(Var<T>, T, T);                                                         \
  template Var<T> add(Var<T>, Var<T>);                                                         \
  template Var<T> scale(Var<T>, T);                                                            \
  template Var<T> concat_channels(std::span<const Var<T>>);                                    \
  template Var<T> concat_channels(Var<T>, Var<T>);                                             \
  template Var<T> dwt_haar2(Var<T>);                                                           \
  template Var<T> idwt_haar2(Var<T>);                                                          \
  template Var<T> dct2_blockwise(Var<T>, std::size_t);                                         \
  template Var<T> idct2_blockwise(Var<T>, std::size_t);                                        \
  template Var<T> space_to_depth(Var<T>, std::size_t);                                         \
  template Var<T> depth_to_space(Var<T>, std::size_t);                                         \
  template Var<T> sum(Var<T>);                                                                 \
  template Var<T> weighted_sum(Var<T>, const Tensor4<T>&);                                     \
  template Var<T> mse_loss(Var<T>, Var<T>);

PDCRN_INSTANTIATE(float)
PDCRN_INSTANTIATE(double)

#undef PDCRN_INSTANTIATE

}  // namespace pdcrn
