#include "pdcrn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace pdcrn {

std::size_t Shape::count() const {
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  std::size_t total = 1;
  for (std::size_t d : {n, c, h, w}) {
    if (d != 0 && total > kMax / d) throw ShapeError("shape " + str() + " overflows");
    total *= d;
  }
  return total;
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
Tensor4<T> tensor_create(const Shape& shape, T fill) {
  if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0)
    throw ShapeError("tensor_create: zero extent in " + shape.str());
  return Tensor4<T>(shape, fill);
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  Tensor4<T> out({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t plane = a.shape().plane();
  for (std::size_t n = 0; n < a.n(); ++n) {
    if (a.c() > 0) std::memcpy(out.plane(n, 0), a.plane(n, 0), a.c() * plane * sizeof(T));
    if (b.c() > 0) std::memcpy(out.plane(n, a.c()), b.plane(n, 0), b.c() * plane * sizeof(T));
  }
  return out;
}

template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& x, std::size_t first, std::size_t count) {
  if (first + count > x.c())
    throw ShapeError("slice_channels: [" + std::to_string(first) + "," +
                     std::to_string(first + count) + ") outside " + x.shape().str());
  Tensor4<T> out({x.n(), count, x.h(), x.w()});
  if (count == 0) return out;
  for (std::size_t n = 0; n < x.n(); ++n)
    std::memcpy(out.plane(n, 0), x.plane(n, first), count * x.shape().plane() * sizeof(T));
  return out;
}

template <typename T>
Tensor4<T> pad_spatial(const Tensor4<T>& x, std::size_t pad) {
  if (pad == 0) return x;
  const std::size_t ph = x.h() + 2 * pad;
  const std::size_t pw = x.w() + 2 * pad;
  Tensor4<T> out({x.n(), x.c(), ph, pw});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t y = 0; y < x.h(); ++y)
        std::memcpy(dst + (y + pad) * pw + pad, src + y * x.w(), x.w() * sizeof(T));
    }
  return out;
}

namespace {

// Folds an index into [0, size) by mirroring about the edge pixels.
std::size_t reflect_index(std::size_t i, std::size_t size) {
  if (size == 1) return 0;
  const std::size_t period = 2 * (size - 1);
  i %= period;
  return i < size ? i : period - i;
}

}  // namespace

template <typename T>
Tensor4<T> reflect_pad_to(const Tensor4<T>& x, std::size_t h, std::size_t w) {
  if (h < x.h() || w < x.w())
    throw ShapeError("reflect_pad_to: target smaller than " + x.shape().str());
  Tensor4<T> out({x.n(), x.c(), h, w});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = reflect_index(y, x.h());
        for (std::size_t xx = 0; xx < w; ++xx)
          out.at(n, c, y, xx) = x.at(n, c, sy, reflect_index(xx, x.w()));
      }
  return out;
}

template <typename T>
Tensor4<T> crop_spatial(const Tensor4<T>& x, std::size_t top, std::size_t left, std::size_t h,
                        std::size_t w) {
  if (top + h > x.h() || left + w > x.w())
    throw ShapeError("crop_spatial: window exceeds " + x.shape().str());
  Tensor4<T> out({x.n(), x.c(), h, w});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        std::memcpy(out.plane(n, c) + y * w, x.plane(n, c) + (top + y) * x.w() + left,
                    w * sizeof(T));
  return out;
}

template <typename T>
Tensor4<T> stack_batch(std::span<const Tensor4<T>> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  Shape item = items.front().shape();
  std::size_t total = 0;
  for (const auto& t : items) {
    if (t.c() != item.c || t.h() != item.h || t.w() != item.w)
      throw ShapeError("stack_batch: " + t.shape().str() + " vs " + item.str());
    total += t.n();
  }
  Tensor4<T> out({total, item.c, item.h, item.w});
  std::size_t offset = 0;
  for (const auto& t : items) {
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + offset);
    offset += t.size();
  }
  return out;
}

template <typename T>
Tensor4<T> batch_item(const Tensor4<T>& x, std::size_t index) {
  if (index >= x.n()) throw ShapeError("batch_item: index out of range");
  Tensor4<T> out({1, x.c(), x.h(), x.w()});
  const std::size_t stride = out.size();
  std::copy_n(x.data().begin() + index * stride, stride, out.data().begin());
  return out;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor4<T> sub(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor4<T> mul(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor4<T> scale(const Tensor4<T>& a, T s) {
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

template <typename T>
void accumulate(Tensor4<T>& acc, const Tensor4<T>& x) {
  require_same_shape(acc.shape(), x.shape(), "accumulate");
  T* dst = acc.data().data();
  const T* src = x.data().data();
  const std::size_t size = acc.size();
  for (std::size_t i = 0; i < size; ++i) dst[i] += src[i];
}

template <typename T>
double sum(const Tensor4<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += static_cast<double>(v);
  return s;
}

template <typename T>
double dot(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

template <typename T>
double squared_norm(const Tensor4<T>& x) {
  return dot(x, x);
}

template <typename T>
double max_abs(const Tensor4<T>& x) {
  double m = 0.0;
  for (T v : x.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename T>
bool all_finite(const Tensor4<T>& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](T v) { return std::isfinite(v); });
}

#define PDCRN_INSTANTIATE(T)                                                              \
  template Tensor4<T> tensor_create(const Shape&, T);                                     \
  template Tensor4<T> concat_channels(const Tensor4<T>&, const Tensor4<T>&);              \
  template Tensor4<T> slice_channels(const Tensor4<T>&, std::size_t, std::size_t);        \
  template Tensor4<T> pad_spatial(const Tensor4<T>&, std::size_t);                        \
  template Tensor4<T> reflect_pad_to(const Tensor4<T>&, std::size_t, std::size_t);        \
  template Tensor4<T> crop_spatial(const Tensor4<T>&, std::size_t, std::size_t,           \
                                   std::size_t, std::size_t);                             \
  template Tensor4<T> stack_batch(std::span<const Tensor4<T>>);                           \
  template Tensor4<T> batch_item(const Tensor4<T>&, std::size_t);                         \
  template Tensor4<T> add(const Tensor4<T>&, const Tensor4<T>&);                          \
  template Tensor4<T> sub(const Tensor4<T>&, const Tensor4<T>&);                          \
  template Tensor4<T> mul(const Tensor4<T>&, const Tensor4<T>&);                          \
  template Tensor4<T> scale(const Tensor4<T>&, T);                                        \
  template void accumulate(Tensor4<T>&, const Tensor4<T>&);                               \
  template double sum(const Tensor4<T>&);                                                 \
  template double dot(const Tensor4<T>&, const Tensor4<T>&);                              \
  template double squared_norm(const Tensor4<T>&);                                        \
  template double max_abs(const Tensor4<T>&);                                             \
  template double max_abs_diff(const Tensor4<T>&, const Tensor4<T>&);                     \
  template bool all_finite(const Tensor4<T>&);

PDCRN_INSTANTIATE(float)
PDCRN_INSTANTIATE(double)

#undef PDCRN_INSTANTIATE

}  // namespace pdcrn
