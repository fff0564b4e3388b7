#include "pdcrn/transforms.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

namespace pdcrn::transforms {

namespace {

std::atomic<double> g_haar_scale{0.5};

template <typename T>
void require_block_divisible(const Tensor4<T>& x, std::size_t block, const char* what) {
  if (block == 0 || x.h() % block != 0 || x.w() % block != 0)
    throw ShapeError(std::string(what) + ": spatial dims of " + x.shape().str() +
                     " not divisible by " + std::to_string(block));
}

// out = m * tile * m^T (forward) or m^T * tile * m (inverse), tile is n x n
// with row stride `stride`.
template <typename T>
void transform_tile(const double* m, std::size_t n, const T* src, T* dst, std::size_t stride,
                    bool inverse, std::vector<double>& tmp) {
  tmp.assign(n * n, 0.0);
  // rows: tmp = M * X  (or M^T * X)
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      const double coeff = inverse ? m[i * n + k] : m[k * n + i];
      const T* row = src + i * stride;
      for (std::size_t j = 0; j < n; ++j) tmp[k * n + j] += coeff * row[j];
    }
  // columns: out = tmp * M^T  (or tmp * M)
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        acc += tmp[k * n + j] * (inverse ? m[j * n + l] : m[l * n + j]);
      dst[k * stride + l] = static_cast<T>(acc);
    }
}

template <typename T>
Tensor4<T> dct_apply(const Tensor4<T>& x, std::size_t block, bool inverse) {
  require_block_divisible(x, block, inverse ? "idct2_blockwise" : "dct2_blockwise");
  if (block == 1) return x;
  const double* m = dct_basis(block);
  Tensor4<T> out(x.shape());
  std::vector<double> tmp;
  const std::size_t w = x.w();
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t ty = 0; ty < x.h(); ty += block)
        for (std::size_t tx = 0; tx < w; tx += block)
          transform_tile(m, block, src + ty * w + tx, dst + ty * w + tx, w, inverse, tmp);
    }
  return out;
}

}  // namespace

const double* dct_basis(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<std::vector<double>>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<std::vector<double>>(n * n);
    for (std::size_t k = 0; k < n; ++k) {
      const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i)
        (*slot)[k * n + i] =
            alpha * std::cos(std::numbers::pi * static_cast<double>((2 * i + 1) * k) /
                             static_cast<double>(2 * n));
    }
  }
  return slot->data();
}

template <typename T>
Tensor4<T> dwt_haar2(const Tensor4<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0)
    throw ShapeError("dwt_haar2: odd spatial dims in " + x.shape().str());
  const std::size_t c = x.c();
  const std::size_t oh = x.h() / 2;
  const std::size_t ow = x.w() / 2;
  const T s = static_cast<T>(g_haar_scale.load(std::memory_order_relaxed));
  Tensor4<T> out({x.n(), 4 * c, oh, ow});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t k = 0; k < c; ++k) {
      const T* src = x.plane(n, k);
      T* ll = out.plane(n, k);
      T* lh = out.plane(n, c + k);
      T* hl = out.plane(n, 2 * c + k);
      T* hh = out.plane(n, 3 * c + k);
      for (std::size_t y = 0; y < oh; ++y) {
        const T* r0 = src + 2 * y * x.w();
        const T* r1 = r0 + x.w();
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const T a = r0[2 * xx], b = r0[2 * xx + 1], cc = r1[2 * xx], d = r1[2 * xx + 1];
          const std::size_t o = y * ow + xx;
          ll[o] = s * (a + b + cc + d);
          lh[o] = s * (a - b + cc - d);
          hl[o] = s * (a + b - cc - d);
          hh[o] = s * (a - b - cc + d);
        }
      }
    }
  return out;
}

template <typename T>
Tensor4<T> idwt_haar2(const Tensor4<T>& y) {
  if (y.c() % 4 != 0)
    throw ShapeError("idwt_haar2: channels of " + y.shape().str() + " not divisible by 4");
  const std::size_t c = y.c() / 4;
  const std::size_t oh = 2 * y.h();
  const std::size_t ow = 2 * y.w();
  const T half = T(0.5);
  Tensor4<T> out({y.n(), c, oh, ow});
  for (std::size_t n = 0; n < y.n(); ++n)
    for (std::size_t k = 0; k < c; ++k) {
      const T* ll = y.plane(n, k);
      const T* lh = y.plane(n, c + k);
      const T* hl = y.plane(n, 2 * c + k);
      const T* hh = y.plane(n, 3 * c + k);
      T* dst = out.plane(n, k);
      for (std::size_t yy = 0; yy < y.h(); ++yy) {
        T* r0 = dst + 2 * yy * ow;
        T* r1 = r0 + ow;
        for (std::size_t xx = 0; xx < y.w(); ++xx) {
          const std::size_t i = yy * y.w() + xx;
          r0[2 * xx] = half * (ll[i] + lh[i] + hl[i] + hh[i]);
          r0[2 * xx + 1] = half * (ll[i] - lh[i] + hl[i] - hh[i]);
          r1[2 * xx] = half * (ll[i] + lh[i] - hl[i] - hh[i]);
          r1[2 * xx + 1] = half * (ll[i] - lh[i] - hl[i] + hh[i]);
        }
      }
    }
  return out;
}

template <typename T>
Tensor4<T> dct2_blockwise(const Tensor4<T>& x, std::size_t block) {
  return dct_apply(x, block, false);
}

template <typename T>
Tensor4<T> idct2_blockwise(const Tensor4<T>& y, std::size_t block) {
  return dct_apply(y, block, true);
}

template <typename T>
Tensor4<T> space_to_depth(const Tensor4<T>& x, std::size_t r) {
  if (r == 0 || x.h() % r != 0 || x.w() % r != 0)
    throw ShapeError("space_to_depth: " + x.shape().str() + " not divisible by factor " +
                     std::to_string(r));
  const std::size_t oh = x.h() / r;
  const std::size_t ow = x.w() / r;
  Tensor4<T> out({x.n(), x.c() * r * r, oh, ow});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t k = 0; k < x.c(); ++k)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          T* dst = out.plane(n, k * r * r + i * r + j);
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx)
              dst[y * ow + xx] = x.at(n, k, y * r + i, xx * r + j);
        }
  return out;
}

template <typename T>
Tensor4<T> depth_to_space(const Tensor4<T>& x, std::size_t r) {
  if (r == 0 || x.c() % (r * r) != 0)
    throw ShapeError("depth_to_space: channels of " + x.shape().str() +
                     " not divisible by " + std::to_string(r * r));
  const std::size_t oc = x.c() / (r * r);
  Tensor4<T> out({x.n(), oc, x.h() * r, x.w() * r});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t k = 0; k < oc; ++k)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          const T* src = x.plane(n, k * r * r + i * r + j);
          for (std::size_t y = 0; y < x.h(); ++y)
            for (std::size_t xx = 0; xx < x.w(); ++xx)
              out.at(n, k, y * r + i, xx * r + j) = src[y * x.w() + xx];
        }
  return out;
}

namespace testing {
void set_haar_scale(double scale) { g_haar_scale.store(scale); }
double haar_scale() { return g_haar_scale.load(); }
}  // namespace testing

#define PDCRN_INSTANTIATE(T)                                             \
  template Tensor4<T> dwt_haar2(const Tensor4<T>&);                      \
  template Tensor4<T> idwt_haar2(const Tensor4<T>&);                     \
  template Tensor4<T> dct2_blockwise(const Tensor4<T>&, std::size_t);    \
  template Tensor4<T> idct2_blockwise(const Tensor4<T>&, std::size_t);   \
  template Tensor4<T> space_to_depth(const Tensor4<T>&, std::size_t);    \
  template Tensor4<T> depth_to_space(const Tensor4<T>&, std::size_t);

PDCRN_INSTANTIATE(float)
PDCRN_INSTANTIATE(double)

#undef PDCRN_INSTANTIATE

}  // namespace pdcrn::transforms
