#include "pdcrn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace pdcrn {

template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, double peak) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  const double n = static_cast<double>(a.size());
  if (n == 0) throw std::invalid_argument("psnr of empty tensors");
  const auto da = a.data();
  const auto db = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    acc += d * d;
  }
  const double mse = acc / n;
  if (mse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> ssim_kernel() {
  std::vector<double> k(kSsimWindow);
  const double center = (kSsimWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double x = i - center;
    k[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

namespace {

/// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t kw = k.size();
  const std::size_t oh = h - kw + 1;
  const std::size_t ow = w - kw + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t j = 0; j < kw; ++j) acc += k[j] * plane[y * w + x + j];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < kw; ++i) acc += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const std::size_t h = a.h();
  const std::size_t w = a.w();
  if (h < kSsimWindow || w < kSsimWindow)
    throw std::invalid_argument("ssim needs images of at least 11x11, got " + a.shape().str());
  if (a.n() == 0 || a.c() == 0) throw std::invalid_argument("ssim of empty tensors");

  const std::vector<double> k = ssim_kernel();
  const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  const std::size_t hw = h * w;

  double total = 0.0;
  std::vector<double> pa(hw), pb(hw), paa(hw), pbb(hw), pab(hw);
  for (std::size_t n = 0; n < a.n(); ++n)
    for (std::size_t c = 0; c < a.c(); ++c) {
      const T* xa = a.plane(n, c);
      const T* xb = b.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        pa[i] = xa[i];
        pb[i] = xb[i];
        paa[i] = pa[i] * pa[i];
        pbb[i] = pb[i] * pb[i];
        pab[i] = pa[i] * pb[i];
      }
      const auto mu_a = filter_valid(pa, h, w, k);
      const auto mu_b = filter_valid(pb, h, w, k);
      const auto e_aa = filter_valid(paa, h, w, k);
      const auto e_bb = filter_valid(pbb, h, w, k);
      const auto e_ab = filter_valid(pab, h, w, k);
      double plane_sum = 0.0;
      for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        plane_sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
      total += plane_sum / static_cast<double>(mu_a.size());
    }
  return total / static_cast<double>(a.n() * a.c());
}

template <typename T>
Tensor4<T> clip_unit(const Tensor4<T>& x) {
  Tensor4<T> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i], T(0), T(1));
  return out;
}

std::string format_psnr(double db, int digits) {
  if (std::isinf(db) && db > 0) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, db);
  return buf;
}

void QualityReport::add(ImageQuality q) {
  images.push_back(std::move(q));
  double ps = 0.0, ss = 0.0;
  for (const ImageQuality& img : images) {
    ps += img.psnr;
    ss += img.ssim;
  }
  mean_psnr = ps / static_cast<double>(images.size());
  mean_ssim = ss / static_cast<double>(images.size());
}

#define PDCRN_INSTANTIATE(T)                                            \
  template double psnr(const Tensor4<T>&, const Tensor4<T>&, double);   \
  template double ssim(const Tensor4<T>&, const Tensor4<T>&);           \
  template Tensor4<T> clip_unit(const Tensor4<T>&);

PDCRN_INSTANTIATE(float)
PDCRN_INSTANTIATE(double)

#undef PDCRN_INSTANTIATE

}  // namespace pdcrn
