#pragma once

#include <limits>
#include <string>
#include <vector>

#include "pdcrn/tensor.hpp"

namespace pdcrn {

/// PSNR of identical images.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// 10 log10(peak^2 / MSE) over all elements; +inf when MSE is 0.
template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, double peak = 1.0);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range
/// 1. Averaged over valid window positions, then over channels and batch.
/// Throws std::invalid_argument when h or w is below the window size.
template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b);

/// Elementwise clip to [0, 1].
template <typename T>
Tensor4<T> clip_unit(const Tensor4<T>& x);

/// Normalized 1-D Gaussian taps of the SSIM window.
std::vector<double> ssim_kernel();

/// "inf" for the sentinel, otherwise fixed with `digits` decimals.
std::string format_psnr(double db, int digits = 4);

struct ImageQuality {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct QualityReport {
  std::vector<ImageQuality> images;
  /// Mean PSNR is +inf if any image is identical to its reference.
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  void add(ImageQuality q);
};

}  // namespace pdcrn
