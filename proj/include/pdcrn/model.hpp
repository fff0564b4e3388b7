#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pdcrn/blocks.hpp"
#include "pdcrn/params.hpp"

namespace pdcrn {

enum class Variant { plain, dual_domain };

std::string to_string(Variant v);
/// Accepts "plain", "dual", "dual_domain".
Variant parse_variant(const std::string& s);

/// Component toggles for the ablation study. Without DWT the wavelet
/// downsample/upsample pair becomes a stride-2 conv / transposed conv; without
/// dilation every PDCB dilation is forced to 1.
struct Ablation {
  bool use_dilation = true;
  bool use_dwt = true;

  friend bool operator==(const Ablation&, const Ablation&) = default;
};

/// Architecture of the encoder-decoder restorer.
///
/// Scales: space-to-depth (factor r) and an entry conv, then encoder level 1
/// after the wavelet downsample, levels 2..L after stride-2 convs. The decoder
/// mirrors it with transposed convs and finally the inverse wavelet. Level l
/// runs at base_channels * 2^(l-1) channels.
struct ModelConfig {
  Variant variant = Variant::plain;
  std::size_t levels = 3;
  std::size_t base_channels = 16;
  std::size_t s2d_factor = 2;
  std::size_t blocks_per_level = 2;
  /// One entry per level; an empty vector means defaults at every level.
  std::vector<PdcbConfig> pdcb;
  std::vector<DdbConfig> ddb;
  Ablation ablation;
  double leaky_alpha = 0.2;

  /// Desk-scale config used by the overfit checks: 8 base channels, one
  /// block per level, and DCT tiles that fit a 64x64 input.
  static ModelConfig tiny(Variant variant);

  void validate() const;

  std::size_t channels_at(std::size_t level) const;
  /// Effective block config for `level` (1-based), ablation applied.
  PdcbConfig pdcb_at(std::size_t level) const;
  DdbConfig ddb_at(std::size_t level) const;
  /// Input height and width must be multiples of this.
  std::size_t spatial_multiple() const;
  /// Throws ShapeError for a (n, 3, h, w) input this config cannot process.
  void check_input(const Shape& shape) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&);
};

inline constexpr std::size_t kImageChannels = 3;
/// Levels the architecture supports (3 is the reference network, 2 a
/// reduced variant for gradient checks).
inline constexpr std::size_t kMinLevels = 2;
inline constexpr std::size_t kMaxLevels = 3;

/// Declarations for every trainable tensor, depth-first in forward order.
ParamLayout model_layout(const ModelConfig& cfg);

/// He-normal weights (std = sqrt(2 / fan_in), fan_in = product of the
/// non-leading weight dims) and zero biases. Residual-branch outputs and the
/// exit conv are scaled by kResidualInitScale. Deterministic in `seed`.
template <typename T>
ParamSet<T> param_init(const ModelConfig& cfg, std::uint64_t seed);

/// Records the full network on `img`'s tape. Output shape equals input shape.
template <typename T>
Var<T> model_forward(Var<T> img, const BoundParams<T>& params, const ModelConfig& cfg);

/// Gradient-free inference for either variant.
template <typename T>
Tensor4<T> model_infer(const Tensor4<T>& img, const ParamSet<T>& params, const ModelConfig& cfg);

/// Inference restricted to the plain variant.
template <typename T>
Tensor4<T> pdcrn_forward(const Tensor4<T>& img, const ParamSet<T>& params,
                         const ModelConfig& cfg);

/// Inference restricted to the dual-domain variant.
template <typename T>
Tensor4<T> pdcrn_dd_forward(const Tensor4<T>& img, const ParamSet<T>& params,
                            const ModelConfig& cfg);

/// Name of the final conv whose weights and bias produce the output image.
inline constexpr const char* kExitConv = "exit";

}  // namespace pdcrn
