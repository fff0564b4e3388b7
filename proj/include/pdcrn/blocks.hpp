#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pdcrn/neural_ops.hpp"
#include "pdcrn/params.hpp"

namespace pdcrn {

/// Pyramidal dilated convolution block: densely connected same-padded convs
/// whose dilation shrinks layer by layer, a 1x1 fusion conv back to the
/// block width, and a residual add.
struct PdcbConfig {
  std::size_t layers = 4;
  /// Channels emitted per dense layer; 0 means half the block width (>= 1).
  std::size_t growth = 0;
  std::vector<std::size_t> dilations{8, 4, 2, 1};
  std::size_t kernel = 3;

  /// Throws std::invalid_argument on a non-pyramidal or inconsistent config.
  void validate() const;
  std::size_t growth_for(std::size_t channels) const;
  /// Receptive field width of the stacked convs: 1 + (k-1) * sum(dilations).
  std::size_t receptive_field() const;

  friend bool operator==(const PdcbConfig&, const PdcbConfig&) = default;
};

/// Dual domain block: pixel branch (one PDCB) feeding a DCT branch
/// (clamp -> blockwise DCT -> 1x1 conv), both fused by a 1x1 conv and added
/// back to the block input.
struct DdbConfig {
  std::size_t dct_block = 8;

  void validate() const;

  friend bool operator==(const DdbConfig&, const DdbConfig&) = default;
};

/// Lower/upper clamp bounds applied before the DCT branch.
inline constexpr double kQruLow = -0.5;
inline constexpr double kQruHigh = 0.5;

void declare_pdcb(ParamLayout& layout, const std::string& prefix, const PdcbConfig& cfg,
                  std::size_t channels);
void declare_itu(ParamLayout& layout, const std::string& prefix, std::size_t channels);
void declare_ddb(ParamLayout& layout, const std::string& prefix, const PdcbConfig& pdcb,
                 std::size_t channels);

template <typename T>
Var<T> pdcb_forward(Var<T> x, const BoundParams<T>& params, const std::string& prefix,
                    const PdcbConfig& cfg, Activation act = Activation::leaky());

template <typename T>
Var<T> qru(Var<T> x);

/// 1x1 conv over the blockwise DCT of qru(x).
template <typename T>
Var<T> itu(Var<T> x, const BoundParams<T>& params, const std::string& prefix,
           const DdbConfig& cfg);

template <typename T>
Var<T> ddb_forward(Var<T> x, const BoundParams<T>& params, const std::string& prefix,
                   const PdcbConfig& pdcb, const DdbConfig& cfg,
                   Activation act = Activation::leaky());

// Tape-free conveniences for inference and tests.
template <typename T>
Tensor4<T> pdcb_forward(const Tensor4<T>& x, const ParamSet<T>& params,
                        const std::string& prefix, const PdcbConfig& cfg,
                        Activation act = Activation::leaky());
template <typename T>
Tensor4<T> qru(const Tensor4<T>& x);
template <typename T>
Tensor4<T> itu(const Tensor4<T>& x, const ParamSet<T>& params, const std::string& prefix,
               const DdbConfig& cfg);
template <typename T>
Tensor4<T> ddb_forward(const Tensor4<T>& x, const ParamSet<T>& params,
                       const std::string& prefix, const PdcbConfig& pdcb, const DdbConfig& cfg,
                       Activation act = Activation::leaky());

}  // namespace pdcrn
