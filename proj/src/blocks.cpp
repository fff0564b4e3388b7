#include "pdcrn/blocks.hpp"

#include <numeric>
#include <stdexcept>

namespace pdcrn {

void PdcbConfig::validate() const {
  if (layers == 0) throw std::invalid_argument("PDCB needs at least one layer");
  if (dilations.size() != layers)
    throw std::invalid_argument("PDCB: " + std::to_string(dilations.size()) +
                                " dilations for " + std::to_string(layers) + " layers");
  if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("PDCB kernel must be odd");
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    if (dilations[i] == 0) throw std::invalid_argument("PDCB dilation must be >= 1");
    if (i > 0 && dilations[i] > dilations[i - 1])
      throw std::invalid_argument("PDCB dilations must be non-increasing");
  }
}

std::size_t PdcbConfig::growth_for(std::size_t channels) const {
  if (growth != 0) return growth;
  return std::max<std::size_t>(1, channels / 2);
}

std::size_t PdcbConfig::receptive_field() const {
  return 1 + (kernel - 1) * std::accumulate(dilations.begin(), dilations.end(), std::size_t{0});
}

void DdbConfig::validate() const {
  if (dct_block == 0) throw std::invalid_argument("DCT block size must be >= 1");
}

void declare_pdcb(ParamLayout& layout, const std::string& prefix, const PdcbConfig& cfg,
                  std::size_t channels) {
  cfg.validate();
  const std::size_t g = cfg.growth_for(channels);
  std::size_t width = channels;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    layout.add_conv(prefix + ".conv" + std::to_string(i), {g, width, cfg.kernel, cfg.kernel}, g);
    width += g;
  }
  layout.add_conv(prefix + ".fuse", {channels, width, 1, 1}, channels, kResidualInitScale);
}

void declare_itu(ParamLayout& layout, const std::string& prefix, std::size_t channels) {
  layout.add_conv(prefix, {channels, channels, 1, 1}, channels);
}

void declare_ddb(ParamLayout& layout, const std::string& prefix, const PdcbConfig& pdcb,
                 std::size_t channels) {
  declare_pdcb(layout, prefix + ".pdcb", pdcb, channels);
  declare_itu(layout, prefix + ".itu", channels);
  layout.add_conv(prefix + ".fuse", {channels, 2 * channels, 1, 1}, channels,
                  kResidualInitScale);
}

namespace {

template <typename T>
Var<T> conv_named(Var<T> x, const BoundParams<T>& params, const std::string& name,
                  const ConvSpec& spec) {
  return conv2d(x, params[name + ".w"], params[name + ".b"], spec);
}

}  // namespace

template <typename T>
Var<T> pdcb_forward(Var<T> x, const BoundParams<T>& params, const std::string& prefix,
                    const PdcbConfig& cfg, Activation act) {
  cfg.validate();
  const std::size_t channels = x.shape().c;
  const std::size_t g = cfg.growth_for(channels);
  std::vector<Var<T>> features{x};
  std::size_t width = channels;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    Var<T> in = concat_channels<T>(features);
    Var<T> out = conv_named(in, params, prefix + ".conv" + std::to_string(i),
                            ConvSpec::same(width, g, cfg.kernel, cfg.dilations[i]));
    features.push_back(activation(out, act));
    width += g;
  }
  Var<T> fused = conv_named(concat_channels<T>(features), params, prefix + ".fuse",
                            ConvSpec::same(width, channels, 1));
  return add(x, fused);
}

template <typename T>
Var<T> qru(Var<T> x) {
  return clamp(x, static_cast<T>(kQruLow), static_cast<T>(kQruHigh));
}

template <typename T>
Var<T> itu(Var<T> x, const BoundParams<T>& params, const std::string& prefix,
           const DdbConfig& cfg) {
  cfg.validate();
  const std::size_t channels = x.shape().c;
  Var<T> coeffs = dct2_blockwise(qru(x), cfg.dct_block);
  return conv_named(coeffs, params, prefix, ConvSpec::same(channels, channels, 1));
}

template <typename T>
Var<T> ddb_forward(Var<T> x, const BoundParams<T>& params, const std::string& prefix,
                   const PdcbConfig& pdcb, const DdbConfig& cfg, Activation act) {
  const std::size_t channels = x.shape().c;
  Var<T> pixel = pdcb_forward(x, params, prefix + ".pdcb", pdcb, act);
  Var<T> freq = itu(pixel, params, prefix + ".itu", cfg);
  Var<T> fused = conv_named(concat_channels(pixel, freq), params, prefix + ".fuse",
                            ConvSpec::same(2 * channels, channels, 1));
  return add(x, fused);
}

template <typename T>
Tensor4<T> pdcb_forward(const Tensor4<T>& x, const ParamSet<T>& params,
                        const std::string& prefix, const PdcbConfig& cfg, Activation act) {
  Tape<T> tape;
  BoundParams<T> bound(tape, params, false);
  return pdcb_forward(tape.leaf(x), bound, prefix, cfg, act).value();
}

template <typename T>
Tensor4<T> qru(const Tensor4<T>& x) {
  return clamp(x, static_cast<T>(kQruLow), static_cast<T>(kQruHigh));
}

template <typename T>
Tensor4<T> itu(const Tensor4<T>& x, const ParamSet<T>& params, const std::string& prefix,
               const DdbConfig& cfg) {
  Tape<T> tape;
  BoundParams<T> bound(tape, params, false);
  return itu(tape.leaf(x), bound, prefix, cfg).value();
}

template <typename T>
Tensor4<T> ddb_forward(const Tensor4<T>& x, const ParamSet<T>& params,
                       const std::string& prefix, const PdcbConfig& pdcb, const DdbConfig& cfg,
                       Activation act) {
  Tape<T> tape;
  BoundParams<T> bound(tape, params, false);
  return ddb_forward(tape.leaf(x), bound, prefix, pdcb, cfg, act).value();
}

#define PDCRN_INSTANTIATE(T)                                                                   \
  template Var<T> pdcb_forward(Var<T>, const BoundParams<T>&, const std::string&,              \
                               const PdcbConfig&, Activation);                                 \
  template Var<T> qru(Var<T>);                                                                 \
  template Var<T> itu(Var<T>, const BoundParams<T>&, const std::string&, const DdbConfig&);    \
  template Var<T> ddb_forward(Var<T>, const BoundParams<T>&, const std::string&,               \
                              const PdcbConfig&, const DdbConfig&, Activation);                \
  template Tensor4<T> pdcb_forward(const Tensor4<T>&, const ParamSet<T>&, const std::string&,  \
                                   const PdcbConfig&, Activation);                             \
  template Tensor4<T> qru(const Tensor4<T>&);                                                  \
  template Tensor4<T> itu(const Tensor4<T>&, const ParamSet<T>&, const std::string&,           \
                          const DdbConfig&);                                                   \
  template Tensor4<T> ddb_forward(const Tensor4<T>&, const ParamSet<T>&, const std::string&,   \
                                  const PdcbConfig&, const DdbConfig&, Activation);

PDCRN_INSTANTIATE(float)
PDCRN_INSTANTIATE(double)

#undef PDCRN_INSTANTIATE

}  // namespace pdcrn
