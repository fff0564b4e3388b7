#include "pdcrn/model.hpp"

#include <numeric>
#include <random>
#include <stdexcept>

namespace pdcrn {

std::string to_string(Variant v) { return v == Variant::plain ? "plain" : "dual_domain"; }

Variant parse_variant(const std::string& s) {
  if (s == "plain") return Variant::plain;
  if (s == "dual" || s == "dual_domain") return Variant::dual_domain;
  throw std::invalid_argument("unknown variant '" + s + "' (expected plain|dual)");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.variant == b.variant && a.levels == b.levels && a.base_channels == b.base_channels &&
         a.s2d_factor == b.s2d_factor && a.blocks_per_level == b.blocks_per_level &&
         a.pdcb == b.pdcb && a.ddb == b.ddb && a.ablation == b.ablation &&
         a.leaky_alpha == b.leaky_alpha;
}

ModelConfig ModelConfig::tiny(Variant variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.base_channels = 8;
  cfg.blocks_per_level = 1;
  if (variant == Variant::dual_domain) cfg.ddb = {{8}, {8}, {4}};
  return cfg;
}

void ModelConfig::validate() const {
  if (levels < kMinLevels || levels > kMaxLevels)
    throw std::invalid_argument("levels must be between " + std::to_string(kMinLevels) +
                                " and " + std::to_string(kMaxLevels) + ", got " +
                                std::to_string(levels));
  if (base_channels == 0) throw std::invalid_argument("base_channels must be >= 1");
  if (s2d_factor == 0) throw std::invalid_argument("s2d_factor must be >= 1");
  if (blocks_per_level == 0) throw std::invalid_argument("blocks_per_level must be >= 1");
  if (!pdcb.empty() && pdcb.size() != levels)
    throw std::invalid_argument("need one PDCB config per level");
  if (!ddb.empty() && ddb.size() != levels)
    throw std::invalid_argument("need one DDB config per level");
  if (!(leaky_alpha >= 0.0)) throw std::invalid_argument("leaky_alpha must be >= 0");
  for (std::size_t l = 1; l <= levels; ++l) {
    pdcb_at(l).validate();
    ddb_at(l).validate();
  }
}

std::size_t ModelConfig::channels_at(std::size_t level) const {
  return base_channels << (level - 1);
}

PdcbConfig ModelConfig::pdcb_at(std::size_t level) const {
  PdcbConfig cfg = pdcb.empty() ? PdcbConfig{} : pdcb.at(level - 1);
  if (!ablation.use_dilation) cfg.dilations.assign(cfg.layers, 1);
  return cfg;
}

DdbConfig ModelConfig::ddb_at(std::size_t level) const {
  return ddb.empty() ? DdbConfig{} : ddb.at(level - 1);
}

std::size_t ModelConfig::spatial_multiple() const {
  std::size_t multiple = s2d_factor << levels;
  if (variant == Variant::dual_domain)
    for (std::size_t l = 1; l <= levels; ++l)
      multiple = std::lcm(multiple, (s2d_factor << l) * ddb_at(l).dct_block);
  return multiple;
}

void ModelConfig::check_input(const Shape& shape) const {
  if (shape.c != kImageChannels)
    throw ShapeError("model input must have 3 channels, got " + shape.str());
  const std::size_t m = spatial_multiple();
  if (shape.h == 0 || shape.w == 0 || shape.h % m != 0 || shape.w % m != 0)
    throw ShapeError("model input " + shape.str() + ": height and width must be multiples of " +
                     std::to_string(m));
}

namespace {

std::string block_name(const std::string& stage, std::size_t level, std::size_t index) {
  return stage + std::to_string(level) + ".b" + std::to_string(index);
}

void declare_level_blocks(ParamLayout& layout, const ModelConfig& cfg, const std::string& stage,
                          std::size_t level) {
  const std::size_t ch = cfg.channels_at(level);
  for (std::size_t j = 0; j < cfg.blocks_per_level; ++j) {
    const std::string name = block_name(stage, level, j);
    if (cfg.variant == Variant::plain)
      declare_pdcb(layout, name, cfg.pdcb_at(level), ch);
    else
      declare_ddb(layout, name, cfg.pdcb_at(level), ch);
  }
}

}  // namespace

ParamLayout model_layout(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t r2 = cfg.s2d_factor * cfg.s2d_factor;
  const std::size_t c1 = cfg.channels_at(1);
  ParamLayout layout;
  layout.add_conv("entry", {c1, kImageChannels * r2, 3, 3}, c1);
  if (cfg.ablation.use_dwt)
    layout.add_conv("down1.mix", {c1, 4 * c1, 3, 3}, c1);
  else
    layout.add_conv("down1.conv", {c1, c1, 3, 3}, c1);
  declare_level_blocks(layout, cfg, "enc", 1);
  for (std::size_t l = 2; l <= cfg.levels; ++l) {
    layout.add_conv("down" + std::to_string(l), {cfg.channels_at(l), cfg.channels_at(l - 1), 3, 3},
                    cfg.channels_at(l));
    declare_level_blocks(layout, cfg, "enc", l);
  }
  for (std::size_t l = cfg.levels - 1; l >= 1; --l) {
    layout.add_conv("up" + std::to_string(l + 1),
                    {cfg.channels_at(l + 1), cfg.channels_at(l), 2, 2}, cfg.channels_at(l));
    declare_level_blocks(layout, cfg, "dec", l);
  }
  if (cfg.ablation.use_dwt)
    layout.add_conv("up1.expand", {4 * c1, c1, 3, 3}, 4 * c1);
  else
    layout.add_conv("up1.conv", {c1, c1, 2, 2}, c1);
  layout.add_conv(kExitConv, {kImageChannels * r2, c1, 3, 3}, kImageChannels * r2,
                  kResidualInitScale);
  return layout;
}

template <typename T>
ParamSet<T> param_init(const ModelConfig& cfg, std::uint64_t seed) {
  const ParamLayout layout = model_layout(cfg);
  std::mt19937_64 rng(seed);
  ParamSet<T> params;
  for (const ParamDecl& decl : layout.entries()) {
    Tensor4<T> t(decl.shape);
    if (decl.role == ParamRole::weight) {
      const double fan_in = static_cast<double>(decl.shape.c * decl.shape.h * decl.shape.w);
      std::normal_distribution<double> dist(0.0, decl.init_scale * std::sqrt(2.0 / fan_in));
      for (T& v : t.data()) v = static_cast<T>(dist(rng));
    }
    params.add(decl.name, std::move(t));
  }
  return params;
}

namespace {

template <typename T>
Var<T> conv_named(Var<T> x, const BoundParams<T>& p, const std::string& name,
                  const ConvSpec& spec) {
  return conv2d(x, p[name + ".w"], p[name + ".b"], spec);
}

template <typename T>
Var<T> level_blocks(Var<T> x, const BoundParams<T>& p, const ModelConfig& cfg,
                    const std::string& stage, std::size_t level, Activation act) {
  const PdcbConfig pdcb = cfg.pdcb_at(level);
  for (std::size_t j = 0; j < cfg.blocks_per_level; ++j) {
    const std::string name = block_name(stage, level, j);
    x = cfg.variant == Variant::plain ? pdcb_forward(x, p, name, pdcb, act)
                                      : ddb_forward(x, p, name, pdcb, cfg.ddb_at(level), act);
  }
  return x;
}

ConvSpec strided(std::size_t in, std::size_t out) { return ConvSpec{in, out, 3, 2, 1, 1}; }
ConvSpec upsample(std::size_t in, std::size_t out) { return ConvSpec{in, out, 2, 2, 1, 0}; }

}  // namespace

template <typename T>
Var<T> model_forward(Var<T> img, const BoundParams<T>& p, const ModelConfig& cfg) {
  cfg.validate();
  cfg.check_input(img.shape());
  const Activation act = Activation::leaky(cfg.leaky_alpha);
  const std::size_t r = cfg.s2d_factor;
  const std::size_t c1 = cfg.channels_at(1);

  Var<T> packed = space_to_depth(img, r);
  Var<T> entry =
      activation(conv_named(packed, p, "entry", ConvSpec::same(kImageChannels * r * r, c1, 3)), act);

  Var<T> x = cfg.ablation.use_dwt
                 ? conv_named(dwt_haar2(entry), p, "down1.mix", ConvSpec::same(4 * c1, c1, 3))
                 : conv_named(entry, p, "down1.conv", strided(c1, c1));
  x = level_blocks(activation(x, act), p, cfg, "enc", 1, act);

  std::vector<Var<T>> skips{x};
  for (std::size_t l = 2; l <= cfg.levels; ++l) {
    x = activation(conv_named(x, p, "down" + std::to_string(l),
                              strided(cfg.channels_at(l - 1), cfg.channels_at(l))),
                   act);
    x = level_blocks(x, p, cfg, "enc", l, act);
    skips.push_back(x);
  }

  for (std::size_t l = cfg.levels - 1; l >= 1; --l) {
    const std::string up = "up" + std::to_string(l + 1);
    x = conv_transpose2d(x, p[up + ".w"], p[up + ".b"],
                         upsample(cfg.channels_at(l + 1), cfg.channels_at(l)));
    x = add(activation(x, act), skips[l - 1]);
    x = level_blocks(x, p, cfg, "dec", l, act);
  }

  x = cfg.ablation.use_dwt
          ? idwt_haar2(conv_named(x, p, "up1.expand", ConvSpec::same(c1, 4 * c1, 3)))
          : conv_transpose2d(x, p["up1.conv.w"], p["up1.conv.b"], upsample(c1, c1));
  x = add(x, entry);
  Var<T> out = conv_named(x, p, kExitConv, ConvSpec::same(c1, kImageChannels * r * r, 3));
  return depth_to_space(out, r);
}

template <typename T>
Tensor4<T> model_infer(const Tensor4<T>& img, const ParamSet<T>& params,
                       const ModelConfig& cfg) {
  Tape<T> tape;
  BoundParams<T> bound(tape, params, false);
  return model_forward(tape.leaf(img), bound, cfg).value();
}

template <typename T>
Tensor4<T> pdcrn_forward(const Tensor4<T>& img, const ParamSet<T>& params,
                         const ModelConfig& cfg) {
  if (cfg.variant != Variant::plain)
    throw std::invalid_argument("pdcrn_forward needs the plain variant");
  return model_infer(img, params, cfg);
}

template <typename T>
Tensor4<T> pdcrn_dd_forward(const Tensor4<T>& img, const ParamSet<T>& params,
                            const ModelConfig& cfg) {
  if (cfg.variant != Variant::dual_domain)
    throw std::invalid_argument("pdcrn_dd_forward needs the dual-domain variant");
  return model_infer(img, params, cfg);
}

#define PDCRN_INSTANTIATE(T)                                                                \
  template ParamSet<T> param_init(const ModelConfig&, std::uint64_t);                       \
  template Var<T> model_forward(Var<T>, const BoundParams<T>&, const ModelConfig&);         \
  template Tensor4<T> model_infer(const Tensor4<T>&, const ParamSet<T>&, const ModelConfig&); \
  template Tensor4<T> pdcrn_forward(const Tensor4<T>&, const ParamSet<T>&,                  \
                                    const ModelConfig&);                                    \
  template Tensor4<T> pdcrn_dd_forward(const Tensor4<T>&, const ParamSet<T>&,               \
                                       const ModelConfig&);

PDCRN_INSTANTIATE(float)
PDCRN_INSTANTIATE(double)

#undef PDCRN_INSTANTIATE

}  // namespace pdcrn
