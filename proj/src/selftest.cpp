#include "pdcrn/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "pdcrn/metrics.hpp"
#include "pdcrn/transforms.hpp"

namespace pdcrn {

SelftestLevel parse_selftest_level(const std::string& s) {
  if (s == "quick") return SelftestLevel::quick;
  if (s == "full") return SelftestLevel::full;
  throw std::invalid_argument("unknown selftest level '" + s + "' (expected quick|full)");
}

namespace {

using Rng = std::mt19937_64;

Tensor4<double> random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor4<double> t(s);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

ParamSet<double> random_params(const ParamLayout& layout, Rng& rng, double scale = 0.3) {
  ParamSet<double> p;
  for (const ParamDecl& d : layout.entries()) p.add(d.name, random_tensor(d.shape, rng, scale));
  return p;
}

std::string fmt(const char* key, double v, const char* tol_key, double tol) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s=%.3g %s=%.3g", key, v, tol_key, tol);
  return buf;
}

SelftestResult check_transforms_roundtrip() {
  Rng rng(11);
  std::uniform_int_distribution<int> dim(1, 4);
  double err = 0.0, energy = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Shape s{static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng)),
                  16 * static_cast<std::size_t>(dim(rng)), 16 * static_cast<std::size_t>(dim(rng))};
    const Tensor4<double> x = random_tensor(s, rng);
    const double ex = squared_norm(x);
    const Tensor4<double> d = transforms::dwt_haar2(x);
    const Tensor4<double> c = transforms::dct2_blockwise(x, 8);
    err = std::max({err, max_abs_diff(transforms::idwt_haar2(d), x),
                    max_abs_diff(transforms::idct2_blockwise(c, 8), x)});
    energy = std::max({energy, std::abs(squared_norm(d) - ex) / ex,
                       std::abs(squared_norm(c) - ex) / ex});
  }
  const bool ok = err <= 1e-10 && energy <= 1e-10;
  return {"transform_roundtrip", ok,
          fmt("max_err", err, "tol", 1e-10) + " " + fmt("energy_rel", energy, "tol", 1e-10)};
}

SelftestResult check_adjoint() {
  Rng rng(12);
  std::uniform_int_distribution<int> pick(1, 3);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    ConvSpec spec;
    spec.in_ch = pick(rng);
    spec.out_ch = pick(rng);
    spec.kernel = 2 * pick(rng) - 1;
    spec.stride = pick(rng);
    spec.dilation = pick(rng);
    spec.pad = pick(rng) - 1;
    const std::size_t ho = 4 + pick(rng);
    const std::size_t h = spec.transposed_out_size(ho);
    const Tensor4<double> x = random_tensor({2, spec.in_ch, h, h}, rng);
    const Tensor4<double> w = random_tensor({spec.out_ch, spec.in_ch, spec.kernel, spec.kernel}, rng);
    const Tensor4<double> y = random_tensor({2, spec.out_ch, ho, ho}, rng);
    ConvSpec adj = spec;
    std::swap(adj.in_ch, adj.out_ch);
    const double lhs =
        dot(conv2d(x, w, Tensor4<double>({1, spec.out_ch, 1, 1}), spec), y);
    const double rhs =
        dot(x, conv_transpose2d(y, w, Tensor4<double>({1, spec.in_ch, 1, 1}), adj));
    worst = std::max(worst, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-30}));
  }
  return {"conv_adjoint", worst <= 1e-10, fmt("max_rel", worst, "tol", 1e-10)};
}

SelftestResult check_gradients() {
  Rng rng(13);
  double worst = 0.0;
  auto track = [&](const GradCheckResult& r) { worst = std::max(worst, r.max_rel_error); };

  // Strided dilated conv w.r.t. its input.
  {
    const ConvSpec spec{2, 3, 3, 2, 2, 1};
    const Tensor4<double> w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor4<double> b = random_tensor({1, 3, 1, 1}, rng);
    const Tensor4<double> y = random_tensor({1, 3, 3, 3}, rng);
    track(grad_check<double>(
        [&](Tape<double>& t, Var<double> x) {
          return weighted_sum(conv2d(x, t.leaf(w), t.leaf(b), spec), y);
        },
        random_tensor({1, 2, 8, 8}, rng)));
  }
  // Transposed conv w.r.t. its weights.
  {
    const ConvSpec spec{3, 2, 3, 2, 1, 1};
    const Tensor4<double> x = random_tensor({1, 3, 4, 4}, rng);
    const Tensor4<double> b = random_tensor({1, 2, 1, 1}, rng);
    const Tensor4<double> y = random_tensor({1, 2, 7, 7}, rng);
    track(grad_check<double>(
        [&](Tape<double>& t, Var<double> w) {
          return weighted_sum(conv_transpose2d(t.leaf(x), w, t.leaf(b), spec), y);
        },
        random_tensor({3, 2, 3, 3}, rng)));
  }
  // PDCB and DDB w.r.t. their input.
  {
    const PdcbConfig pdcb{3, 2, {4, 2, 1}, 3};
    ParamLayout layout;
    declare_ddb(layout, "blk", pdcb, 4);
    const ParamSet<double> params = random_params(layout, rng);
    const Tensor4<double> y = random_tensor({1, 4, 8, 8}, rng);
    track(grad_check<double>(
        [&](Tape<double>& t, Var<double> x) {
          BoundParams<double> p(t, params, false);
          return weighted_sum(pdcb_forward(x, p, "blk.pdcb", pdcb), y);
        },
        random_tensor({1, 4, 8, 8}, rng, 0.2), 1e-5, 64));
    track(grad_check<double>(
        [&](Tape<double>& t, Var<double> x) {
          BoundParams<double> p(t, params, false);
          return weighted_sum(ddb_forward(x, p, "blk", pdcb, DdbConfig{4}), y);
        },
        random_tensor({1, 4, 8, 8}, rng, 0.1), 1e-5, 64));
  }
  return {"gradient_check", worst <= 1e-4, fmt("max_rel", worst, "tol", 1e-4)};
}

SelftestResult check_receptive_field() {
  const auto [h1, w1] = pdcb_impulse_support(PdcbConfig{});
  PdcbConfig flat;
  flat.dilations.assign(flat.layers, 1);
  const auto [h2, w2] = pdcb_impulse_support(flat);
  const bool ok = h1 == 31 && w1 == 31 && h2 == 9 && w2 == 9;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "pyramid=%zux%zu flat=%zux%zu expect=31x31,9x9", h1, w1, h2, w2);
  return {"receptive_field", ok, buf};
}

SelftestResult check_zero_identity() {
  Rng rng(14);
  double worst = 0.0;
  for (Variant v : {Variant::plain, Variant::dual_domain}) {
    const ModelConfig cfg = ModelConfig::tiny(v);
    ParamSet<double> p = param_init<double>(cfg, 5);
    Tensor4<double>& exit_w = p.get(std::string(kExitConv) + ".w");
    exit_w = Tensor4<double>(exit_w.shape());
    const Tensor4<double> img = random_tensor({1, 3, 64, 64}, rng);
    worst = std::max(worst, max_abs(model_infer(img, p, cfg)));
  }
  ParamLayout layout;
  declare_ddb(layout, "blk", PdcbConfig{}, 4);
  ParamSet<double> zero;
  for (const ParamDecl& d : layout.entries()) zero.add(d.name, Tensor4<double>(d.shape));
  const Tensor4<double> x = random_tensor({1, 4, 16, 16}, rng);
  worst = std::max(worst, max_abs_diff(pdcb_forward(x, zero, "blk.pdcb", PdcbConfig{}), x));
  worst = std::max(worst, max_abs_diff(ddb_forward(x, zero, "blk", PdcbConfig{}, DdbConfig{}), x));
  return {"identity_at_zero", worst == 0.0, fmt("max_abs", worst, "expect", 0.0)};
}

SelftestResult check_metrics() {
  Rng rng(15);
  std::uniform_real_distribution<double> u(0.0, 0.9);
  Tensor4<double> a({1, 3, 16, 16});
  for (double& v : a.data()) v = u(rng);
  Tensor4<double> b = a;
  for (double& v : b.data()) v += 0.1;
  const double p_same = psnr(a, a), s_same = ssim(a, a), p_off = psnr(a, b);
  const bool ok = std::isinf(p_same) && std::abs(s_same - 1.0) <= 1e-12 &&
                  std::abs(p_off - 20.0) <= 1e-9;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "psnr_same=%s ssim_same=%.12g psnr_offset=%.9g",
                format_psnr(p_same).c_str(), s_same, p_off);
  return {"metric_sentinels", ok, buf};
}

SelftestResult check_schedule() {
  const TrainConfig cfg;
  const double a = lr_schedule(0, cfg), b = lr_schedule(10000, cfg), c = lr_schedule(20000, cfg);
  const bool ok = std::abs(a - 2e-4) <= 1e-18 && std::abs(b - 1e-4) <= 1e-18 &&
                  std::abs(c - 5e-5) <= 1e-18;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "lr0=%g lr10000=%g lr20000=%g", a, b, c);
  return {"lr_schedule", ok, buf};
}

SelftestResult check_overfit(Variant v, double target) {
  OverfitSetup s = overfit_setup(v);
  ParamSet<float> params;
  train(s.data, s.model, s.train, {}, &params);
  const double p = evaluate_psnr(s.data, params, s.model);
  return {"overfit_" + to_string(v), p >= target, fmt("psnr_db", p, "min", target)};
}

}  // namespace

OverfitSetup overfit_setup(Variant variant, std::uint64_t seed) {
  OverfitSetup s;
  s.model = ModelConfig::tiny(variant);
  s.train.steps = variant == Variant::plain ? 2000 : 3000;
  s.train.batch = 2;
  s.train.seed = seed;
  s.train.checkpoint_every = 0;
  const Degradation kind = variant == Variant::plain ? Degradation::color_shift : Degradation::blur_h;
  s.data = synth_pairs(kind, 2, 64, seed + 100);
  return s;
}

std::pair<std::size_t, std::size_t> pdcb_impulse_support(const PdcbConfig& cfg,
                                                         std::size_t channels,
                                                         std::uint64_t seed) {
  Rng rng(seed);
  ParamLayout layout;
  declare_pdcb(layout, "p", cfg, channels);
  const ParamSet<double> params = random_params(layout, rng);
  const std::size_t side = 2 * cfg.receptive_field() + 1;
  const std::size_t centre = side / 2;
  const Tensor4<double> x = random_tensor({1, channels, side, side}, rng);
  Tensor4<double> xp = x;
  xp.at(0, 0, centre, centre) += 1.0;
  const Tensor4<double> r0 = sub(pdcb_forward(x, params, "p", cfg), x);
  const Tensor4<double> r1 = sub(pdcb_forward(xp, params, "p", cfg), xp);

  std::size_t top = side, bottom = 0, left = side, right = 0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t xx = 0; xx < side; ++xx)
        if (r0.at(0, c, y, xx) != r1.at(0, c, y, xx)) {
          top = std::min(top, y);
          bottom = std::max(bottom, y);
          left = std::min(left, xx);
          right = std::max(right, xx);
        }
  if (top > bottom) return {0, 0};
  return {bottom - top + 1, right - left + 1};
}

std::vector<SelftestResult> run_selftest(
    SelftestLevel level, const std::function<void(const SelftestResult&)>& on_result) {
  std::vector<std::function<SelftestResult()>> cases = {
      check_transforms_roundtrip, check_adjoint,       check_gradients, check_receptive_field,
      check_zero_identity,        check_metrics,       check_schedule};
  if (level == SelftestLevel::full) {
    cases.push_back([] { return check_overfit(Variant::plain, 40.0); });
    cases.push_back([] { return check_overfit(Variant::dual_domain, 38.0); });
  }
  std::vector<SelftestResult> results;
  for (const auto& fn : cases) {
    const auto t0 = std::chrono::steady_clock::now();
    SelftestResult r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.name = "case_" + std::to_string(results.size());
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace pdcrn
