#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pdcrn/blocks.hpp"
#include "pdcrn/transforms.hpp"
#include "test_util.hpp"

using namespace pdcrn;
using testutil::randn;

namespace {

Tensor4<double> leaky(Tensor4<double> t) {
  for (double& v : t.data()) v = v >= 0 ? v : 0.2 * v;
  return t;
}

// PDCB written out from its definition with the reference conv.
Tensor4<double> pdcb_oracle(const Tensor4<double>& x, const ParamSet<double>& p,
                            const std::string& prefix, const PdcbConfig& cfg) {
  Tensor4<double> cat = x;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string name = prefix + ".conv" + std::to_string(i);
    const std::size_t d = cfg.dilations[i];
    const auto out = testutil::naive_conv2d(cat, p.get(name + ".w"), p.get(name + ".b"), 1, d,
                                            d * (cfg.kernel / 2));
    cat = concat_channels(cat, leaky(out));
  }
  return add(x, testutil::naive_conv2d(cat, p.get(prefix + ".fuse.w"), p.get(prefix + ".fuse.b"),
                                       1, 1, 0));
}

// Bounding box of output pixels that change when one input pixel moves.
std::pair<std::size_t, std::size_t> impulse_box(const PdcbConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamLayout layout;
  declare_pdcb(layout, "p", cfg, 4);
  const auto params = testutil::random_params(layout, rng);
  const std::size_t side = 71, mid = 35;
  const auto x = randn({1, 4, side, side}, rng);
  auto xp = x;
  xp.at(0, 2, mid, mid) += 0.5;
  const auto r0 = sub(pdcb_forward(x, params, "p", cfg), x);
  const auto r1 = sub(pdcb_forward(xp, params, "p", cfg), xp);
  std::size_t top = side, bottom = 0, left = side, right = 0;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j)
        if (r0.at(0, c, i, j) != r1.at(0, c, i, j)) {
          top = std::min(top, i);
          bottom = std::max(bottom, i);
          left = std::min(left, j);
          right = std::max(right, j);
        }
  return {bottom - top + 1, right - left + 1};
}

}  // namespace

TEST_CASE("pdcb config validation") {
  PdcbConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.receptive_field() == 31);
  CHECK(cfg.growth_for(16) == 8);
  CHECK(cfg.growth_for(1) == 1);
  cfg.dilations = {1, 2, 4, 8};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.dilations = {8, 4, 2};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.dilations = {4, 4, 1, 1};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("pdcb matches a layer-by-layer oracle") {
  std::mt19937_64 rng(1);
  for (const PdcbConfig& cfg : {PdcbConfig{}, PdcbConfig{3, 2, {3, 2, 1}, 3}}) {
    ParamLayout layout;
    declare_pdcb(layout, "blk", cfg, 6);
    const auto params = testutil::random_params(layout, rng);
    const auto x = randn({2, 6, 20, 18}, rng);
    const auto y = pdcb_forward(x, params, "blk", cfg);
    CHECK(y.shape() == x.shape());
    CHECK(testutil::max_diff(y, pdcb_oracle(x, params, "blk", cfg)) <= 1e-12);
  }
}

TEST_CASE("blocks with zeroed branches are exact identities") {
  std::mt19937_64 rng(2);
  ParamLayout layout;
  declare_ddb(layout, "d", PdcbConfig{}, 4);
  const auto zero = testutil::zero_params(layout);
  const auto x = randn({2, 4, 16, 16}, rng);
  CHECK(pdcb_forward(x, zero, "d.pdcb", PdcbConfig{}) == x);
  CHECK(ddb_forward(x, zero, "d", PdcbConfig{}, DdbConfig{}) == x);

  // Only the DDB fusion zeroed: the rest may be anything.
  auto p = testutil::random_params(layout, rng);
  p.get("d.fuse.w") = Tensor4<double>(p.get("d.fuse.w").shape());
  p.get("d.fuse.b") = Tensor4<double>(p.get("d.fuse.b").shape());
  CHECK(ddb_forward(x, p, "d", PdcbConfig{}, DdbConfig{}) == x);
}

TEST_CASE("pdcb impulse support follows the dilation pyramid") {
  PdcbConfig flat;
  flat.dilations = {1, 1, 1, 1};
  for (std::uint64_t seed : {3u, 4u}) {
    CHECK(impulse_box(PdcbConfig{}, seed) == std::pair<std::size_t, std::size_t>{31, 31});
    CHECK(impulse_box(flat, seed) == std::pair<std::size_t, std::size_t>{9, 9});
  }
  CHECK(impulse_box(PdcbConfig{3, 0, {4, 2, 1}, 3}, 5) ==
        std::pair<std::size_t, std::size_t>{15, 15});
}

TEST_CASE("dense connectivity: cutting the reads of a layer removes its influence") {
  std::mt19937_64 rng(6);
  const PdcbConfig cfg;
  const std::size_t c = 4, g = cfg.growth_for(c);
  ParamLayout layout;
  declare_pdcb(layout, "p", cfg, c);
  auto params = testutil::random_params(layout, rng);
  const auto x = randn({1, c, 12, 12}, rng);

  // Layer j = 1 writes channels [c + g, c + 2g) of the concatenation.
  const std::size_t j = 1, lo = c + j * g, hi = lo + g;
  for (std::size_t i = j + 1; i < cfg.layers; ++i) {
    auto& w = params.get("p.conv" + std::to_string(i) + ".w");
    for (std::size_t o = 0; o < w.n(); ++o)
      for (std::size_t k = lo; k < hi; ++k)
        for (std::size_t u = 0; u < w.h(); ++u)
          for (std::size_t v = 0; v < w.w(); ++v) w.at(o, k, u, v) = 0.0;
  }
  auto& fw = params.get("p.fuse.w");
  for (std::size_t o = 0; o < fw.n(); ++o)
    for (std::size_t k = lo; k < hi; ++k) fw.at(o, k, 0, 0) = 0.0;

  const auto base = pdcb_forward(x, params, "p", cfg);
  // Perturbing layer j's own weights changes only its activation, which nothing reads now.
  auto moved = params;
  for (double& v : moved.get("p.conv1.w").data()) v += 0.7;
  for (double& v : moved.get("p.conv1.b").data()) v -= 0.3;
  CHECK(pdcb_forward(x, moved, "p", cfg) == base);

  // Control: the same perturbation with the reads intact does change the output.
  auto full = testutil::random_params(layout, rng);
  auto full_moved = full;
  for (double& v : full_moved.get("p.conv1.w").data()) v += 0.7;
  CHECK(testutil::max_diff(pdcb_forward(x, full, "p", cfg),
                           pdcb_forward(x, full_moved, "p", cfg)) > 1e-3);
}

TEST_CASE("qru clamps to the half-unit interval") {
  Tensor4<double> x({1, 1, 1, 4});
  x[0] = 0.7;
  x[1] = -0.6;
  x[2] = 0.25;
  x[3] = -0.5;
  const auto y = qru(x);
  CHECK(y[0] == 0.5);
  CHECK(y[1] == -0.5);
  CHECK(y[2] == 0.25);
  CHECK(y[3] == -0.5);
}

TEST_CASE("itu examples") {
  std::mt19937_64 rng(7);
  ParamLayout layout;
  declare_itu(layout, "t", 3);
  auto ident = testutil::zero_params(layout);
  for (std::size_t k = 0; k < 3; ++k) ident.get("t.w").at(k, k, 0, 0) = 1.0;

  SUBCASE("constant feature gives DC = 8v") {
    const double v = 0.3;
    const auto x = tensor_create<double>({1, 3, 16, 16}, v);
    const auto y = itu(x, ident, "t", DdbConfig{8});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
          const double want = (i % 8 == 0 && j % 8 == 0) ? 8 * v : 0.0;
          CHECK(std::abs(y.at(0, c, i, j) - want) <= 1e-14);
        }
  }
  SUBCASE("block 1 with identity mixing is qru") {
    const auto x = randn({1, 3, 5, 7}, rng);
    CHECK(itu(x, ident, "t", DdbConfig{1}) == qru(x));
  }
  SUBCASE("dct stage preserves energy of the clamped input") {
    const auto x = randn({2, 3, 16, 8}, rng);
    const auto q = qru(x);
    const double e = squared_norm(q);
    CHECK(std::abs(squared_norm(transforms::dct2_blockwise(q, 8)) - e) <= 1e-12 * e);
  }
  SUBCASE("indivisible size is a shape error") {
    CHECK_THROWS_AS(itu(randn({1, 3, 12, 16}, rng), ident, "t", DdbConfig{8}), ShapeError);
  }
}

TEST_CASE("ddb matches its wiring") {
  std::mt19937_64 rng(8);
  const PdcbConfig pc;
  ParamLayout layout;
  declare_ddb(layout, "d", pc, 4);
  const auto p = testutil::random_params(layout, rng);
  const auto x = randn({1, 4, 16, 16}, rng);
  const auto pixel = pdcb_oracle(x, p, "d.pdcb", pc);
  const auto freq =
      testutil::naive_conv2d(transforms::dct2_blockwise(qru(pixel), 8), p.get("d.itu.w"),
                             p.get("d.itu.b"), 1, 1, 0);
  const auto want = add(x, testutil::naive_conv2d(concat_channels(pixel, freq), p.get("d.fuse.w"),
                                                  p.get("d.fuse.b"), 1, 1, 0));
  const auto got = ddb_forward(x, p, "d", pc, DdbConfig{});
  CHECK(got.shape() == x.shape());
  CHECK(testutil::max_diff(got, want) <= 1e-12);
}

TEST_CASE("block gradients match finite differences") {
  std::mt19937_64 rng(9);
  const PdcbConfig pc{4, 0, {4, 2, 1, 1}, 3};
  ParamLayout layout;
  declare_ddb(layout, "d", pc, 4);
  const auto p = testutil::random_params(layout, rng);
  const auto x0 = randn({1, 4, 8, 8}, rng, 0.5);
  const auto y = randn({1, 4, 8, 8}, rng);

  auto pdcb_loss = [&](Tape<double>& t, Var<double> v) {
    BoundParams<double> b(t, p, false);
    return weighted_sum(pdcb_forward(v, b, "d.pdcb", pc), y);
  };
  CHECK(grad_check<double>(pdcb_loss, x0).max_rel_error <= 1e-4);

  auto ddb_loss = [&](Tape<double>& t, Var<double> v) {
    BoundParams<double> b(t, p, false);
    return weighted_sum(ddb_forward(v, b, "d", pc, DdbConfig{4}), y);
  };
  CHECK(grad_check<double>(ddb_loss, x0).max_rel_error <= 1e-4);

  // w.r.t. a weight deep inside the DDB
  auto weight_loss = [&](Tape<double>& t, Var<double> w) {
    BoundParams<double> b(t, p, false, {{"d.pdcb.conv2.w", w}});
    return weighted_sum(ddb_forward(t.leaf(x0), b, "d", pc, DdbConfig{4}), y);
  };
  CHECK(grad_check<double>(weight_loss, p.get("d.pdcb.conv2.w")).max_rel_error <= 1e-4);
}
