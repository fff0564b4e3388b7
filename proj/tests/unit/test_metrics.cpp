#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "pdcrn/metrics.hpp"
#include "test_util.hpp"

using namespace pdcrn;
using testutil::randu;

TEST_CASE("psnr examples") {
  std::mt19937_64 rng(1);
  const auto a = randu({1, 3, 16, 16}, rng, 0.0, 0.9);
  CHECK(psnr(a, a) == kPsnrInfinity);
  auto b = a;
  for (double& v : b.data()) v += 0.1;
  CHECK(std::abs(psnr(a, b) - 20.0) <= 1e-9);
  CHECK(std::abs(psnr(a, b, 255.0) - (20.0 + 20.0 * std::log10(255.0))) <= 1e-9);
  CHECK_THROWS_AS(psnr(a, Tensor4<double>({1, 3, 16, 15})), ShapeError);
}

TEST_CASE("psnr matches the direct formula and is symmetric") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto a = randu({2, 3, 13, 17}, rng);
    const auto b = randu({2, 3, 13, 17}, rng);
    CHECK(std::abs(psnr(a, b) - testutil::psnr_oracle(a, b)) <= 1e-9);
    CHECK(psnr(a, b) == psnr(b, a));
  }
}

TEST_CASE("ssim kernel") {
  const auto k = ssim_kernel();
  REQUIRE(k.size() == 11);
  CHECK(std::abs(std::accumulate(k.begin(), k.end(), 0.0) - 1.0) <= 1e-15);
  CHECK(k[5] > k[4]);
  CHECK(k[0] == doctest::Approx(k[10]).epsilon(1e-15));
  CHECK(k[4] / k[5] == doctest::Approx(std::exp(-1.0 / (2 * 1.5 * 1.5))).epsilon(1e-12));
}

TEST_CASE("ssim matches a brute-force window oracle") {
  std::mt19937_64 rng(3);
  for (const Shape s : {Shape{1, 1, 11, 11}, Shape{1, 3, 24, 19}, Shape{2, 3, 32, 32}}) {
    const auto a = randu(s, rng);
    auto b = a;
    std::normal_distribution<double> noise(0.0, 0.1);
    for (double& v : b.data()) v += noise(rng);
    CHECK(std::abs(ssim(a, b) - testutil::ssim_oracle(a, b)) <= 1e-6);
    const auto c = randu(s, rng);
    CHECK(std::abs(ssim(a, c) - testutil::ssim_oracle(a, c)) <= 1e-6);
  }
}

TEST_CASE("ssim of identical and constant images") {
  std::mt19937_64 rng(4);
  const auto a = randu({1, 3, 20, 20}, rng);
  CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-12);

  const double ma = 0.2, mb = 0.8, c1 = 0.01 * 0.01;
  const auto ca = tensor_create<double>({1, 3, 16, 16}, ma);
  const auto cb = tensor_create<double>({1, 3, 16, 16}, mb);
  const double want = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
  CHECK(std::abs(ssim(ca, cb) - want) <= 1e-9);
  CHECK(ssim(ca, cb) < 1.0);
}

TEST_CASE("ssim properties") {
  std::mt19937_64 rng(5);
  const auto a = randu({1, 3, 16, 16}, rng);
  auto b = a;
  b.at(0, 1, 7, 7) += 0.05;
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  CHECK(ssim(a, b) < 1.0);
  CHECK(ssim(a, b) > 0.9);
  CHECK_THROWS_AS(ssim(Tensor4<double>({1, 1, 10, 20}), Tensor4<double>({1, 1, 10, 20})),
                  std::invalid_argument);
  CHECK_THROWS_AS(ssim(a, Tensor4<double>({1, 3, 16, 17})), ShapeError);
}

TEST_CASE("metrics are covariant under a shared spatial shuffle") {
  std::mt19937_64 rng(6);
  const auto a = randu({1, 2, 12, 12}, rng);
  const auto b = randu({1, 2, 12, 12}, rng);
  std::vector<std::size_t> perm(144);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto shuffle = [&](const Tensor4<double>& t) {
    Tensor4<double> out(t.shape());
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 144; ++i) out.plane(0, c)[perm[i]] = t.plane(0, c)[i];
    return out;
  };
  // PSNR ignores spatial arrangement entirely.
  CHECK(psnr(shuffle(a), shuffle(b)) == doctest::Approx(psnr(a, b)).epsilon(1e-14));
  // SSIM is a windowed statistic; the oracle stays in agreement on shuffled inputs.
  CHECK(std::abs(ssim(shuffle(a), shuffle(b)) -
                 testutil::ssim_oracle(shuffle(a), shuffle(b))) <= 1e-6);
}

TEST_CASE("clip_unit and formatting") {
  Tensor4<double> t({1, 1, 1, 3});
  t[0] = -0.2;
  t[1] = 0.4;
  t[2] = 1.7;
  const auto c = clip_unit(t);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.4);
  CHECK(c[2] == 1.0);
  CHECK(format_psnr(kPsnrInfinity) == "inf");
  CHECK(format_psnr(20.0, 2) == "20.00");
}

TEST_CASE("quality report means") {
  QualityReport r;
  r.add({"a", 20.0, 0.5});
  r.add({"b", 30.0, 0.7});
  CHECK(r.mean_psnr == 25.0);
  CHECK(r.mean_ssim == doctest::Approx(0.6));
  r.add({"c", kPsnrInfinity, 1.0});
  CHECK(r.mean_psnr == kPsnrInfinity);
  CHECK(r.images.size() == 3);
}
