#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <png.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "pdcrn/dataio.hpp"
#include "test_util.hpp"

using namespace pdcrn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("pdcrn_dataio_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Writes a PNG in an arbitrary libpng simplified format.
void write_raw_png(const fs::path& p, png_uint_32 format, std::size_t w, std::size_t h) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img), 0x40);
  REQUIRE(png_image_write_to_file(&img, p.c_str(), 0, buf.data(), 0, nullptr) != 0);
}

Tensor4<float> random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  return tensor_cast<float>(testutil::randu({1, 3, h, w}, rng));
}

double correlation(const float* a, const float* b, std::size_t n) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("png round trip quantization") {
  TempDir dir("roundtrip");
  std::mt19937_64 rng(1);
  auto img = random_image(17, 23, rng);
  img[0] = -0.3f;
  img[1] = 1.4f;
  img[2] = 1.0f;
  img[3] = 0.0f;
  const fs::path p = dir.path / "x.png";
  write_image(p, img);
  const auto back = read_image(p);
  REQUIRE(back.shape() == img.shape());
  double worst = 0;
  for (std::size_t i = 0; i < img.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(back[i]) -
                                     std::clamp(static_cast<double>(img[i]), 0.0, 1.0)));
  CHECK(worst <= 1.0 / 510.0 + 1e-7);
  CHECK(back[0] == 0.0f);
  CHECK(back[1] == 1.0f);
  CHECK(back[2] == 1.0f);
  CHECK(back[3] == 0.0f);
  for (float v : back.data()) {
    const float code = v * 255.0f;
    CHECK(std::abs(code - std::round(code)) <= 1e-4f);
  }
}

TEST_CASE("png write rounds half up") {
  TempDir dir("round");
  Tensor4<float> img({1, 3, 1, 2});
  img[0] = 0.5f / 255.0f + 1e-6f;  // just over half a code
  img[1] = 0.49f / 255.0f;
  img[2] = 127.5f / 255.0f + 1e-6f;
  const fs::path p = dir.path / "r.png";
  write_image(p, img);
  const auto back = read_image(p);
  CHECK(back[0] * 255.0f == doctest::Approx(1.0));
  CHECK(back[1] == 0.0f);
  CHECK(back[2] * 255.0f == doctest::Approx(128.0));
}

TEST_CASE("unsupported and unreadable images") {
  TempDir dir("formats");
  write_raw_png(dir.path / "gray.png", PNG_FORMAT_GRAY, 4, 4);
  write_raw_png(dir.path / "rgba.png", PNG_FORMAT_RGBA, 4, 4);
  write_raw_png(dir.path / "deep.png", PNG_FORMAT_LINEAR_RGB, 4, 4);
  write_raw_png(dir.path / "ok.png", PNG_FORMAT_RGB, 4, 4);
  CHECK_THROWS_AS(read_image(dir.path / "gray.png"), UnsupportedFormatError);
  CHECK_THROWS_AS(read_image(dir.path / "rgba.png"), UnsupportedFormatError);
  CHECK_THROWS_AS(read_image(dir.path / "deep.png"), UnsupportedFormatError);
  CHECK(read_image(dir.path / "ok.png").shape() == Shape{1, 3, 4, 4});

  std::ofstream(dir.path / "junk.png") << "not a png";
  CHECK_THROWS_AS(read_image(dir.path / "junk.png"), DataError);
  try {
    read_image(dir.path / "missing.png");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("missing.png") != std::string::npos);
  }
  CHECK_THROWS_AS(write_image(dir.path / "bad.png", Tensor4<float>({1, 1, 4, 4})), ShapeError);
}

TEST_CASE("dataset discovery") {
  TempDir dir("manifest");
  std::mt19937_64 rng(2);
  fs::create_directories(dir.path / "input");
  fs::create_directories(dir.path / "gt");
  for (const char* name : {"c.png", "a.png", "b.png"}) {
    write_image(dir.path / "input" / name, random_image(8, 8, rng));
    write_image(dir.path / "gt" / name, random_image(8, 8, rng));
  }
  write_image(dir.path / "input" / "orphan.png", random_image(8, 8, rng));
  std::ofstream(dir.path / "gt" / "notes.txt") << "ignored";

  const auto m = load_dataset(dir.path);
  REQUIRE(m.entries.size() == 3);
  CHECK(m.entries[0].id == "a");
  CHECK(m.entries[1].id == "b");
  CHECK(m.entries[2].id == "c");
  CHECK(m.warnings.size() >= 1);
  bool orphan_warned = false;
  for (const auto& w : m.warnings) orphan_warned |= w.find("orphan") != std::string::npos;
  CHECK(orphan_warned);
  CHECK(load_dataset(dir.path).entries.size() == 3);

  const auto pairs = load_pairs(m);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[1].id == "b");
  CHECK(pairs[1].input == read_image(dir.path / "input" / "b.png"));
  CHECK(pairs[1].target == read_image(dir.path / "gt" / "b.png"));

  // Shape mismatch inside a pair is rejected at load.
  write_image(dir.path / "gt" / "c.png", random_image(8, 16, rng));
  CHECK_THROWS_AS(load_pairs(load_dataset(dir.path)), DataError);
}

TEST_CASE("dataset errors") {
  TempDir dir("errors");
  CHECK_THROWS_AS(load_dataset(dir.path / "nope"), DataError);
  fs::create_directories(dir.path / "input");
  try {
    load_dataset(dir.path);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("gt") != std::string::npos);
  }
  fs::create_directories(dir.path / "gt");
  CHECK_THROWS_AS(load_dataset(dir.path), EmptyDatasetError);
}

TEST_CASE("png listing skips other files") {
  TempDir dir("list");
  std::mt19937_64 rng(3);
  write_image(dir.path / "b.png", random_image(4, 4, rng));
  write_image(dir.path / "a.png", random_image(4, 4, rng));
  std::ofstream(dir.path / "readme.md") << "x";
  std::vector<std::string> skipped;
  const auto files = list_png_files(dir.path, &skipped);
  REQUIRE(files.size() == 2);
  CHECK(files[0].filename() == "a.png");
  CHECK(skipped.size() == 1);
}

TEST_CASE("sample_patch") {
  std::mt19937_64 rng(4);
  const std::size_t H = 11, W = 11, size = 8;
  ImagePair pair{Tensor4<float>({1, 3, H, W}), Tensor4<float>({1, 3, H, W}), "coords"};
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        pair.input.at(0, c, y, x) = static_cast<float>(y * W + x);
        pair.target.at(0, c, y, x) = static_cast<float>(1000 + y * W + x);
      }

  SUBCASE("full size is the identity") {
    const auto p = sample_patch(pair, H, rng);
    CHECK(p.input == pair.input);
    CHECK(p.target == pair.target);
  }
  SUBCASE("corners are uniform and crops stay aligned") {
    std::size_t counts[4][4] = {};
    const int draws = 10000;
    for (int t = 0; t < draws; ++t) {
      const auto p = sample_patch(pair, size, rng);
      REQUIRE(p.input.shape() == Shape{1, 3, size, size});
      const auto code = static_cast<std::size_t>(p.input.at(0, 0, 0, 0));
      const std::size_t y0 = code / W, x0 = code % W;
      REQUIRE(y0 < 4);
      REQUIRE(x0 < 4);
      ++counts[y0][x0];
      for (std::size_t i = 0; i < size; i += 3)
        for (std::size_t j = 0; j < size; j += 3) {
          CHECK(p.input.at(0, 2, i, j) == static_cast<float>((y0 + i) * W + x0 + j));
          CHECK(p.target.at(0, 1, i, j) == static_cast<float>(1000 + (y0 + i) * W + x0 + j));
        }
    }
    const double expect = draws / 16.0, sigma = std::sqrt(draws * (1.0 / 16) * (15.0 / 16));
    for (auto& row : counts)
      for (std::size_t n : row) CHECK(std::abs(static_cast<double>(n) - expect) <= 3 * sigma);
  }
  SUBCASE("too large") { CHECK_THROWS_AS(sample_patch(pair, 12, rng), std::invalid_argument); }
}

TEST_CASE("box blur spreads a vertical edge only horizontally") {
  const std::size_t n = 32;
  Tensor4<float> edge({1, 3, n, n});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = n / 2; x < n; ++x) edge.at(0, c, y, x) = 1.0f;
  const auto blurred = box_blur_h(edge);
  for (std::size_t x = 0; x < n; ++x) {
    // 1-D box average with edge replication.
    double want = 0;
    for (int k = -4; k <= 4; ++k) {
      const long long xi = std::clamp<long long>(static_cast<long long>(x) + k, 0, n - 1);
      want += xi >= static_cast<long long>(n / 2) ? 1.0 : 0.0;
    }
    want /= 9.0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < n; ++y) CHECK(std::abs(blurred.at(0, c, y, x) - want) <= 1e-6);
  }
  CHECK_THROWS_AS(box_blur_h(edge, 4), std::invalid_argument);
}

TEST_CASE("synthetic pairs") {
  const auto a = synth_pairs(Degradation::color_shift, 3, 32, 9);
  const auto b = synth_pairs(Degradation::color_shift, 3, 32, 9);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].input == b[i].input);
    CHECK(a[i].target == b[i].target);
    CHECK(a[i].input.shape() == Shape{1, 3, 32, 32});
    for (float v : a[i].input.data()) CHECK((v >= 0.0f && v <= 1.0f));
    for (float v : a[i].target.data()) CHECK((v >= 0.0f && v <= 1.0f));
  }
  CHECK(a[0].id == "synth_0000");
  CHECK_FALSE(synth_pairs(Degradation::color_shift, 1, 32, 10)[0].target == a[0].target);

  SUBCASE("color shift without noise is a per-channel gain") {
    const auto clean = synth_pairs(Degradation::color_shift, 2, 32, 11, 0.0);
    for (const auto& p : clean)
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(correlation(p.input.plane(0, c), p.target.plane(0, c), 32 * 32) >= 0.99);
        for (std::size_t i = 0; i < 32 * 32; ++i)
          CHECK(p.input.plane(0, c)[i] ==
                doctest::Approx(kColorShiftGain[c] * p.target.plane(0, c)[i]).epsilon(1e-6));
      }
  }
  SUBCASE("blur without noise is the box blur of the target") {
    const auto blur = synth_pairs(Degradation::blur_h, 2, 32, 12, 0.0);
    for (const auto& p : blur)
      CHECK(testutil::max_diff(tensor_cast<double>(p.input),
                               tensor_cast<double>(box_blur_h(p.target))) <= 1e-6);
  }
  SUBCASE("noise level") {
    const auto noisy = synth_pairs(Degradation::blur_h, 1, 64, 13, 0.05);
    const auto quiet = synth_pairs(Degradation::blur_h, 1, 64, 13, 0.0);
    double ss = 0;
    for (std::size_t i = 0; i < noisy[0].input.size(); ++i) {
      const double d = noisy[0].input[i] - quiet[0].input[i];
      ss += d * d;
    }
    CHECK(std::sqrt(ss / noisy[0].input.size()) == doctest::Approx(0.05).epsilon(0.05));
  }
  CHECK(parse_degradation("blur_h") == Degradation::blur_h);
  CHECK(to_string(Degradation::color_shift) == "color_shift");
  CHECK_THROWS_AS(parse_degradation("fog"), std::invalid_argument);
}
