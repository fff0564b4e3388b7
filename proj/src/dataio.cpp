#include "pdcrn/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace pdcrn {

namespace fs = std::filesystem;

namespace {

bool has_png_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

}  // namespace

std::vector<fs::path> list_png_files(const fs::path& dir, std::vector<std::string>* skipped) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (has_png_extension(entry.path()))
      files.push_back(entry.path());
    else if (skipped)
      skipped->push_back("skipping non-PNG file " + entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

DatasetManifest load_dataset(const fs::path& root) {
  DatasetManifest manifest;
  manifest.root = root;
  const fs::path input_dir = root / kInputDir;
  const fs::path target_dir = root / kTargetDir;
  for (const fs::path& d : {input_dir, target_dir}) {
    std::error_code ec;
    if (!fs::is_directory(d, ec)) throw DataError("missing dataset directory: " + d.string());
  }

  std::map<std::string, fs::path> inputs;
  std::map<std::string, fs::path> targets;
  for (const fs::path& p : list_png_files(input_dir, &manifest.warnings))
    inputs.emplace(p.filename().string(), p);
  for (const fs::path& p : list_png_files(target_dir, &manifest.warnings))
    targets.emplace(p.filename().string(), p);

  for (const auto& [name, path] : inputs) {
    auto it = targets.find(name);
    if (it == targets.end()) {
      manifest.warnings.push_back("no ground truth for " + path.string());
      continue;
    }
    manifest.entries.push_back({path, it->second, path.stem().string()});
  }
  for (const auto& [name, path] : targets)
    if (!inputs.contains(name)) manifest.warnings.push_back("no input for " + path.string());

  if (manifest.entries.empty()) throw EmptyDatasetError("no matched pairs under " + root.string());
  return manifest;
}

std::vector<ImagePair> load_pairs(const DatasetManifest& manifest) {
  std::vector<ImagePair> pairs;
  pairs.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    ImagePair pair{read_image(e.input), read_image(e.target), e.id};
    if (pair.input.shape() != pair.target.shape())
      throw DataError("size mismatch for pair " + e.id + ": " + pair.input.shape().str() +
                      " vs " + pair.target.shape().str());
    if (manifest.expected_resolution) {
      const auto [h, w] = *manifest.expected_resolution;
      if (pair.input.h() != h || pair.input.w() != w)
        throw DataError("unexpected resolution for " + e.input.string());
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

Tensor4<float> read_image(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError("cannot decode " + path.string() + ": " + image.message);

  const auto format = image.format;
  if ((format & PNG_FORMAT_FLAG_LINEAR) || !(format & PNG_FORMAT_FLAG_COLOR) ||
      (format & PNG_FORMAT_FLAG_ALPHA) || (format & PNG_FORMAT_FLAG_COLORMAP)) {
    png_image_free(&image);
    throw UnsupportedFormatError("unsupported PNG format in " + path.string() +
                                 " (need 8-bit RGB without alpha)");
  }
  image.format = PNG_FORMAT_RGB;
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr))
    throw DataError("cannot decode " + path.string() + ": " + image.message);

  Tensor4<float> img({1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(0, c, y, x) = static_cast<float>(buffer[(y * w + x) * 3 + c]) / 255.0f;
  return img;
}

void write_image(const fs::path& path, const Tensor4<float>& img) {
  if (img.n() != 1 || img.c() != 3)
    throw ShapeError("write_image expects (1,3,h,w), got " + img.shape().str());
  const std::size_t h = img.h();
  const std::size_t w = img.w();
  std::vector<png_byte> buffer(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float v = img.at(0, c, y, x);
        v = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
        buffer[(y * w + x) * 3 + c] =
            static_cast<png_byte>(std::floor(static_cast<double>(v) * 255.0 + 0.5));
      }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw DataError("cannot write " + path.string() + ": " + image.message);
}

ImagePair sample_patch(const ImagePair& pair, std::size_t size, std::mt19937_64& rng) {
  const std::size_t h = pair.input.h();
  const std::size_t w = pair.input.w();
  if (size == 0 || size > h || size > w)
    throw std::invalid_argument("patch size " + std::to_string(size) + " does not fit " +
                                pair.input.shape().str());
  std::uniform_int_distribution<std::size_t> pick_y(0, h - size);
  std::uniform_int_distribution<std::size_t> pick_x(0, w - size);
  const std::size_t top = pick_y(rng);
  const std::size_t left = pick_x(rng);
  return {crop_spatial(pair.input, top, left, size, size),
          crop_spatial(pair.target, top, left, size, size), pair.id};
}

Degradation parse_degradation(const std::string& s) {
  if (s == "blur_h") return Degradation::blur_h;
  if (s == "color_shift") return Degradation::color_shift;
  throw std::invalid_argument("unknown degradation '" + s + "' (expected blur_h|color_shift)");
}

std::string to_string(Degradation d) {
  return d == Degradation::blur_h ? "blur_h" : "color_shift";
}

Tensor4<float> smooth_image(std::size_t size, std::mt19937_64& rng) {
  // A few low-frequency plane waves per channel around mid grey.
  constexpr int kWaves = 4;
  std::uniform_real_distribution<double> freq(0.5, 3.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.05, 0.1);
  std::uniform_real_distribution<double> offset(0.35, 0.65);

  Tensor4<float> img({1, 3, size, size});
  const double n = static_cast<double>(size);
  for (std::size_t c = 0; c < 3; ++c) {
    double fx[kWaves], fy[kWaves], phase[kWaves], a[kWaves];
    for (int k = 0; k < kWaves; ++k) {
      const double f = freq(rng), theta = angle(rng);
      fx[k] = f * std::cos(theta);
      fy[k] = f * std::sin(theta);
      phase[k] = angle(rng);
      a[k] = amp(rng);
    }
    const double base = offset(rng);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        double v = base;
        for (int k = 0; k < kWaves; ++k)
          v += a[k] * std::sin(2.0 * std::numbers::pi * (fx[k] * x + fy[k] * y) / n + phase[k]);
        img.at(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return img;
}

Tensor4<float> box_blur_h(const Tensor4<float>& img, std::size_t width) {
  if (width == 0 || width % 2 == 0) throw std::invalid_argument("blur width must be odd");
  const long long half = static_cast<long long>(width / 2);
  const long long w = static_cast<long long>(img.w());
  Tensor4<float> out(img.shape());
  for (std::size_t n = 0; n < img.n(); ++n)
    for (std::size_t c = 0; c < img.c(); ++c)
      for (std::size_t y = 0; y < img.h(); ++y)
        for (long long x = 0; x < w; ++x) {
          double acc = 0.0;
          for (long long k = -half; k <= half; ++k)
            acc += img.at(n, c, y, static_cast<std::size_t>(std::clamp(x + k, 0LL, w - 1)));
          out.at(n, c, y, static_cast<std::size_t>(x)) = static_cast<float>(acc / width);
        }
  return out;
}

std::vector<ImagePair> synth_pairs(Degradation kind, std::size_t count, std::size_t size,
                                   std::uint64_t seed, double noise_sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<ImagePair> pairs;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor4<float> clean = smooth_image(size, rng);
    Tensor4<float> degraded = kind == Degradation::blur_h ? box_blur_h(clean) : clean;
    for (std::size_t c = 0; c < 3; ++c) {
      float* plane = degraded.plane(0, c);
      const float gain = kind == Degradation::color_shift ? kColorShiftGain[c] : 1.0f;
      for (std::size_t j = 0; j < size * size; ++j) {
        const double v = gain * plane[j] + noise_sigma * noise(rng);
        plane[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04zu", i);
    pairs.push_back({std::move(degraded), std::move(clean), id});
  }
  return pairs;
}

}  // namespace pdcrn
