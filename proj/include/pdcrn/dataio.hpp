#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdcrn/tensor.hpp"

namespace pdcrn {

/// I/O failure or invalid dataset content; the message carries the path.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public DataError {
 public:
  using DataError::DataError;
};

class UnsupportedFormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Degraded input and clean target, both (1, 3, h, w) in [0, 1].
struct ImagePair {
  Tensor4<float> input;
  Tensor4<float> target;
  std::string id;
};

struct ManifestEntry {
  std::filesystem::path input;
  std::filesystem::path target;
  std::string id;
};

/// Pairs discovered under `<root>/input` and `<root>/gt`, matched by file
/// name and sorted by id.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;
  std::optional<std::pair<std::size_t, std::size_t>> expected_resolution;
};

inline constexpr const char* kInputDir = "input";
inline constexpr const char* kTargetDir = "gt";

DatasetManifest load_dataset(const std::filesystem::path& root);

/// Decodes every manifest entry and checks the ImagePair invariants.
std::vector<ImagePair> load_pairs(const DatasetManifest& manifest);

/// 8-bit RGB PNG -> (1, 3, h, w), value k maps to k / 255.
Tensor4<float> read_image(const std::filesystem::path& path);

/// (1, 3, h, w) -> 8-bit RGB PNG. Values are clipped to [0, 1] and rounded
/// half-up to the nearest code.
void write_image(const std::filesystem::path& path, const Tensor4<float>& img);

/// Lists the PNG files in `dir` (sorted); other entries are reported in
/// `skipped` when provided.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir,
                                                  std::vector<std::string>* skipped = nullptr);

/// Same uniformly drawn top-left corner applied to input and target.
ImagePair sample_patch(const ImagePair& pair, std::size_t size, std::mt19937_64& rng);

enum class Degradation { blur_h, color_shift };

Degradation parse_degradation(const std::string& s);
std::string to_string(Degradation d);

/// Per-channel gains of the color-shift degradation.
inline constexpr float kColorShiftGain[3] = {0.3f, 0.5f, 0.4f};
inline constexpr std::size_t kBlurWidth = 9;

/// Random smooth clean image of shape (1, 3, size, size) in [0, 1].
Tensor4<float> smooth_image(std::size_t size, std::mt19937_64& rng);

/// Horizontal box blur of odd `width` with edge replication.
Tensor4<float> box_blur_h(const Tensor4<float>& img, std::size_t width = kBlurWidth);

/// Synthetic degraded/clean pairs. blur_h: horizontal 1x9 box blur plus
/// Gaussian noise. color_shift: channel gains (0.3, 0.5, 0.4) plus noise.
/// Results are clipped to [0, 1] and deterministic in `seed`.
std::vector<ImagePair> synth_pairs(Degradation kind, std::size_t count, std::size_t size,
                                   std::uint64_t seed, double noise_sigma = 0.01);

}  // namespace pdcrn
