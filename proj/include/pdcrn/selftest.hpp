#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pdcrn/model.hpp"
#include "pdcrn/training.hpp"

namespace pdcrn {

enum class SelftestLevel { quick, full };

SelftestLevel parse_selftest_level(const std::string& s);

struct SelftestResult {
  std::string name;
  bool passed = false;
  /// Measured quantity and its bound, e.g. "max_err=3e-16 tol=1e-10".
  std::string detail;
  double seconds = 0.0;
};

/// Runs the invariant suites. `full` adds the overfit training runs.
/// `on_result` is called as each case finishes.
std::vector<SelftestResult> run_selftest(
    SelftestLevel level, const std::function<void(const SelftestResult&)>& on_result = {});

/// Synthetic overfit setup: two 64x64 pairs, tiny model, lr 2e-4, full-frame
/// batches of 2. color_shift data for the plain model, blur_h for dual.
struct OverfitSetup {
  ModelConfig model;
  TrainConfig train;
  std::vector<ImagePair> data;
};

OverfitSetup overfit_setup(Variant variant, std::uint64_t seed = 1);

/// Brute-force bounding box (height, width) of the output pixels of
/// pdcb_forward(x) - x that react to a unit impulse at the centre of a random
/// 64-bit input.
std::pair<std::size_t, std::size_t> pdcb_impulse_support(const PdcbConfig& cfg,
                                                         std::size_t channels = 4,
                                                         std::uint64_t seed = 3);

}  // namespace pdcrn
