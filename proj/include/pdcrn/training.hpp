#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdcrn/dataio.hpp"
#include "pdcrn/model.hpp"
#include "pdcrn/params.hpp"

namespace pdcrn {

/// Raised when the loss or an update becomes NaN or infinite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

/// First/second moments aligned with a ParamSet, and the number of steps taken.
template <typename T>
struct AdamState {
  ParamSet<T> m;
  ParamSet<T> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParamSet<T>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update in place. Moments are accumulated in T; the
/// bias corrections and the step arithmetic use double.
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, double lr,
               const AdamHyper& hyper = {});

/// One "epoch" is one optimizer step on one sampled batch.
struct TrainConfig {
  double lr0 = 2e-4;
  double decay_factor = 0.5;
  std::uint64_t decay_every = 10000;
  std::uint64_t steps = 1000;
  std::size_t batch = 1;
  /// Square patch side; 0 trains on full frames.
  std::size_t patch = 0;
  std::uint64_t seed = 0;
  /// 0 disables periodic checkpoints.
  std::uint64_t checkpoint_every = 500;
  AdamHyper adam;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// lr0 * decay_factor ^ floor(epoch / decay_every).
double lr_schedule(std::uint64_t epoch, const TrainConfig& cfg);

/// Mean squared difference over every element (double accumulation).
template <typename T>
double mse_loss(const Tensor4<T>& pred, const Tensor4<T>& target);

struct StepRecord {
  /// Steps completed after this record (1-based).
  std::uint64_t step = 0;
  double lr = 0.0;
  /// Batch loss before the update.
  double loss = 0.0;
  /// Batch PSNR of the clipped prediction before the update.
  double psnr = 0.0;
};

inline constexpr const char* kHistoryHeader = "step,lr,loss,psnr";

/// One CSV line (no newline), with round-trip precision.
std::string format_history_row(const StepRecord& r);
void write_history(std::ostream& os, const std::vector<StepRecord>& history);

struct TrainCallbacks {
  std::function<void(const StepRecord&)> on_step;
  /// Fired every `checkpoint_every` steps and at the final step.
  std::function<void(std::uint64_t step, const ParamSet<float>&, const AdamState<float>&)>
      on_checkpoint;
  /// Fired whenever the batch PSNR beats every earlier step.
  std::function<void(const StepRecord&, const ParamSet<float>&)> on_best;
};

/// Step-wise trainer in 32-bit. The batch drawn at step t depends only on
/// (seed, t), so a run resumed from saved parameters and optimizer state
/// reproduces the uninterrupted sequence exactly.
class Trainer {
 public:
  Trainer(std::vector<ImagePair> data, ModelConfig model, TrainConfig train,
          ParamSet<float> params, std::optional<AdamState<float>> state = std::nullopt);

  /// Runs one optimizer step and returns its record.
  StepRecord step();
  /// Steps until `train.steps` have been taken in total.
  std::vector<StepRecord> run(const TrainCallbacks& callbacks = {});

  const ParamSet<float>& params() const { return params_; }
  const AdamState<float>& state() const { return state_; }
  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }

 private:
  std::pair<Tensor4<float>, Tensor4<float>> sample_batch(std::uint64_t step) const;

  std::vector<ImagePair> data_;
  ModelConfig model_;
  TrainConfig train_;
  ParamSet<float> params_;
  AdamState<float> state_;
  double best_psnr_ = -1.0;
};

/// Initializes parameters from `train.seed` and runs a full training.
std::vector<StepRecord> train(std::vector<ImagePair> dataset, const ModelConfig& model,
                              const TrainConfig& train, const TrainCallbacks& callbacks = {},
                              ParamSet<float>* final_params = nullptr);

/// Mean PSNR of clipped full-frame predictions over `pairs`.
double evaluate_psnr(const std::vector<ImagePair>& pairs, const ParamSet<float>& params,
                     const ModelConfig& cfg);

}  // namespace pdcrn
