#include "pdcrn/training.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "pdcrn/metrics.hpp"
#include "pdcrn/neural_ops.hpp"

namespace pdcrn {

template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, double lr,
               const AdamHyper& hyper) {
  require_aligned(params, grads, "adam_step gradients");
  require_aligned(params, state.m, "adam_step first moment");
  require_aligned(params, state.v, "adam_step second moment");
  if (!(lr >= 0.0)) throw std::invalid_argument("adam_step: lr must be >= 0");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double corr1 = 1.0 - std::pow(b1, t);
  const double corr2 = 1.0 - std::pow(b2, t);

  auto& pe = params.entries();
  const auto& ge = grads.entries();
  auto& me = state.m.entries();
  auto& ve = state.v.entries();
  for (std::size_t k = 0; k < pe.size(); ++k) {
    auto p = pe[k].second.data();
    auto g = ge[k].second.data();
    auto m = me[k].second.data();
    auto v = ve[k].second.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / corr1) / (std::sqrt(vi / corr2) + hyper.eps);
      p[i] = static_cast<T>(p[i] - update);
    }
  }
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw std::invalid_argument("lr0 must be >= 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0))
    throw std::invalid_argument("decay_factor must be in (0, 1]");
  if (decay_every == 0) throw std::invalid_argument("decay_every must be >= 1");
  if (batch == 0) throw std::invalid_argument("batch must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw std::invalid_argument("Adam betas must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw std::invalid_argument("Adam eps must be > 0");
}

double lr_schedule(std::uint64_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

template <typename T>
double mse_loss(const Tensor4<T>& pred, const Tensor4<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  if (pred.size() == 0) throw std::invalid_argument("mse_loss of empty tensors");
  const auto a = pred.data();
  const auto b = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

std::string format_history_row(const StepRecord& r) {
  char psnr_buf[40] = "inf";
  if (!std::isinf(r.psnr)) std::snprintf(psnr_buf, sizeof(psnr_buf), "%.17g", r.psnr);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%s", static_cast<unsigned long long>(r.step),
                r.lr, r.loss, psnr_buf);
  return buf;
}

void write_history(std::ostream& os, const std::vector<StepRecord>& history) {
  os << kHistoryHeader << '\n';
  for (const StepRecord& r : history) os << format_history_row(r) << '\n';
}

Trainer::Trainer(std::vector<ImagePair> data, ModelConfig model, TrainConfig train,
                 ParamSet<float> params, std::optional<AdamState<float>> state)
    : data_(std::move(data)),
      model_(std::move(model)),
      train_(train),
      params_(std::move(params)),
      state_(state ? std::move(*state) : AdamState<float>::zeros_like(params_)) {
  if (data_.empty()) throw EmptyDatasetError("training needs at least one image pair");
  model_.validate();
  train_.validate();
  const ParamSet<float> expected = param_init<float>(model_, 0);
  require_aligned(expected, params_, "trainer parameters");
  require_aligned(params_, state_.m, "trainer optimizer state");
  require_aligned(params_, state_.v, "trainer optimizer state");
  for (const ImagePair& p : data_) {
    require_same_shape(p.input.shape(), p.target.shape(), "training pair");
    if (train_.patch == 0) {
      require_same_shape(p.input.shape(), data_.front().input.shape(), "full-frame batch");
      model_.check_input(p.input.shape());
    }
  }
  if (train_.patch != 0) model_.check_input({1, kImageChannels, train_.patch, train_.patch});
}

std::pair<Tensor4<float>, Tensor4<float>> Trainer::sample_batch(std::uint64_t step) const {
  std::seed_seq seq{static_cast<std::uint32_t>(train_.seed), static_cast<std::uint32_t>(train_.seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<Tensor4<float>> inputs, targets;
  for (std::size_t b = 0; b < train_.batch; ++b) {
    const ImagePair& pair = data_[pick(rng)];
    if (train_.patch == 0) {
      inputs.push_back(pair.input);
      targets.push_back(pair.target);
    } else {
      ImagePair patch = sample_patch(pair, train_.patch, rng);
      inputs.push_back(std::move(patch.input));
      targets.push_back(std::move(patch.target));
    }
  }
  return {stack_batch<float>(inputs), stack_batch<float>(targets)};
}

StepRecord Trainer::step() {
  const std::uint64_t t = state_.step;
  const double lr = lr_schedule(t, train_);
  auto [input, target] = sample_batch(t);

  Tape<float> tape;
  BoundParams<float> bound(tape, params_, true);
  Var<float> pred = model_forward(tape.leaf(std::move(input)), bound, model_);
  Var<float> loss = mse_loss(pred, tape.leaf(target));
  const double loss_value = loss.value()[0];
  if (!std::isfinite(loss_value))
    throw NumericalError("non-finite loss at step " + std::to_string(t + 1));
  const double batch_psnr = psnr(clip_unit(pred.value()), target);

  tape.backward(loss);
  adam_step(params_, bound.gradients(), state_, lr, train_.adam);
  return {state_.step, lr, loss_value, batch_psnr};
}

std::vector<StepRecord> Trainer::run(const TrainCallbacks& callbacks) {
  std::vector<StepRecord> history;
  while (state_.step < train_.steps) {
    const StepRecord r = step();
    history.push_back(r);
    if (callbacks.on_step) callbacks.on_step(r);
    if (r.psnr > best_psnr_) {
      best_psnr_ = r.psnr;
      if (callbacks.on_best) callbacks.on_best(r, params_);
    }
    const bool periodic = train_.checkpoint_every != 0 && r.step % train_.checkpoint_every == 0;
    if (callbacks.on_checkpoint && (periodic || r.step == train_.steps))
      callbacks.on_checkpoint(r.step, params_, state_);
  }
  return history;
}

std::vector<StepRecord> train(std::vector<ImagePair> dataset, const ModelConfig& model,
                              const TrainConfig& train_cfg, const TrainCallbacks& callbacks,
                              ParamSet<float>* final_params) {
  Trainer trainer(std::move(dataset), model, train_cfg, param_init<float>(model, train_cfg.seed));
  std::vector<StepRecord> history = trainer.run(callbacks);
  if (final_params) *final_params = trainer.params();
  return history;
}

double evaluate_psnr(const std::vector<ImagePair>& pairs, const ParamSet<float>& params,
                     const ModelConfig& cfg) {
  if (pairs.empty()) throw EmptyDatasetError("evaluate_psnr needs at least one pair");
  double total = 0.0;
  for (const ImagePair& p : pairs)
    total += psnr(clip_unit(model_infer(p.input, params, cfg)), p.target);
  return total / static_cast<double>(pairs.size());
}

template void adam_step(ParamSet<float>&, const ParamSet<float>&, AdamState<float>&, double,
                        const AdamHyper&);
template void adam_step(ParamSet<double>&, const ParamSet<double>&, AdamState<double>&, double,
                        const AdamHyper&);
template double mse_loss(const Tensor4<float>&, const Tensor4<float>&);
template double mse_loss(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace pdcrn
