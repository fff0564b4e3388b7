// pdcrn: train, restore, evaluate and self-test the restoration networks.
//
// Exit codes: 0 success, 1 self-test failure, 2 configuration or checkpoint
// error, 3 data error, 4 numerical abort.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "pdcrn/checkpoint.hpp"
#include "pdcrn/config_io.hpp"
#include "pdcrn/dataio.hpp"
#include "pdcrn/metrics.hpp"
#include "pdcrn/selftest.hpp"
#include "pdcrn/training.hpp"
#include "pdcrn/transforms.hpp"

namespace fs = std::filesystem;
using namespace pdcrn;

namespace {

enum Exit : int { kOk = 0, kSelftestFailed = 1, kConfig = 2, kData = 3, kNumerical = 4 };

void log_kv(const std::string& line) { std::cout << line << std::endl; }
void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> steps;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> patch;
  std::optional<double> lr;
  std::string resume;
  std::uint64_t log_every = 100;
};

/// RunConfig file: {"model": {...}, "train": {...}, "data": dir, "out": dir}.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data;
  std::string out = "run";
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "model")
      rc.model = model_config_from_json(value);
    else if (key == "train")
      rc.train = train_config_from_json(value);
    else if (key == "data" && value.is_string())
      rc.data = value.get<std::string>();
    else if (key == "out" && value.is_string())
      rc.out = value.get<std::string>();
    else
      throw ConfigError(path + ": unknown or malformed key '" + key + "'");
  }
  return rc;
}

nlohmann::json run_config_json(const RunConfig& rc) {
  return {{"model", to_json(rc.model)}, {"train", to_json(rc.train)}, {"data", rc.data},
          {"out", rc.out}};
}

std::string ckpt_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06llu.bin", static_cast<unsigned long long>(step));
  return buf;
}

int cmd_train(const TrainArgs& a) {
  RunConfig rc;
  try {
    rc = load_run_config(a.config);
    if (!a.variant.empty()) rc.model.variant = parse_variant(a.variant);
    if (!a.data.empty()) rc.data = a.data;
    if (!a.out.empty()) rc.out = a.out;
    if (a.seed) rc.train.seed = *a.seed;
    if (a.steps) rc.train.steps = *a.steps;
    if (a.batch) rc.train.batch = *a.batch;
    if (a.patch) rc.train.patch = *a.patch;
    if (a.lr) rc.train.lr0 = *a.lr;
    rc.model.validate();
    rc.train.validate();
    if (rc.data.empty()) throw ConfigError("no dataset given (--data or \"data\" in config)");
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  }

  std::vector<ImagePair> pairs;
  try {
    const DatasetManifest manifest = load_dataset(rc.data);
    for (const std::string& w : manifest.warnings) warn(w);
    pairs = load_pairs(manifest);
    log_kv("event=dataset root=" + rc.data + " pairs=" + std::to_string(pairs.size()));
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }

  const fs::path out = rc.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    std::cerr << "data error: cannot create output directory " << out << '\n';
    return kData;
  }
  {
    std::ofstream os(out / "run_config.json");
    os << run_config_json(rc).dump(2) << '\n';
  }

  ParamSet<float> params;
  std::optional<AdamState<float>> state;
  if (!a.resume.empty()) {
    try {
      Checkpoint ck = load_checkpoint(a.resume);
      if (!(ck.config == rc.model)) throw ConfigError("checkpoint config differs from run config");
      params = std::move(ck.params);
      state = std::move(ck.adam);
    } catch (const std::exception& e) {
      std::cerr << "config error: cannot resume: " << e.what() << '\n';
      return kConfig;
    }
  } else {
    params = param_init<float>(rc.model, rc.train.seed);
  }

  std::ofstream history(out / "history.csv");
  history << kHistoryHeader << '\n';
  std::optional<ParamSet<float>> best;
  bool best_dirty = false;
  TrainCallbacks cb;
  cb.on_step = [&](const StepRecord& r) {
    history << format_history_row(r) << '\n';
    if (r.step % a.log_every == 0 || r.step == rc.train.steps) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "event=step step=%llu lr=%.6g loss=%.8g psnr=%s",
                    static_cast<unsigned long long>(r.step), r.lr, r.loss,
                    format_psnr(r.psnr, 4).c_str());
      log_kv(buf);
    }
  };
  cb.on_best = [&](const StepRecord&, const ParamSet<float>& p) {
    best = p;
    best_dirty = true;
  };
  cb.on_checkpoint = [&](std::uint64_t step, const ParamSet<float>& p, const AdamState<float>& s) {
    save_checkpoint(out / ckpt_name(step), rc.model, p, &s);
    save_checkpoint(out / "last.bin", rc.model, p, &s);
    if (best && best_dirty) {
      save_checkpoint(out / "best.bin", rc.model, *best);
      best_dirty = false;
    }
    history.flush();
    log_kv("event=checkpoint step=" + std::to_string(step));
  };

  try {
    Trainer trainer(std::move(pairs), rc.model, rc.train, std::move(params), std::move(state));
    trainer.run(cb);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  log_kv("event=done out=" + out.string());
  return kOk;
}

int cmd_restore(const std::string& ckpt_path, const std::string& in, const std::string& out_dir) {
  Checkpoint ck;
  try {
    ck = load_checkpoint(ckpt_path);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kConfig;
  }
  std::vector<fs::path> files;
  try {
    if (fs::is_directory(in)) {
      std::vector<std::string> skipped;
      files = list_png_files(in, &skipped);
      for (const std::string& s : skipped) warn(s);
    } else if (fs::is_regular_file(in)) {
      files.push_back(in);
    } else {
      throw DataError("input not found: " + in);
    }
    fs::create_directories(out_dir);
    const std::size_t m = ck.config.spatial_multiple();
    for (const fs::path& f : files) {
      const Tensor4<float> img = read_image(f);
      const std::size_t h = (img.h() + m - 1) / m * m;
      const std::size_t w = (img.w() + m - 1) / m * m;
      const Tensor4<float> padded = reflect_pad_to(img, h, w);
      const Tensor4<float> pred = model_infer(padded, ck.params, ck.config);
      write_image(fs::path(out_dir) / f.filename(), crop_spatial(pred, 0, 0, img.h(), img.w()));
      log_kv("event=restored file=" + f.filename().string());
    }
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& csv) {
  QualityReport report;
  try {
    std::vector<std::string> skipped;
    const std::vector<fs::path> preds = list_png_files(pred_dir, &skipped);
    for (const std::string& s : skipped) warn(s);
    if (preds.empty()) throw EmptyDatasetError("no PNG files in " + pred_dir);
    for (const fs::path& p : preds) {
      const fs::path g = fs::path(gt_dir) / p.filename();
      if (!fs::exists(g)) throw DataError("no ground truth for " + p.string());
      const Tensor4<float> a = clip_unit(read_image(p));
      const Tensor4<float> b = read_image(g);
      if (a.shape() != b.shape()) throw DataError("size mismatch for " + p.filename().string());
      report.add({p.filename().string(), psnr(a, b), ssim(a, b)});
    }
    if (const auto gts = list_png_files(gt_dir); gts.size() != preds.size())
      throw DataError("prediction and ground-truth file sets differ");
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  std::ofstream os(csv);
  if (!os) {
    std::cerr << "data error: cannot write " << csv << '\n';
    return kData;
  }
  os << "filename,psnr_db,ssim\n";
  char buf[64];
  for (const ImageQuality& q : report.images) {
    std::snprintf(buf, sizeof(buf), "%.10f", q.ssim);
    os << q.name << ',' << format_psnr(q.psnr, 6) << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.mean_ssim);
  log_kv("event=eval images=" + std::to_string(report.images.size()) +
         " mean_psnr_db=" + format_psnr(report.mean_psnr, 6) + " mean_ssim=" + buf +
         " csv=" + csv);
  return kOk;
}

int cmd_selftest(const std::string& level, bool break_haar) {
  if (break_haar) transforms::testing::set_haar_scale(0.55);
  std::size_t failed = 0;
  const auto results = run_selftest(parse_selftest_level(level), [&](const SelftestResult& r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", r.seconds);
    log_kv("case=" + r.name + " status=" + (r.passed ? "pass" : "FAIL") + " seconds=" + buf +
           " " + r.detail);
    if (!r.passed) ++failed;
  });
  log_kv("event=selftest level=" + level + " cases=" + std::to_string(results.size()) +
         " failed=" + std::to_string(failed));
  return failed == 0 ? kOk : kSelftestFailed;
}

int cmd_synth(const std::string& kind, std::size_t count, std::size_t size, std::uint64_t seed,
              double noise, const std::string& out) {
  Degradation d;
  try {
    d = parse_degradation(kind);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  }
  try {
    const fs::path root = out;
    fs::create_directories(root / kInputDir);
    fs::create_directories(root / kTargetDir);
    for (const ImagePair& p : synth_pairs(d, count, size, seed, noise)) {
      write_image(root / kInputDir / (p.id + ".png"), p.input);
      write_image(root / kTargetDir / (p.id + ".png"), p.target);
    }
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  log_kv("event=synth kind=" + kind + " count=" + std::to_string(count) + " out=" + out);
  return kOk;
}

int cmd_bench(const std::string& variant, std::size_t size, std::size_t iters) {
  ModelConfig cfg;
  try {
    cfg = ModelConfig::tiny(parse_variant(variant));
    cfg.check_input({1, kImageChannels, size, size});
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  }
  std::vector<ImagePair> data = synth_pairs(Degradation::blur_h, 1, size, 1);
  const ParamSet<float> params = param_init<float>(cfg, 1);
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  for (std::size_t i = 0; i < iters; ++i) model_infer(data[0].input, params, cfg);
  const double fwd = std::chrono::duration<double, std::milli>(clock::now() - t0).count() / iters;
  TrainConfig tc;
  tc.steps = iters;
  tc.checkpoint_every = 0;
  Trainer trainer(data, cfg, tc, params);
  t0 = clock::now();
  trainer.run();
  const double step = std::chrono::duration<double, std::milli>(clock::now() - t0).count() / iters;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "event=bench variant=%s size=%zu params=%zu forward_ms=%.2f step_ms=%.2f",
                variant.c_str(), size, params.scalar_count(), fwd, step);
  log_kv(buf);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, run and evaluate the pyramidal dilated convolutional restoration networks."};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model on a paired dataset");
  train->add_option("--config", ta.config, "JSON run config (flags override it)");
  train->add_option("--data", ta.data, "Dataset root holding input/ and gt/");
  train->add_option("--out", ta.out, "Output directory");
  train->add_option("--variant", ta.variant, "plain or dual");
  train->add_option("--seed", ta.seed, "RNG seed");
  train->add_option("--steps", ta.steps, "Optimizer steps");
  train->add_option("--batch", ta.batch, "Batch size");
  train->add_option("--patch", ta.patch, "Patch size (0 = full frame)");
  train->add_option("--lr", ta.lr, "Initial learning rate");
  train->add_option("--resume", ta.resume, "Checkpoint with optimizer state to continue from");
  train->add_option("--log-every", ta.log_every, "Steps between log lines")->check(CLI::PositiveNumber);

  std::string ckpt, in, out_dir;
  auto* restore = app.add_subcommand("restore", "Restore an image or a directory of PNGs");
  restore->add_option("--ckpt", ckpt, "Checkpoint")->required();
  restore->add_option("--in", in, "Input PNG or directory")->required();
  restore->add_option("--out", out_dir, "Output directory")->required();

  std::string pred, gt, csv = "eval.csv";
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of predictions against ground truth");
  eval->add_option("--pred", pred, "Directory of predicted PNGs")->required();
  eval->add_option("--gt", gt, "Directory of ground-truth PNGs")->required();
  eval->add_option("--csv", csv, "Per-image report path");

  std::string level = "quick";
  bool break_haar = false;
  auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant checks");
  selftest->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  selftest->add_flag("--break-haar", break_haar)->group("");

  std::string kind = "color_shift", synth_out;
  std::size_t count = 8, size = 64;
  std::uint64_t synth_seed = 0;
  double noise = 0.01;
  auto* synth = app.add_subcommand("synth", "Write a synthetic degraded/clean dataset");
  synth->add_option("--kind", kind, "blur_h or color_shift");
  synth->add_option("--count", count, "Number of pairs");
  synth->add_option("--size", size, "Image side in pixels");
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--noise", noise, "Gaussian noise sigma");
  synth->add_option("--out", synth_out, "Dataset root")->required();

  std::string bench_variant = "plain";
  std::size_t bench_size = 64, bench_iters = 10;
  auto* bench = app.add_subcommand("bench", "Time forward passes and training steps");
  bench->add_option("--variant", bench_variant, "plain or dual");
  bench->add_option("--size", bench_size, "Image side in pixels");
  bench->add_option("--iters", bench_iters, "Iterations")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*train) return cmd_train(ta);
  if (*restore) return cmd_restore(ckpt, in, out_dir);
  if (*eval) return cmd_eval(pred, gt, csv);
  if (*selftest) return cmd_selftest(level, break_haar);
  if (*synth) return cmd_synth(kind, count, size, synth_seed, noise, synth_out);
  if (*bench) return cmd_bench(bench_variant, bench_size, bench_iters);
  return kConfig;
}
