#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "pdcrn/checkpoint.hpp"
#include "pdcrn/model.hpp"
#include "test_util.hpp"

using namespace pdcrn;
using testutil::randn;
namespace fs = std::filesystem;

namespace {

std::size_t conv_count(std::size_t in, std::size_t out, std::size_t k) {
  return out * in * k * k + out;
}

std::size_t pdcb_count(std::size_t c, const PdcbConfig& cfg) {
  const std::size_t g = cfg.growth_for(c);
  std::size_t total = 0, width = c;
  for (std::size_t i = 0; i < cfg.layers; ++i, width += g) total += conv_count(width, g, 3);
  return total + conv_count(width, c, 1);
}

// Parameter count summed from the topology by hand.
std::size_t expected_count(const ModelConfig& cfg) {
  const std::size_t r2 = cfg.s2d_factor * cfg.s2d_factor;
  const std::size_t c1 = cfg.base_channels;
  auto blocks = [&](std::size_t l) {
    const std::size_t c = cfg.channels_at(l);
    std::size_t per = pdcb_count(c, cfg.pdcb_at(l));
    if (cfg.variant == Variant::dual_domain) per += conv_count(c, c, 1) + conv_count(2 * c, c, 1);
    return per * cfg.blocks_per_level;
  };
  std::size_t total = conv_count(3 * r2, c1, 3);
  total += cfg.ablation.use_dwt ? conv_count(4 * c1, c1, 3) : conv_count(c1, c1, 3);
  total += blocks(1);
  for (std::size_t l = 2; l <= cfg.levels; ++l)
    total += conv_count(cfg.channels_at(l - 1), cfg.channels_at(l), 3) + blocks(l);
  for (std::size_t l = 1; l < cfg.levels; ++l)
    total += conv_count(cfg.channels_at(l + 1), cfg.channels_at(l), 2) + blocks(l);
  total += cfg.ablation.use_dwt ? conv_count(c1, 4 * c1, 3) : conv_count(c1, c1, 2);
  return total + conv_count(c1, 3 * r2, 3);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pdcrn_models_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

CheckpointError::Kind load_error(const fs::path& p) {
  try {
    load_checkpoint(p);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("load succeeded");
  return CheckpointError::Kind::io;
}

ModelConfig micro(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.levels = 2;
  cfg.base_channels = 2;
  cfg.blocks_per_level = 1;
  cfg.pdcb = {PdcbConfig{2, 1, {2, 1}, 3}, PdcbConfig{2, 1, {2, 1}, 3}};
  if (v == Variant::dual_domain) cfg.ddb = {{2}, {1}};
  return cfg;
}

}  // namespace

TEST_CASE("config validation and divisibility") {
  ModelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.spatial_multiple() == 16);
  cfg.levels = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.levels = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  const ModelConfig dual = ModelConfig::tiny(Variant::dual_domain);
  CHECK(dual.spatial_multiple() == 64);
  CHECK_THROWS_AS(dual.check_input({1, 3, 48, 64}), ShapeError);
  CHECK_THROWS_AS(ModelConfig{}.check_input({1, 1, 64, 64}), ShapeError);
  CHECK_NOTHROW(dual.check_input({1, 3, 64, 128}));
  CHECK(parse_variant("dual") == Variant::dual_domain);
  CHECK_THROWS_AS(parse_variant("triple"), std::invalid_argument);
}

TEST_CASE("parameter counts") {
  for (Variant v : {Variant::plain, Variant::dual_domain}) {
    const ModelConfig tiny = ModelConfig::tiny(v);
    CHECK(model_layout(tiny).scalar_count() == expected_count(tiny));
    ModelConfig full;
    full.variant = v;
    CHECK(model_layout(full).scalar_count() == expected_count(full));
    ModelConfig ablated = tiny;
    ablated.ablation = {false, false};
    CHECK(model_layout(ablated).scalar_count() == expected_count(ablated));
  }
  // Regression pins for the tiny configs.
  CHECK(model_layout(ModelConfig::tiny(Variant::plain)).scalar_count() == 72436);
  CHECK(model_layout(ModelConfig::tiny(Variant::dual_domain)).scalar_count() == 77588);
}

TEST_CASE("layout names are unique and ablation only renames the changed stages") {
  const ModelConfig cfg = ModelConfig::tiny(Variant::plain);
  ModelConfig ablated = cfg;
  ablated.ablation = {false, false};
  std::set<std::string> a, b;
  for (const auto& d : model_layout(cfg).entries()) CHECK(a.insert(d.name).second);
  for (const auto& d : model_layout(ablated).entries()) CHECK(b.insert(d.name).second);
  std::set<std::string> only_a, only_b;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(only_a, only_a.end()));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::inserter(only_b, only_b.end()));
  CHECK(only_a == std::set<std::string>{"down1.mix.b", "down1.mix.w", "up1.expand.b", "up1.expand.w"});
  CHECK(only_b == std::set<std::string>{"down1.conv.b", "down1.conv.w", "up1.conv.b", "up1.conv.w"});
}

TEST_CASE("param_init") {
  ModelConfig cfg;
  const auto p1 = param_init<double>(cfg, 42);
  const auto p2 = param_init<double>(cfg, 42);
  CHECK(p1 == p2);
  CHECK_FALSE(p1 == param_init<double>(cfg, 43));

  const ParamLayout layout = model_layout(cfg);
  std::size_t checked = 0, checked_scaled = 0;
  for (const auto& d : layout.entries()) {
    const auto& t = p1.get(d.name);
    if (d.role == ParamRole::bias) {
      CHECK(squared_norm(t) == 0.0);
      continue;
    }
    if (t.size() < 10000) continue;
    const double fan_in = static_cast<double>(t.c() * t.h() * t.w());
    const double want = d.init_scale * std::sqrt(2.0 / fan_in);
    double mean = 0.0;
    for (double v : t.data()) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (double v : t.data()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(t.size() - 1));
    CHECK(std::abs(sd - want) <= 0.1 * want);
    ++(d.init_scale == 1.0 ? checked : checked_scaled);
  }
  CHECK(checked >= 4);
  CHECK(checked_scaled >= 1);
  // Scaled tensors are exactly the residual fusions and the exit conv.
  for (const auto& d : layout.entries()) {
    const bool scaled = d.name == "exit.w" || d.name.ends_with(".fuse.w");
    CHECK((d.init_scale == kResidualInitScale) == scaled);
  }
}

TEST_CASE("forward shapes and finiteness") {
  std::mt19937_64 rng(1);
  for (Variant v : {Variant::plain, Variant::dual_domain}) {
    const ModelConfig cfg = ModelConfig::tiny(v);
    const auto p = param_init<double>(cfg, 7);
    const auto img = testutil::randu({2, 3, 64, 128}, rng);
    const auto y = model_infer(img, p, cfg);
    CHECK(y.shape() == img.shape());
    CHECK(all_finite(y));
    ModelConfig ablated = cfg;
    ablated.ablation = {false, false};
    CHECK(model_infer(img, param_init<double>(ablated, 7), ablated).shape() == img.shape());
  }
  const ModelConfig plain = ModelConfig::tiny(Variant::plain);
  CHECK(pdcrn_forward(testutil::randu({1, 3, 64, 64}, rng), param_init<double>(plain, 1), plain)
            .shape() == Shape{1, 3, 64, 64});
  CHECK_THROWS_AS(pdcrn_dd_forward(Tensor4<double>({1, 3, 64, 64}), param_init<double>(plain, 1),
                                   plain),
                  std::invalid_argument);
}

TEST_CASE("dual-domain model at the large patch size") {
  std::mt19937_64 rng(2);
  const ModelConfig cfg = ModelConfig::tiny(Variant::dual_domain);
  const auto p = param_init<float>(cfg, 3);
  const auto img = tensor_cast<float>(testutil::randu({1, 3, 256, 256}, rng));
  const auto y = pdcrn_dd_forward(img, p, cfg);
  CHECK(y.shape() == Shape{1, 3, 256, 256});
  CHECK(all_finite(y));
}

TEST_CASE("zeroed exit conv gives exactly zero output") {
  std::mt19937_64 rng(3);
  for (Variant v : {Variant::plain, Variant::dual_domain}) {
    const ModelConfig cfg = ModelConfig::tiny(v);
    auto p = param_init<double>(cfg, 9);
    p.get("exit.w") = Tensor4<double>(p.get("exit.w").shape());
    CHECK(max_abs(model_infer(testutil::randu({1, 3, 64, 64}, rng), p, cfg)) == 0.0);
  }
}

TEST_CASE("micro two-level models pass gradient checks") {
  std::mt19937_64 rng(4);
  for (Variant v : {Variant::plain, Variant::dual_domain}) {
    const ModelConfig cfg = micro(v);
    const auto p = testutil::random_params(model_layout(cfg), rng, 0.4);
    const auto img = testutil::randu({1, 3, 8, 8}, rng);
    const auto y = randn({1, 3, 8, 8}, rng);
    auto wrt_image = [&](Tape<double>& t, Var<double> x) {
      BoundParams<double> b(t, p, false);
      return weighted_sum(model_forward(x, b, cfg), y);
    };
    CHECK(grad_check<double>(wrt_image, img).max_rel_error <= 1e-4);
    for (const char* name : {"entry.w", "enc2.b0.pdcb.conv0.w", "up2.w", "exit.b"}) {
      const std::string key = v == Variant::plain && std::strstr(name, ".pdcb")
                                  ? std::string("enc2.b0.conv0.w")
                                  : std::string(name);
      auto wrt_param = [&](Tape<double>& t, Var<double> w) {
        BoundParams<double> b(t, p, false, {{key, w}});
        return weighted_sum(model_forward(t.leaf(img), b, cfg), y);
      };
      CHECK(grad_check<double>(wrt_param, p.get(key)).max_rel_error <= 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir;
  std::mt19937_64 rng(5);
  const ModelConfig cfg = ModelConfig::tiny(Variant::dual_domain);
  const auto params = param_init<float>(cfg, 11);
  AdamState<float> adam = AdamState<float>::zeros_like(params);
  adam.step = 17;
  for (auto& [name, t] : adam.m.entries())
    for (float& v : t.data()) v = static_cast<float>(randn({1, 1, 1, 1}, rng)[0]);
  for (auto& [name, t] : adam.v.entries())
    for (float& v : t.data()) v = static_cast<float>(std::abs(randn({1, 1, 1, 1}, rng)[0]));

  const fs::path with = dir.path / "with.bin", without = dir.path / "without.bin";
  save_checkpoint(with, cfg, params, &adam);
  save_checkpoint(without, cfg, params);

  const Checkpoint a = load_checkpoint(with);
  CHECK(a.config == cfg);
  CHECK(a.params.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [n1, t1] = params.entries()[i];
    const auto& [n2, t2] = a.params.entries()[i];
    CHECK(n1 == n2);
    REQUIRE(t1.shape() == t2.shape());
    CHECK(std::memcmp(t1.data().data(), t2.data().data(), t1.size() * sizeof(float)) == 0);
  }
  REQUIRE(a.adam.has_value());
  CHECK(a.adam->step == 17);
  CHECK(a.adam->m == adam.m);
  CHECK(a.adam->v == adam.v);

  const Checkpoint b = load_checkpoint(without);
  CHECK(b.params == params);
  CHECK_FALSE(b.adam.has_value());

  // Layout on disk starts with the magic and version.
  const auto bytes = slurp(with);
  CHECK(std::memcmp(bytes.data(), "PDCRNCKP", 8) == 0);
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  CHECK(version == 1);
}

TEST_CASE("checkpoint load errors are distinct") {
  TempDir dir;
  const ModelConfig cfg = ModelConfig::tiny(Variant::plain);
  const fs::path good = dir.path / "good.bin";
  save_checkpoint(good, cfg, param_init<float>(cfg, 1));
  const auto bytes = slurp(good);
  const fs::path bad = dir.path / "bad.bin";

  auto magic = bytes;
  magic[3] ^= 0x20;
  dump(bad, magic);
  CHECK(load_error(bad) == CheckpointError::Kind::bad_magic);

  auto version = bytes;
  version[8] = 2;
  dump(bad, version);
  CHECK(load_error(bad) == CheckpointError::Kind::version_mismatch);

  dump(bad, std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)));
  CHECK(load_error(bad) == CheckpointError::Kind::truncated);
  dump(bad, std::vector<char>(bytes.begin(), bytes.begin() + 5));
  CHECK(load_error(bad) == CheckpointError::Kind::truncated);

  auto trailing = bytes;
  trailing.push_back('x');
  dump(bad, trailing);
  CHECK(load_error(bad) == CheckpointError::Kind::corrupt);

  CHECK(load_error(dir.path / "missing.bin") == CheckpointError::Kind::io);

  // Parameters that do not match the stored config.
  ModelConfig other = cfg;
  other.base_channels = 4;
  const fs::path mismatch = dir.path / "mismatch.bin";
  save_checkpoint(mismatch, other, param_init<float>(cfg, 1));
  CHECK(load_error(mismatch) == CheckpointError::Kind::corrupt);
}
