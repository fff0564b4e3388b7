#include "pdcrn/config_io.hpp"

#include <algorithm>
#include <initializer_list>
#include <type_traits>

namespace pdcrn {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  require_object(j, where);
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  bool ok = true;
  if constexpr (std::is_same_v<V, bool>)
    ok = it->is_boolean();
  else if constexpr (std::is_unsigned_v<V>)
    ok = it->is_number_unsigned();
  else if constexpr (std::is_floating_point_v<V>)
    ok = it->is_number();
  if (!ok) throw ConfigError(where + "." + key + ": wrong type or negative value");
  try {
    out = it->template get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json pdcb_to_json(const PdcbConfig& c) {
  return {{"layers", c.layers}, {"growth", c.growth}, {"dilations", c.dilations},
          {"kernel", c.kernel}};
}

PdcbConfig pdcb_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"layers", "growth", "dilations", "kernel"}, where);
  PdcbConfig c;
  read(j, "layers", c.layers, where);
  read(j, "growth", c.growth, where);
  read(j, "dilations", c.dilations, where);
  read(j, "kernel", c.kernel, where);
  return c;
}

}  // namespace

json to_json(const ModelConfig& cfg) {
  json pdcb = json::array();
  for (const PdcbConfig& c : cfg.pdcb) pdcb.push_back(pdcb_to_json(c));
  json ddb = json::array();
  for (const DdbConfig& c : cfg.ddb) ddb.push_back({{"dct_block", c.dct_block}});
  return {{"variant", to_string(cfg.variant)},
          {"levels", cfg.levels},
          {"base_channels", cfg.base_channels},
          {"s2d_factor", cfg.s2d_factor},
          {"blocks_per_level", cfg.blocks_per_level},
          {"pdcb", pdcb},
          {"ddb", ddb},
          {"ablation",
           {{"use_dilation", cfg.ablation.use_dilation}, {"use_dwt", cfg.ablation.use_dwt}}},
          {"leaky_alpha", cfg.leaky_alpha}};
}

json to_json(const TrainConfig& cfg) {
  return {{"lr0", cfg.lr0},
          {"decay_factor", cfg.decay_factor},
          {"decay_every", cfg.decay_every},
          {"steps", cfg.steps},
          {"batch", cfg.batch},
          {"patch", cfg.patch},
          {"seed", cfg.seed},
          {"checkpoint_every", cfg.checkpoint_every},
          {"adam", {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}}}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig base) {
  const std::string where = "model";
  reject_unknown(j,
                 {"variant", "levels", "base_channels", "s2d_factor", "blocks_per_level", "pdcb",
                  "ddb", "ablation", "leaky_alpha"},
                 where);
  if (auto it = j.find("variant"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("model.variant: expected a string");
    try {
      base.variant = parse_variant(it->get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model.variant: ") + e.what());
    }
  }
  read(j, "levels", base.levels, where);
  read(j, "base_channels", base.base_channels, where);
  read(j, "s2d_factor", base.s2d_factor, where);
  read(j, "blocks_per_level", base.blocks_per_level, where);
  read(j, "leaky_alpha", base.leaky_alpha, where);
  if (auto it = j.find("pdcb"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("model.pdcb: expected an array");
    base.pdcb.clear();
    for (std::size_t i = 0; i < it->size(); ++i)
      base.pdcb.push_back(pdcb_from_json((*it)[i], "model.pdcb[" + std::to_string(i) + "]"));
  }
  if (auto it = j.find("ddb"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("model.ddb: expected an array");
    base.ddb.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string w = "model.ddb[" + std::to_string(i) + "]";
      reject_unknown((*it)[i], {"dct_block"}, w);
      DdbConfig c;
      read((*it)[i], "dct_block", c.dct_block, w);
      base.ddb.push_back(c);
    }
  }
  if (auto it = j.find("ablation"); it != j.end()) {
    reject_unknown(*it, {"use_dilation", "use_dwt"}, "model.ablation");
    read(*it, "use_dilation", base.ablation.use_dilation, "model.ablation");
    read(*it, "use_dwt", base.ablation.use_dwt, "model.ablation");
  }
  return base;
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  const std::string where = "train";
  reject_unknown(j,
                 {"lr0", "decay_factor", "decay_every", "steps", "batch", "patch", "seed",
                  "checkpoint_every", "adam"},
                 where);
  read(j, "lr0", base.lr0, where);
  read(j, "decay_factor", base.decay_factor, where);
  read(j, "decay_every", base.decay_every, where);
  read(j, "steps", base.steps, where);
  read(j, "batch", base.batch, where);
  read(j, "patch", base.patch, where);
  read(j, "seed", base.seed, where);
  read(j, "checkpoint_every", base.checkpoint_every, where);
  if (auto it = j.find("adam"); it != j.end()) {
    reject_unknown(*it, {"beta1", "beta2", "eps"}, "train.adam");
    read(*it, "beta1", base.adam.beta1, "train.adam");
    read(*it, "beta2", base.adam.beta2, "train.adam");
    read(*it, "eps", base.adam.eps, "train.adam");
  }
  return base;
}

}  // namespace pdcrn
