#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "pdcrn/model.hpp"
#include "pdcrn/training.hpp"

namespace pdcrn {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, version_mismatch, corrupt };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr char kCheckpointMagic[8] = {'P', 'D', 'C', 'R', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParamSet<float> params;
  std::optional<AdamState<float>> adam;
};

/// Little-endian layout: magic, u32 version, u64 length + ModelConfig JSON,
/// u64 tensor count, then per tensor u32 name length, name, 4 x u64 shape and
/// float32 data. An optional optimizer section follows: u8 flag, u64 step,
/// then the first and second moments in parameter order (data only).
/// The file is written to a temporary sibling and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ParamSet<float>& params, const AdamState<float>* adam = nullptr);

/// Parameters are checked against the layout implied by the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pdcrn
