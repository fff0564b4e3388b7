#include "pdcrn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "pdcrn/config_io.hpp"

namespace pdcrn {

namespace fs = std::filesystem;

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void floats(const Tensor4<float>& t) {
    for (float f : t.data()) u32(std::bit_cast<std::uint32_t>(f));
  }
  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

  const unsigned char* take(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n)
      throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    const unsigned char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8(const char* what) { return *take(1, what); }
  std::uint32_t u32(const char* what) {
    const unsigned char* p = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const unsigned char* p = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  void floats(Tensor4<float>& t, const char* what) {
    if ((buf_.size() - pos_) / 4 < t.size())
      throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    for (float& f : t.data()) f = std::bit_cast<float>(u32(what));
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const fs::path& path, const ModelConfig& cfg, const ParamSet<float>& params,
                     const AdamState<float>* adam) {
  const ParamLayout layout = model_layout(cfg);
  if (layout.entries().size() != params.size())
    throw std::invalid_argument("parameter set does not match the model config");
  if (adam) {
    require_aligned(params, adam->m, "checkpoint optimizer state");
    require_aligned(params, adam->v, "checkpoint optimizer state");
  }

  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  const std::string config = to_json(cfg).dump();
  w.u64(config.size());
  w.bytes(config.data(), config.size());
  w.u64(params.size());
  for (const auto& [name, t] : params.entries()) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    for (std::size_t d : {t.n(), t.c(), t.h(), t.w()}) w.u64(d);
    w.floats(t);
  }
  w.u8(adam ? 1 : 0);
  if (adam) {
    w.u64(adam->step);
    for (const auto& [name, t] : adam->m.entries()) w.floats(t);
    for (const auto& [name, t] : adam->v.entries()) w.floats(t);
  }

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError(Kind::io, "cannot open " + tmp.string() + " for writing");
    const auto& buf = w.buffer();
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw CheckpointError(Kind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CheckpointError(Kind::io, "cannot move checkpoint into " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(is), {}));

  const unsigned char* magic = r.take(sizeof(kCheckpointMagic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw CheckpointError(Kind::bad_magic, path.string() + " is not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));

  Checkpoint ckpt;
  const std::uint64_t config_len = r.u64("config length");
  const auto* config_bytes = r.take(config_len, "config");
  try {
    ckpt.config = model_config_from_json(nlohmann::json::parse(
        std::string(reinterpret_cast<const char*>(config_bytes), config_len)));
    ckpt.config.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::corrupt, std::string("bad config in checkpoint: ") + e.what());
  }

  const ParamLayout layout = model_layout(ckpt.config);
  const std::uint64_t count = r.u64("tensor count");
  if (count != layout.entries().size())
    throw CheckpointError(Kind::corrupt, "checkpoint holds " + std::to_string(count) +
                                             " tensors, config implies " +
                                             std::to_string(layout.entries().size()));
  for (const ParamDecl& decl : layout.entries()) {
    const std::uint32_t len = r.u32("name length");
    const auto* name_bytes = r.take(len, "name");
    std::string name(reinterpret_cast<const char*>(name_bytes), len);
    Shape shape;
    shape.n = r.u64("shape");
    shape.c = r.u64("shape");
    shape.h = r.u64("shape");
    shape.w = r.u64("shape");
    if (name != decl.name || !(shape == decl.shape))
      throw CheckpointError(Kind::corrupt, "unexpected tensor " + name + " " + shape.str() +
                                               ", expected " + decl.name + " " + decl.shape.str());
    Tensor4<float> t(shape);
    r.floats(t, "tensor data");
    ckpt.params.add(std::move(name), std::move(t));
  }

  const std::uint8_t has_adam = r.u8("optimizer flag");
  if (has_adam > 1) throw CheckpointError(Kind::corrupt, "bad optimizer flag");
  if (has_adam) {
    AdamState<float> adam = AdamState<float>::zeros_like(ckpt.params);
    adam.step = r.u64("optimizer step");
    for (auto& [name, t] : adam.m.entries()) r.floats(t, "first moment");
    for (auto& [name, t] : adam.v.entries()) r.floats(t, "second moment");
    ckpt.adam = std::move(adam);
  }
  if (!r.at_end()) throw CheckpointError(Kind::corrupt, "trailing bytes after checkpoint");
  return ckpt;
}

}  // namespace pdcrn
