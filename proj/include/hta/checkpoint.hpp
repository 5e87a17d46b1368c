#pragma once

// Binary tensor container ("HTAC"): magic, u32 version, u32 tensor count, then
// per tensor a u16 name length + UTF-8 name, u8 rank, rank x u32 extents and
// a row-major f32 payload. All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hta/error.hpp"
#include "hta/model.hpp"
#include "hta/tensor.hpp"

namespace hta {

inline constexpr char kCheckpointMagic[4] = {'H', 'T', 'A', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kConfigTensorName = "__config__";

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

namespace ckpt_detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

inline void put(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    U v;
    take(&v, sizeof(U));
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) fail(ErrorCode::CorruptCheckpoint, "truncated checkpoint");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ckpt_detail

inline std::vector<std::uint8_t> encode_tensors(const NamedTensors& tensors,
                                                std::uint32_t version = kCheckpointVersion) {
  using ckpt_detail::put;
  std::vector<std::uint8_t> out;
  put(out, kCheckpointMagic, 4);
  put(out, &version, 4);
  const auto count = static_cast<std::uint32_t>(tensors.size());
  put(out, &count, 4);
  for (const auto& [name, t] : tensors) {
    if (name.size() > UINT16_MAX) fail(ErrorCode::IoError, "tensor name too long");
    if (t.rank() > UINT8_MAX) fail(ErrorCode::IoError, "tensor rank too large");
    const auto len = static_cast<std::uint16_t>(name.size());
    put(out, &len, 2);
    put(out, name.data(), name.size());
    const auto rank = static_cast<std::uint8_t>(t.rank());
    put(out, &rank, 1);
    for (std::size_t d : t.shape()) {
      const auto e = static_cast<std::uint32_t>(d);
      put(out, &e, 4);
    }
    put(out, t.data(), t.size() * sizeof(float));
  }
  return out;
}

inline NamedTensors decode_tensors(std::span<const std::uint8_t> bytes) {
  ckpt_detail::Reader r(bytes);
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    fail(ErrorCode::CorruptCheckpoint, "bad magic bytes");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    fail(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                         ", expected " + std::to_string(kCheckpointVersion));
  const auto count = r.get<std::uint32_t>();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name(len, '\0');
    r.take(name.data(), len);
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    std::uint64_t elems = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>();
      elems *= d;
      if (elems > r.remaining() / sizeof(float)) fail(ErrorCode::CorruptCheckpoint, "tensor extends past end of checkpoint");
    }
    Tensor<float> t(shape);
    r.take(t.data(), t.size() * sizeof(float));
    out.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) fail(ErrorCode::CorruptCheckpoint, "trailing bytes after last tensor");
  return out;
}

inline Tensor<float> encode_config(const ModelConfig& cfg) {
  std::vector<float> v{static_cast<float>(cfg.in_channels), static_cast<float>(cfg.classes),
                       static_cast<float>(cfg.blocks.size())};
  for (const auto& b : cfg.blocks) {
    for (std::size_t x : {b.filters, b.kernel_h, b.kernel_w, b.pad_h, b.pad_w, b.stride_h, b.stride_w})
      v.push_back(static_cast<float>(x));
  }
  const std::size_t n = v.size();
  return Tensor<float>({n}, std::move(v));
}

inline ModelConfig decode_config(const Tensor<float>& t) {
  auto at = [&](std::size_t i) {
    if (i >= t.size()) fail(ErrorCode::CorruptCheckpoint, "model config echo truncated");
    return static_cast<std::size_t>(t[i]);
  };
  ModelConfig cfg;
  cfg.in_channels = at(0);
  cfg.classes = at(1);
  const std::size_t n = at(2);
  cfg.blocks.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t o = 3 + 7 * i;
    cfg.blocks.push_back({at(o), at(o + 1), at(o + 2), at(o + 3), at(o + 4), at(o + 5), at(o + 6)});
  }
  return cfg;
}

inline std::vector<std::uint8_t> encode_checkpoint(Model<float>& model) {
  NamedTensors ts;
  ts.emplace_back(kConfigTensorName, encode_config(model.config()));
  for (auto& [name, t] : model.state()) ts.emplace_back(name, *t);
  return encode_tensors(ts);
}

inline Model<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  NamedTensors ts = decode_tensors(bytes);
  std::map<std::string, Tensor<float>> by_name;
  for (auto& [n, t] : ts) by_name.emplace(n, std::move(t));
  const auto cfg_it = by_name.find(kConfigTensorName);
  if (cfg_it == by_name.end()) fail(ErrorCode::CorruptCheckpoint, "missing model config echo");
  ModelConfig cfg = decode_config(cfg_it->second);
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorCode::CorruptCheckpoint, e.what());
  }
  Model<float> model(cfg);
  for (auto& [name, dst] : model.state()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorCode::CorruptCheckpoint, "missing tensor " + name);
    if (it->second.shape() != dst->shape())
      fail(ErrorCode::CorruptCheckpoint, "tensor " + name + " has shape " +
                                             shape_str(it->second.shape()) + ", expected " +
                                             shape_str(dst->shape()));
    *dst = std::move(it->second);
  }
  return model;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

inline void save_checkpoint(Model<float>& model, const std::filesystem::path& path) {
  write_bytes(path, encode_checkpoint(model));
}

inline Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace hta
