#pragma once

// Parameter checkpoint file, all integers little-endian:
//
//   bytes 0..7   magic "NPSNETCK"
//   u32          format version (currently 1)
//   u32          number of parameters
//   per parameter, in registration order:
//     u32        name length in bytes, then the UTF-8 name
//     u32        rank, then rank x u32 extents
//     numel x f32 values (IEEE-754 binary32, little-endian)

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "npsnet/core/params.hpp"

namespace npsnet {

inline constexpr char kCheckpointMagic[8] = {'N', 'P', 'S', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Writes via a sibling temporary so a failed write leaves no partial file.
inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    detail::put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : e.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw FormatError("not a checkpoint file (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.bytes(r.u32());
    const auto rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u32());
    const std::size_t n = numel(e.shape);
    e.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) e.values[j] = std::bit_cast<float>(r.u32());
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return entries;
}

template <class T>
std::vector<CheckpointEntry> snapshot(const ParamStore<T>& store) {
  std::vector<CheckpointEntry> entries;
  for (const auto& p : store.params()) {
    CheckpointEntry e{p.name, p.tensor.shape(), {}};
    for (T v : p.tensor.values()) e.values.push_back(static_cast<float>(v));
    entries.push_back(std::move(e));
  }
  return entries;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& store) {
  detail::write_file_bytes(path, encode_checkpoint(snapshot(store)));
}

inline std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

// Copies checkpoint values into the store. The parameter sets must match
// exactly; the first disagreement is reported by name.
template <class T>
void load_into(ParamStore<T>& store, const std::vector<CheckpointEntry>& entries) {
  for (const auto& e : entries)
    if (!store.contains(e.name)) throw DimensionError("checkpoint parameter " + e.name + " is not part of this model");
  if (entries.size() != store.params().size()) {
    for (const auto& p : store.params()) {
      bool found = false;
      for (const auto& e : entries) found = found || e.name == p.name;
      if (!found) throw DimensionError("checkpoint is missing parameter " + p.name);
    }
  }
  for (const auto& e : entries) {
    auto& t = store.at(e.name);
    if (t.shape() != e.shape)
      throw DimensionError("parameter " + e.name + " has shape " + to_string(e.shape) + " in checkpoint but " +
                           to_string(t.shape()) + " in model");
  }
  for (const auto& e : entries) {
    auto& t = store.at(e.name);
    for (std::size_t j = 0; j < e.values.size(); ++j) t[j] = static_cast<T>(e.values[j]);
  }
}

}  // namespace npsnet
