#pragma once

// Saliency map files.
//
// PGM: 8-bit P5, value round(clamp(v, 0, 1) * 255).
// Raw: "NPSM", u32 version (1), u32 height, u32 width, height*width f32, all
// little-endian, row-major.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>

#include "npsnet/core/checkpoint.hpp"
#include "npsnet/io/image.hpp"
#include "npsnet/io/wav.hpp"
#include "npsnet/types.hpp"

namespace npsnet {

inline constexpr std::uint32_t kMapFormatVersion = 1;

inline std::string encode_map_raw(const SaliencyMap& m) {
  std::string b = "NPSM";
  detail::put32(b, kMapFormatVersion);
  detail::put32(b, static_cast<std::uint32_t>(m.height));
  detail::put32(b, static_cast<std::uint32_t>(m.width));
  for (double v : m.values) detail::put32(b, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return b;
}

inline SaliencyMap decode_map_raw(const std::string& b, const std::string& what = "map") {
  if (b.size() < 16 || b.compare(0, 4, "NPSM") != 0) throw FormatError(what + ": missing NPSM header");
  const std::uint32_t version = detail::le32(b, 4);
  if (version != kMapFormatVersion) throw FormatError(what + ": unsupported map version " + std::to_string(version));
  const std::size_t h = detail::le32(b, 8), w = detail::le32(b, 12);
  if (b.size() != 16 + 4 * h * w)
    throw FormatError(what + ": expected " + std::to_string(16 + 4 * h * w) + " bytes, found " + std::to_string(b.size()));
  SaliencyMap m(h, w);
  for (std::size_t i = 0; i < h * w; ++i) m.values[i] = std::bit_cast<float>(detail::le32(b, 16 + 4 * i));
  return m;
}

inline void write_map_raw(const std::filesystem::path& path, const SaliencyMap& m) {
  detail::write_file_bytes(path, encode_map_raw(m));
}

inline SaliencyMap read_map_raw(const std::filesystem::path& path) {
  return decode_map_raw(detail::read_file_bytes(path), path.string());
}

inline void write_map_pgm(const std::filesystem::path& path, const SaliencyMap& m) {
  Image img{m.height, m.width, 1, std::vector<float>(m.values.begin(), m.values.end())};
  write_image(path, img);
}

// Reads a grey (or RGB, channel-averaged) image as a map in [0, 1].
inline SaliencyMap read_map_image(const std::filesystem::path& path) {
  const Image img = read_image(path);
  SaliencyMap m(img.height, img.width);
  for (std::size_t i = 0; i < m.size(); ++i) {
    double acc = 0;
    for (std::size_t c = 0; c < img.channels; ++c) acc += img.data[i * img.channels + c];
    m.values[i] = acc / static_cast<double>(img.channels);
  }
  return m;
}

// Dispatches on the file's magic bytes.
inline SaliencyMap read_map(const std::filesystem::path& path) {
  const std::string b = detail::read_file_bytes(path);
  if (b.size() >= 4 && b.compare(0, 4, "NPSM") == 0) return decode_map_raw(b, path.string());
  return read_map_image(path);
}

}  // namespace npsnet
