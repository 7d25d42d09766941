#pragma once

// 8-bit frame images. Reads binary PPM (P6), PGM (P5) and PNG; writes PPM and
// PGM. Pixels are normalized to [0, 1] on load.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "npsnet/core/checkpoint.hpp"
#include "npsnet/core/errors.hpp"

namespace npsnet {

// Interleaved channels, row-major: data[(y * width + x) * channels + c].
struct Image {
  std::size_t height = 0, width = 0, channels = 3;
  std::vector<float> data;

  float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }
};

namespace detail {

inline std::size_t pnm_number(const std::vector<std::uint8_t>& b, std::size_t& pos, const std::string& path) {
  // Skip whitespace and '#' comments.
  while (pos < b.size()) {
    if (std::isspace(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError(path + ": malformed PNM header");
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
    if (v > (1u << 24)) throw FormatError(path + ": PNM header value too large");
    ++pos;
  }
  return v;
}

inline Image decode_pnm(const std::vector<std::uint8_t>& b, const std::string& path) {
  if (b.size() < 2 || b[0] != 'P' || (b[1] != '6' && b[1] != '5'))
    throw FormatError(path + ": not a binary PPM/PGM (expected P6 or P5)");
  Image img;
  img.channels = b[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  img.width = pnm_number(b, pos, path);
  img.height = pnm_number(b, pos, path);
  const std::size_t maxval = pnm_number(b, pos, path);
  if (img.width == 0 || img.height == 0) throw FormatError(path + ": zero image extent");
  if (maxval != 255) throw FormatError(path + ": only 8-bit PNM (maxval 255) is supported");
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError(path + ": malformed PNM header");
  ++pos;
  const std::size_t n = img.width * img.height * img.channels;
  if (b.size() - pos != n)
    throw FormatError(path + ": expected " + std::to_string(n) + " pixel bytes, found " + std::to_string(b.size() - pos));
  img.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<float>(b[pos + i]) / 255.0f;
  return img;
}

inline Image decode_png(const std::vector<std::uint8_t>& b, const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, b.data(), b.size()))
    throw FormatError(path + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, px.data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError(path + ": " + png.message);
  }
  Image img;
  img.height = png.height;
  img.width = png.width;
  img.channels = 3;
  img.data.resize(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) img.data[i] = static_cast<float>(px[i]) / 255.0f;
  return img;
}

}  // namespace detail

inline Image read_image(const std::filesystem::path& path) {
  const std::string raw = detail::read_file_bytes(path);
  const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) return detail::decode_png(bytes, path.string());
  return detail::decode_pnm(bytes, path.string());
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::string encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw UsageError("PNM output needs 1 or 3 channels");
  const std::string header =
      std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::string out = header;
  for (float v : img.data) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

inline void write_image(const std::filesystem::path& path, const Image& img) { detail::write_file_bytes(path, encode_pnm(img)); }

// Bilinear resampling with half-pixel centres, edge-clamped.
inline Image resize_bilinear(const Image& src, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("resize target must be positive");
  if (src.height == height && src.width == width) return src;
  Image out;
  out.height = height;
  out.width = width;
  out.channels = src.channels;
  out.data.resize(height * width * src.channels);
  auto tap = [](std::size_t dst, std::size_t in, std::size_t outn, std::size_t& i0, std::size_t& i1, double& f) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
    s = std::max(s, 0.0);
    i0 = std::min(static_cast<std::size_t>(s), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    f = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double fy;
    tap(y, src.height, height, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double fx;
      tap(x, src.width, width, x0, x1, fx);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = src.at(y0, x0, c) * (1 - fx) + src.at(y0, x1, c) * fx;
        const double bot = src.at(y1, x0, c) * (1 - fx) + src.at(y1, x1, c) * fx;
        out.data[(y * width + x) * src.channels + c] = static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  }
  return out;
}

// Grey frames are replicated to RGB.
inline Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out{img.height, img.width, 3, {}};
  out.data.reserve(img.data.size() * 3);
  for (float v : img.data) out.data.insert(out.data.end(), {v, v, v});
  return out;
}

}  // namespace npsnet
