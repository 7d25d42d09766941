#pragma once

// RIFF/WAVE, PCM format tag 1, 16-bit little-endian samples, any channel
// count (downmixed by channel mean). Samples are scaled by 1/32768.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "npsnet/core/checkpoint.hpp"
#include "npsnet/core/errors.hpp"
#include "npsnet/model/encoders.hpp"

namespace npsnet {

namespace detail {

inline std::uint32_t le32(const std::string& b, std::size_t pos) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 3])) << 24;
}
inline std::uint16_t le16(const std::string& b, std::size_t pos) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[pos]) | static_cast<unsigned char>(b[pos + 1]) << 8);
}
inline void put16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}
inline void put32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

inline Waveform decode_wav(const std::string& b, const std::string& what = "wav") {
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0)
    throw FormatError(what + ": not a RIFF/WAVE file");
  std::size_t pos = 12;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::uint32_t len = detail::le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > b.size()) throw FormatError(what + ": chunk '" + id + "' runs past end of file");
    if (id == "fmt ") {
      if (len < 16) throw FormatError(what + ": fmt chunk too short");
      const std::uint16_t tag = detail::le16(b, body);
      channels = detail::le16(b, body + 2);
      rate = detail::le32(b, body + 4);
      bits = detail::le16(b, body + 14);
      if (tag != 1) throw FormatError(what + ": only PCM (format tag 1) is supported, got " + std::to_string(tag));
      if (bits != 16) throw FormatError(what + ": only 16-bit samples are supported, got " + std::to_string(bits));
      if (channels == 0 || rate == 0) throw FormatError(what + ": zero channels or sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(what + ": data chunk before fmt chunk");
      const std::size_t frames = len / (2u * channels);
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0;
        for (std::size_t c = 0; c < channels; ++c)
          acc += static_cast<std::int16_t>(detail::le16(b, body + 2 * (i * channels + c))) / 32768.0;
        w.samples[i] = acc / channels;
      }
      return w;
    }
    pos = body + len + (len & 1u);
  }
  throw FormatError(what + ": no data chunk");
}

inline Waveform read_wav(const std::filesystem::path& path) { return decode_wav(detail::read_file_bytes(path), path.string()); }

// Mono 16-bit PCM; samples are clamped to [-1, 1).
inline std::string encode_wav(const Waveform& w) {
  std::string b = "RIFF";
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  detail::put32(b, 36 + data_len);
  b += "WAVEfmt ";
  detail::put32(b, 16);
  detail::put16(b, 1);
  detail::put16(b, 1);
  detail::put32(b, static_cast<std::uint32_t>(w.sample_rate));
  detail::put32(b, static_cast<std::uint32_t>(w.sample_rate * 2));
  detail::put16(b, 2);
  detail::put16(b, 16);
  b += "data";
  detail::put32(b, data_len);
  for (double s : w.samples) {
    const long v = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
    detail::put16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(v, -32768L, 32767L))));
  }
  return b;
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w) { detail::write_file_bytes(path, encode_wav(w)); }

// Linear interpolation onto a new rate; sample i sits at time i / rate.
inline Waveform resample_linear(const Waveform& w, std::size_t rate) {
  if (rate == 0) throw ConfigError("target sample rate must be positive");
  if (w.sample_rate == rate || w.samples.empty()) return {w.samples, rate};
  const double ratio = static_cast<double>(w.sample_rate) / static_cast<double>(rate);
  const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(w.samples.size() - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate = rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) * ratio;
    const auto i0 = std::min(static_cast<std::size_t>(s), w.samples.size() - 1);
    const auto i1 = std::min(i0 + 1, w.samples.size() - 1);
    const double f = s - static_cast<double>(i0);
    out.samples[i] = w.samples[i0] * (1 - f) + w.samples[i1] * f;
  }
  return out;
}

}  // namespace npsnet
