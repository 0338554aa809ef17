#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/signal.hpp"

namespace bssd {

enum class WavFormat { Pcm16, Float32 };

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// RIFF/WAVE writer; 16-bit PCM or 32-bit IEEE float, interleaved channels.
inline void write_wav(const std::string& path, const MultiChannelSignal& sig,
                      WavFormat fmt = WavFormat::Float32) {
  const std::size_t frames = sig.frames();
  const std::uint16_t channels = static_cast<std::uint16_t>(sig.channels);
  const std::uint32_t rate = static_cast<std::uint32_t>(sig.sample_rate);
  const std::uint16_t bytes_per_sample = fmt == WavFormat::Pcm16 ? 2 : 4;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(frames * channels * bytes_per_sample);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, fmt == WavFormat::Pcm16 ? 1 : 3);
  detail::put_u16(out, channels);
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * channels * bytes_per_sample);
  detail::put_u16(out, static_cast<std::uint16_t>(channels * bytes_per_sample));
  detail::put_u16(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  out += "data";
  detail::put_u32(out, data_bytes);

  for (double v : sig.samples) {
    if (fmt == WavFormat::Pcm16) {
      double c = std::max(-1.0, std::min(1.0, v));
      const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
      detail::put_u16(out, static_cast<std::uint16_t>(q));
    } else {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      detail::put_u32(out, bits);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw invalid_input("write_wav: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// Reads 16-bit PCM or 32-bit float RIFF/WAVE (plain or extensible header);
// unknown chunks are skipped.
inline MultiChannelSignal read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw invalid_input("read_wav: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw invalid_input("read_wav: not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t chunk_len = detail::get_u32(buf.data() + pos + 4);
    const unsigned char* chunk = buf.data() + pos + 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = detail::get_u16(chunk);
      channels = detail::get_u16(chunk + 2);
      rate = detail::get_u32(chunk + 4);
      bits = detail::get_u16(chunk + 14);
      if (format == 0xfffe && chunk_len >= 40) format = detail::get_u16(chunk + 24);
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<std::size_t>(chunk_len, buf.size() - data_off);
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (channels == 0 || data_off == 0) throw invalid_input("read_wav: missing fmt/data chunk");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) throw invalid_input("read_wav: unsupported format (need pcm16 or float32)");

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t n_samples = data_len / bytes_per_sample;
  MultiChannelSignal sig(n_samples / channels, channels, static_cast<double>(rate));
  for (std::size_t i = 0; i < sig.samples.size(); ++i) {
    const unsigned char* p = buf.data() + data_off + i * bytes_per_sample;
    if (pcm16) {
      const auto q = static_cast<std::int16_t>(detail::get_u16(p));
      sig.samples[i] = static_cast<double>(q) / 32767.0;
    } else {
      const std::uint32_t b = detail::get_u32(p);
      float v;
      std::memcpy(&v, &b, 4);
      sig.samples[i] = static_cast<double>(v);
    }
  }
  return sig;
}

}  // namespace bssd
