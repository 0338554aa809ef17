#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/stft.hpp"

namespace bssd {

namespace detail {

inline void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u32le(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  write_bytes(f, b, 4);
}

inline void write_f64le(std::ofstream& f, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  write_bytes(f, b, 8);
}

inline std::uint32_t read_u32le(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw invalid_input("container: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double read_f64le(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  if (!f) throw invalid_input("container: truncated file");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace detail

// Spectrogram container: magic "BSSD", u32 L, K, M, then L*K*M f64 pairs
// (re, im) in row-major (l,k,m) order. Little-endian throughout.
inline void save_spectrogram(const std::string& path, const Spectrogram& spec) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw invalid_input("save_spectrogram: cannot open " + path);
  f.write("BSSD", 4);
  detail::write_u32le(f, static_cast<std::uint32_t>(spec.frames));
  detail::write_u32le(f, static_cast<std::uint32_t>(spec.bin_count));
  detail::write_u32le(f, static_cast<std::uint32_t>(spec.channels));
  for (const cd& v : spec.bins) {
    detail::write_f64le(f, v.real());
    detail::write_f64le(f, v.imag());
  }
}

inline Spectrogram load_spectrogram(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw invalid_input("load_spectrogram: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "BSSD", 4) != 0)
    throw invalid_input("load_spectrogram: bad magic in " + path);
  const std::uint32_t l = detail::read_u32le(f);
  const std::uint32_t k = detail::read_u32le(f);
  const std::uint32_t m = detail::read_u32le(f);
  Spectrogram spec(l, k, m);
  for (cd& v : spec.bins) {
    const double re = detail::read_f64le(f);
    const double im = detail::read_f64le(f);
    v = cd(re, im);
  }
  return spec;
}

// Generic tensor container for weights, kernels, maps and embedding sets:
// magic "BSST", u32 dtype (0 = f64, 1 = complex f64), u32 rank, u32 dims[rank],
// then the payload in row-major order (complex as re,im pairs).
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> real;
  std::vector<cd> complex_data;
  bool is_complex = false;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
};

inline void save_tensor(const std::string& path, const Tensor& t) {
  if (t.element_count() != (t.is_complex ? t.complex_data.size() : t.real.size()))
    throw invalid_input("save_tensor: dims do not match payload size");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw invalid_input("save_tensor: cannot open " + path);
  f.write("BSST", 4);
  detail::write_u32le(f, t.is_complex ? 1u : 0u);
  detail::write_u32le(f, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) detail::write_u32le(f, d);
  if (t.is_complex) {
    for (const cd& v : t.complex_data) {
      detail::write_f64le(f, v.real());
      detail::write_f64le(f, v.imag());
    }
  } else {
    for (double v : t.real) detail::write_f64le(f, v);
  }
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw invalid_input("load_tensor: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "BSST", 4) != 0)
    throw invalid_input("load_tensor: bad magic in " + path);
  Tensor t;
  t.is_complex = detail::read_u32le(f) == 1u;
  const std::uint32_t rank = detail::read_u32le(f);
  if (rank > 8) throw invalid_input("load_tensor: implausible rank");
  t.dims.resize(rank);
  for (auto& d : t.dims) d = detail::read_u32le(f);
  const std::size_t n = t.element_count();
  if (t.is_complex) {
    t.complex_data.resize(n);
    for (cd& v : t.complex_data) {
      const double re = detail::read_f64le(f);
      const double im = detail::read_f64le(f);
      v = cd(re, im);
    }
  } else {
    t.real.resize(n);
    for (double& v : t.real) v = detail::read_f64le(f);
  }
  return t;
}

}  // namespace bssd
