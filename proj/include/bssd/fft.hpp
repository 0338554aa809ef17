#pragma once

#include <complex>
#include <vector>

#include "bssd/common.hpp"

namespace bssd {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT. Forward: X[k] = sum_n x[n] e^{-i2pi nk/N}.
// Inverse applies the 1/N scale.
inline void fft_inplace(std::vector<cd>& x, bool inverse = false) {
  const std::size_t n = x.size();
  if (!is_pow2(n)) throw invalid_config("fft size must be a power of two");
  if (n <= 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const cd wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cd u = x[i + j];
        const cd v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double s = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= s;
  }
}

inline std::vector<cd> fft(std::vector<cd> x) {
  fft_inplace(x, false);
  return x;
}

inline std::vector<cd> ifft(std::vector<cd> x) {
  fft_inplace(x, true);
  return x;
}

// Forward FFT of a real signal zero-padded to n; returns the n/2+1 one-sided bins.
inline std::vector<cd> rfft(const std::vector<double>& x, std::size_t n) {
  std::vector<cd> buf(n, cd(0.0, 0.0));
  const std::size_t m = std::min(n, x.size());
  for (std::size_t i = 0; i < m; ++i) buf[i] = cd(x[i], 0.0);
  fft_inplace(buf, false);
  buf.resize(n / 2 + 1);
  return buf;
}

// Inverse of rfft: Hermitian-extends the one-sided bins and returns the real part.
inline std::vector<double> irfft(const std::vector<cd>& bins, std::size_t n) {
  if (bins.size() != n / 2 + 1) throw invalid_config("irfft: bin count must be n/2+1");
  std::vector<cd> buf(n);
  for (std::size_t k = 0; k < bins.size(); ++k) buf[k] = bins[k];
  for (std::size_t k = 1; k + 1 < bins.size(); ++k) buf[n - k] = std::conj(bins[k]);
  fft_inplace(buf, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
  return out;
}

}  // namespace bssd
