#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/fft.hpp"

namespace bssd {

// Time-domain sample matrix, row-major [T x M]. Carrier for mixtures,
// per-source images and enhanced outputs.
struct MultiChannelSignal {
  std::vector<double> samples;  // samples[t*channels + m]
  std::size_t channels = 1;
  double sample_rate = kDefaultSampleRate;

  MultiChannelSignal() = default;
  MultiChannelSignal(std::size_t frames, std::size_t n_channels, double fs = kDefaultSampleRate)
      : samples(frames * n_channels, 0.0), channels(n_channels), sample_rate(fs) {}

  std::size_t frames() const { return channels == 0 ? 0 : samples.size() / channels; }
  double& at(std::size_t t, std::size_t m) { return samples[t * channels + m]; }
  double at(std::size_t t, std::size_t m) const { return samples[t * channels + m]; }

  std::vector<double> channel(std::size_t m) const {
    std::vector<double> out(frames());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = at(t, m);
    return out;
  }

  static MultiChannelSignal mono(std::vector<double> x, double fs = kDefaultSampleRate) {
    MultiChannelSignal s;
    s.samples = std::move(x);
    s.channels = 1;
    s.sample_rate = fs;
    return s;
  }
};

inline double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Linear convolution of two real sequences. Uses a single FFT block once the
// kernel is long enough to pay for it; both paths agree to ~1e-13.
inline std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty()) return {};
  const std::size_t n_out = x.size() + h.size() - 1;
  if (h.size() <= 64 || x.size() <= 64) {
    std::vector<double> y(n_out, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += xi * h[j];
    }
    return y;
  }
  const std::size_t n = next_pow2(n_out);
  std::vector<cd> a(n, cd{}), b(n, cd{});
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = cd(x[i], 0.0);
  for (std::size_t j = 0; j < h.size(); ++j) b[j] = cd(h[j], 0.0);
  fft_inplace(a);
  fft_inplace(b);
  for (std::size_t i = 0; i < n; ++i) a[i] *= b[i];
  fft_inplace(a, true);
  std::vector<double> y(n_out);
  for (std::size_t i = 0; i < n_out; ++i) y[i] = a[i].real();
  return y;
}

enum class ConvLength { Same, Full };

// Elementwise sum of sources; shorter inputs are zero-padded to the longest.
// Summation order is fixed (source index ascending).
inline MultiChannelSignal mix(const std::vector<MultiChannelSignal>& sources) {
  if (sources.empty()) throw invalid_input("mix: empty source list");
  const std::size_t m = sources.front().channels;
  std::size_t frames = 0;
  for (const auto& s : sources) {
    if (s.channels != m) throw invalid_input("mix: channel-count mismatch");
    frames = std::max(frames, s.frames());
  }
  MultiChannelSignal out(frames, m, sources.front().sample_rate);
  for (const auto& s : sources) {
    const std::size_t n = s.samples.size();
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += s.samples[i];
  }
  return out;
}

// 81-tap Hann-windowed sinc interpolator; shared by the room simulator and
// the plane-wave scene builders.
inline constexpr int kSincHalfWidth = 40;

// Kernel value at integer tap position n for a filter realizing a delay of
// `delay` samples: h(n) = w(n - delay) * sinc(pi (n - delay)).
inline double windowed_sinc_tap(double n_minus_delay) {
  if (std::abs(n_minus_delay) > kSincHalfWidth + 0.5) return 0.0;
  const double w = 0.5 * (1.0 + std::cos(kPi * n_minus_delay / (kSincHalfWidth + 1)));
  return w * sinc(kPi * n_minus_delay);
}

// Delays a mono signal by a (possibly fractional) number of samples, output
// aligned with the input timeline (same length; edges truncate).
inline std::vector<double> delay_signal(const std::vector<double>& x, double delay_samples) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> y(x.size(), 0.0);
  const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(std::floor(delay_samples));
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::ptrdiff_t k = base - kSincHalfWidth; k <= base + kSincHalfWidth + 1; ++k) {
      const std::ptrdiff_t src = t - k;
      if (src < 0 || src >= n) continue;
      acc += x[src] * windowed_sinc_tap(static_cast<double>(k) - delay_samples);
    }
    y[t] = acc;
  }
  return y;
}

}  // namespace bssd
