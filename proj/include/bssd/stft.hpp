#pragma once

#include <complex>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/fft.hpp"
#include "bssd/signal.hpp"

namespace bssd {

enum class Window { SqrtHannPeriodic };

struct StftConfig {
  std::size_t fft_size = 1024;
  std::size_t hop = 256;  // 75% overlap
  Window window = Window::SqrtHannPeriodic;

  std::size_t bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (!is_pow2(fft_size)) throw invalid_config("stft: fft_size must be a power of two");
    if (hop == 0 || fft_size % hop != 0 || hop > fft_size)
      throw invalid_config("stft: hop must divide fft_size");
  }
};

// Complex STFT tensor, row-major [L x K x M].
struct Spectrogram {
  std::vector<cd> bins;  // bins[(l*K + k)*M + m]
  std::size_t frames = 0;    // L
  std::size_t bin_count = 0; // K
  std::size_t channels = 0;  // M
  std::size_t fft_size = 0;
  std::size_t hop = 0;
  double sample_rate = kDefaultSampleRate;
  std::size_t signal_length = 0;  // original sample count, for exact istft trim

  Spectrogram() = default;
  Spectrogram(std::size_t l, std::size_t k, std::size_t m)
      : bins(l * k * m, cd{}), frames(l), bin_count(k), channels(m) {}

  cd& at(std::size_t l, std::size_t k, std::size_t m) {
    return bins[(l * bin_count + k) * channels + m];
  }
  cd at(std::size_t l, std::size_t k, std::size_t m) const {
    return bins[(l * bin_count + k) * channels + m];
  }

  double bin_frequency(std::size_t k) const {
    return static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
  }
};

namespace detail {

// Periodic sqrt-Hann; analysis*synthesis = Hann, which satisfies COLA at the
// configured hop (sum = fft_size/hop/2).
inline std::vector<double> sqrt_hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / n));
    w[i] = std::sqrt(hann);
  }
  return w;
}

inline std::vector<double> make_window(const StftConfig& cfg) {
  switch (cfg.window) {
    case Window::SqrtHannPeriodic:
      return sqrt_hann_periodic(cfg.fft_size);
  }
  throw invalid_config("stft: unknown window");
}

}  // namespace detail

// Per-channel forward STFT. The input is zero-padded by fft_size - hop on
// both sides so the round trip is exact on every original sample.
inline Spectrogram stft(const MultiChannelSignal& sig, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t n = sig.frames();
  if (n < cfg.fft_size) throw invalid_input("stft: signal shorter than one frame");

  const std::size_t pad = cfg.fft_size - cfg.hop;
  const std::size_t padded = n + 2 * pad;
  const std::size_t num_frames = (padded - cfg.fft_size) / cfg.hop + 1;
  const std::size_t k_bins = cfg.bins();
  const std::vector<double> window = detail::make_window(cfg);

  Spectrogram spec(num_frames, k_bins, sig.channels);
  spec.fft_size = cfg.fft_size;
  spec.hop = cfg.hop;
  spec.sample_rate = sig.sample_rate;
  spec.signal_length = n;

  for (std::size_t m = 0; m < sig.channels; ++m) {
    std::vector<cd> frame(cfg.fft_size);
    for (std::size_t l = 0; l < num_frames; ++l) {
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(l * cfg.hop) -
                                   static_cast<std::ptrdiff_t>(pad);
      for (std::size_t i = 0; i < cfg.fft_size; ++i) {
        const std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(i);
        const double v =
            (t >= 0 && t < static_cast<std::ptrdiff_t>(n)) ? sig.at(static_cast<std::size_t>(t), m) : 0.0;
        frame[i] = cd(v * window[i], 0.0);
      }
      fft_inplace(frame);
      for (std::size_t k = 0; k < k_bins; ++k) spec.at(l, k, m) = frame[k];
    }
  }
  return spec;
}

// Weighted overlap-add synthesis; inverse of stft for a compatible config.
inline MultiChannelSignal istft(const Spectrogram& spec, const StftConfig& cfg) {
  cfg.validate();
  if (spec.fft_size != cfg.fft_size || spec.hop != cfg.hop)
    throw invalid_config("istft: spectrogram produced with a different config");
  if (spec.bin_count != cfg.bins()) throw invalid_config("istft: bin count mismatch");

  const std::size_t pad = cfg.fft_size - cfg.hop;
  const std::size_t padded = (spec.frames - 1) * cfg.hop + cfg.fft_size;
  const std::size_t n = spec.signal_length > 0 ? spec.signal_length : padded - 2 * pad;
  const std::vector<double> window = detail::make_window(cfg);

  std::vector<double> wsum(padded, 0.0);
  for (std::size_t l = 0; l < spec.frames; ++l)
    for (std::size_t i = 0; i < cfg.fft_size; ++i)
      wsum[l * cfg.hop + i] += window[i] * window[i];

  MultiChannelSignal out(n, spec.channels, spec.sample_rate);
  std::vector<cd> frame(cfg.fft_size);
  std::vector<double> acc(padded);
  for (std::size_t m = 0; m < spec.channels; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t l = 0; l < spec.frames; ++l) {
      for (std::size_t k = 0; k < spec.bin_count; ++k) frame[k] = spec.at(l, k, m);
      for (std::size_t k = 1; k + 1 < spec.bin_count; ++k)
        frame[cfg.fft_size - k] = std::conj(frame[k]);
      fft_inplace(frame, true);
      for (std::size_t i = 0; i < cfg.fft_size; ++i)
        acc[l * cfg.hop + i] += frame[i].real() * window[i];
    }
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t p = t + pad;
      out.at(t, m) = wsum[p] > 0.0 ? acc[p] / wsum[p] : 0.0;
    }
  }
  return out;
}

}  // namespace bssd
