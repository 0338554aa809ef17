#pragma once

#include <optional>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/signal.hpp"

namespace bssd {

// Multichannel room impulse response, row-major [T_rir x M].
struct RoomImpulseResponse {
  std::vector<double> taps;  // taps[t*channels + m]
  std::size_t channels = 1;
  double sample_rate = kDefaultSampleRate;
  std::optional<int> doa_label;

  RoomImpulseResponse() = default;
  RoomImpulseResponse(std::size_t length, std::size_t n_channels, double fs = kDefaultSampleRate)
      : taps(length * n_channels, 0.0), channels(n_channels), sample_rate(fs) {}

  std::size_t length() const { return channels == 0 ? 0 : taps.size() / channels; }
  double& at(std::size_t t, std::size_t m) { return taps[t * channels + m]; }
  double at(std::size_t t, std::size_t m) const { return taps[t * channels + m]; }

  std::vector<double> channel(std::size_t m) const {
    std::vector<double> out(length());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = at(t, m);
    return out;
  }

  double total_energy() const {
    double e = 0.0;
    for (double v : taps) e += v * v;
    return e;
  }
};

// Spatializes a mono source: output channel m = source (*) rir channel m.
// Same (default) truncates to the source length to keep mixture/reference
// alignment; Full yields T + T_rir - 1 samples.
inline MultiChannelSignal convolve_rir(const MultiChannelSignal& source,
                                       const RoomImpulseResponse& rir,
                                       ConvLength mode = ConvLength::Same) {
  if (source.channels != 1) throw invalid_input("convolve_rir: source must be single-channel");
  if (rir.length() == 0 || source.frames() == 0) throw invalid_input("convolve_rir: empty input");
  const std::size_t t_out =
      mode == ConvLength::Same ? source.frames() : source.frames() + rir.length() - 1;
  MultiChannelSignal out(t_out, rir.channels, source.sample_rate);
  for (std::size_t m = 0; m < rir.channels; ++m) {
    const std::vector<double> y = convolve(source.samples, rir.channel(m));
    for (std::size_t t = 0; t < t_out; ++t) out.at(t, m) = y[t];
  }
  return out;
}

}  // namespace bssd
