#pragma once

// Deterministic scene builders shared by the unit and acceptance suites.

#include <memory>
#include <vector>

#include "bssd/doa_grid.hpp"
#include "bssd/fft.hpp"
#include "bssd/geometry.hpp"
#include "bssd/localization.hpp"
#include "bssd/rng.hpp"
#include "bssd/signal.hpp"

namespace fixtures {

using bssd::cd;

inline std::vector<double> white_noise(std::size_t n, bssd::Rng& rng) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

// Brickwall band-pass via a full-length FFT; good enough for fixtures.
inline std::vector<double> band_limited_noise(std::size_t n, double lo_hz, double hi_hz,
                                              double fs, bssd::Rng& rng) {
  const std::size_t nfft = bssd::next_pow2(n);
  std::vector<cd> spec(nfft, cd{});
  for (std::size_t i = 0; i < nfft; ++i) spec[i] = cd(rng.normal(), 0.0);
  bssd::fft_inplace(spec);
  for (std::size_t k = 0; k <= nfft / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(nfft);
    if (f < lo_hz || f > hi_hz) {
      spec[k] = cd{};
      if (k > 0 && k < nfft / 2) spec[nfft - k] = cd{};
    }
  }
  bssd::fft_inplace(spec, true);
  std::vector<double> x(n);
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = spec[i].real();
    e += x[i] * x[i];
  }
  const double scale = e > 0.0 ? 1.0 / std::sqrt(e / static_cast<double>(n)) : 1.0;
  for (auto& v : x) v *= scale;
  return x;
}

struct PlaneWaveSource {
  int doa_index = 0;
  double amplitude = 1.0;
  std::vector<double> dry;  // mono source signal
};

struct PlaneWaveScene {
  bssd::MultiChannelSignal mixture;
  std::vector<std::vector<double>> references;  // dry sources, gain applied,
                                                // aligned with the earliest channel
  std::vector<int> doa_indices;
};

// Far-field synthesis straight from the grid delays: channel m of source c
// is the dry signal delayed by tau(d_c, m) (fractional, windowed sinc) and
// scaled. The per-direction minimum delay is zero, so each reference is
// time aligned with its earliest microphone.
inline PlaneWaveScene plane_wave_scene(const std::vector<PlaneWaveSource>& sources,
                                       const bssd::DoaGrid& grid, double fs = 16000.0) {
  if (sources.empty()) throw std::runtime_error("plane_wave_scene: no sources");
  std::size_t t_len = 0;
  for (const auto& s : sources) t_len = std::max(t_len, s.dry.size());

  PlaneWaveScene scene;
  scene.mixture = bssd::MultiChannelSignal(t_len, grid.channels, fs);
  for (const auto& s : sources) {
    scene.doa_indices.push_back(s.doa_index);
    std::vector<double> ref(t_len, 0.0);
    for (std::size_t t = 0; t < s.dry.size(); ++t) ref[t] = s.dry[t] * s.amplitude;
    scene.references.push_back(ref);
    for (std::size_t m = 0; m < grid.channels; ++m) {
      const double delay = grid.delay(static_cast<std::size_t>(s.doa_index), m) * fs;
      const std::vector<double> ch = bssd::delay_signal(ref, delay);
      for (std::size_t t = 0; t < t_len; ++t) scene.mixture.at(t, m) += ch[t];
    }
  }
  return scene;
}

// Well-separated grid indices: greedily picks points at least min_angle
// apart, deterministic in the grid order.
inline std::vector<int> separated_grid_indices(const bssd::DoaGrid& grid, std::size_t count,
                                               double min_angle_rad, bssd::Rng& rng) {
  std::vector<int> picked;
  for (int attempt = 0; attempt < 4096 && picked.size() < count; ++attempt) {
    const int d = static_cast<int>(rng.uniform_int(grid.d_count));
    bool ok = true;
    for (int p : picked) {
      if (bssd::angular_distance(grid.points[static_cast<std::size_t>(d)],
                                 grid.points[static_cast<std::size_t>(p)]) < min_angle_rad) {
        ok = false;
        break;
      }
    }
    if (ok) picked.push_back(d);
  }
  if (picked.size() < count)
    throw std::runtime_error("separated_grid_indices: could not place sources");
  return picked;
}

inline std::shared_ptr<bssd::ReferenceMatchEmbedder> oracle_embedder(
    const PlaneWaveScene& scene, std::size_t dim = 100) {
  return std::make_shared<bssd::ReferenceMatchEmbedder>(scene.references, dim);
}

}  // namespace fixtures
