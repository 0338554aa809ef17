#pragma once

#include <complex>
#include <fstream>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/container.hpp"
#include "bssd/fft.hpp"
#include "bssd/geometry.hpp"
#include "bssd/rir.hpp"

namespace bssd {

// Fibonacci spiral on the upper half sphere: azimuth phi_d = g*d with the
// golden angle g = pi(3 - sqrt(5)), elevation theta_d = arcsin((d-1)/(D-1))
// for d = 1..D. The (d-1) keeps the ramp inside the arcsin domain while
// still covering [0, 90] degrees.
inline std::vector<Vec3> fibonacci_hemisphere(std::size_t d_count) {
  if (d_count < 2) throw invalid_input("fibonacci_hemisphere: need D >= 2");
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> pts(d_count);
  for (std::size_t d = 1; d <= d_count; ++d) {
    const double phi = golden * static_cast<double>(d);
    const double theta = std::asin(static_cast<double>(d - 1) / static_cast<double>(d_count - 1));
    pts[d - 1] = {std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi),
                  std::sin(theta)};
  }
  return pts;
}

// Plane-wave delays from sphere point to each microphone, Eq-style Euclidean
// distance over c, shifted so the earliest channel per direction is zero
// (keeps the time-domain adaption kernels causal).
inline std::vector<double> direction_delays(const Vec3& point, const ArrayGeometry& geo) {
  const Vec3 c = geo.centroid();
  std::vector<double> tau(geo.channels());
  double tmin = 0.0;
  for (std::size_t m = 0; m < geo.channels(); ++m) {
    const Vec3 p = {c[0] + point[0], c[1] + point[1], c[2] + point[2]};
    tau[m] = norm(p - geo.positions[m]) / geo.speed_of_sound;
    tmin = m == 0 ? tau[m] : std::min(tmin, tau[m]);
  }
  for (auto& t : tau) t -= tmin;
  return tau;
}

// D hemisphere points with per-point delays and unit-magnitude steering
// vectors V(d,k,m) = exp(-i 2 pi f_k tau_{d,m}).
struct DoaGrid {
  std::vector<Vec3> points;          // [D]
  std::vector<double> delays;        // [D x M] seconds, min-subtracted per d
  std::vector<cd> steering;          // [D x K x M]
  std::size_t d_count = 0;
  std::size_t bin_count = 0;
  std::size_t channels = 0;
  std::size_t fft_size = 0;
  double sample_rate = kDefaultSampleRate;

  double delay(std::size_t d, std::size_t m) const { return delays[d * channels + m]; }
  cd steer(std::size_t d, std::size_t k, std::size_t m) const {
    return steering[(d * bin_count + k) * channels + m];
  }
  double bin_frequency(std::size_t k) const {
    return static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
  }
};

inline DoaGrid make_doa_grid(std::size_t d_count, const ArrayGeometry& geo,
                             std::size_t fft_size = 1024,
                             double sample_rate = kDefaultSampleRate) {
  geo.validate();
  DoaGrid grid;
  grid.points = fibonacci_hemisphere(d_count);
  grid.d_count = d_count;
  grid.channels = geo.channels();
  grid.fft_size = fft_size;
  grid.bin_count = fft_size / 2 + 1;
  grid.sample_rate = sample_rate;
  grid.delays.resize(d_count * grid.channels);
  grid.steering.resize(d_count * grid.bin_count * grid.channels);
  for (std::size_t d = 0; d < d_count; ++d) {
    const std::vector<double> tau = direction_delays(grid.points[d], geo);
    for (std::size_t m = 0; m < grid.channels; ++m) grid.delays[d * grid.channels + m] = tau[m];
    for (std::size_t k = 0; k < grid.bin_count; ++k) {
      const double fk = grid.bin_frequency(k);
      for (std::size_t m = 0; m < grid.channels; ++m) {
        const double phase = -2.0 * kPi * fk * tau[m];
        grid.steering[(d * grid.bin_count + k) * grid.channels + m] =
            cd(std::cos(phase), std::sin(phase));
      }
    }
  }
  return grid;
}

// Grid export: steering as a complex [D x K x M] tensor next to a JSON-style
// sidecar holding points, delays and the construction parameters.
inline void save_grid(const std::string& path, const DoaGrid& grid) {
  Tensor t;
  t.is_complex = true;
  t.dims = {static_cast<std::uint32_t>(grid.d_count), static_cast<std::uint32_t>(grid.bin_count),
            static_cast<std::uint32_t>(grid.channels)};
  t.complex_data = grid.steering;
  save_tensor(path, t);

  std::ofstream side(path + ".json", std::ios::trunc);
  if (!side) throw invalid_input("save_grid: cannot open " + path + ".json");
  side.precision(17);
  side << "{\n  \"fft_size\": " << grid.fft_size << ",\n  \"sample_rate\": " << grid.sample_rate
       << ",\n  \"points\": [";
  for (std::size_t d = 0; d < grid.d_count; ++d) {
    side << (d ? ", " : "") << "[" << grid.points[d][0] << ", " << grid.points[d][1] << ", "
         << grid.points[d][2] << "]";
  }
  side << "],\n  \"delays\": [";
  for (std::size_t d = 0; d < grid.d_count; ++d) {
    side << (d ? ", " : "") << "[";
    for (std::size_t m = 0; m < grid.channels; ++m)
      side << (m ? ", " : "") << grid.delay(d, m);
    side << "]";
  }
  side << "]\n}\n";
}

inline double angular_distance(const Vec3& a, const Vec3& b) {
  double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  dot = std::max(-1.0, std::min(1.0, dot));
  return std::acos(dot);
}

// Mean over grid points of the angular distance to the nearest other point.
inline double mean_nearest_neighbor_angle(const std::vector<Vec3>& pts) {
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = 2.0 * kPi;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      best = std::min(best, angular_distance(pts[i], pts[j]));
    }
    total += best;
  }
  return total / static_cast<double>(pts.size());
}

inline double max_nearest_neighbor_angle(const std::vector<Vec3>& pts) {
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = 2.0 * kPi;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      best = std::min(best, angular_distance(pts[i], pts[j]));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

// GCC-PHAT assignment per the matched-filter score
//   sum_k |H^H(k) V(d,k)|^2 / |H(k)|^2
// (argmax over d, lowest index on ties; zero-energy bins contribute 0).
// The RIR is transformed with an FFT of the next power of two >= its
// length, at least the grid's own fft_size; steering phases are rebuilt
// from the stored delays at that resolution.
inline int assign_doa(const RoomImpulseResponse& rir, const DoaGrid& grid) {
  if (rir.channels != grid.channels) throw invalid_input("assign_doa: channel count mismatch");
  if (rir.total_energy() <= 0.0) throw invalid_input("assign_doa: all-zero RIR");

  const std::size_t n = std::max<std::size_t>(grid.fft_size, next_pow2(rir.length()));
  std::vector<std::vector<cd>> spectra(rir.channels);
  for (std::size_t m = 0; m < rir.channels; ++m) spectra[m] = rfft(rir.channel(m), n);

  const std::size_t k_bins = n / 2 + 1;
  int best = 0;
  double best_score = -1.0;
  for (std::size_t d = 0; d < grid.d_count; ++d) {
    double score = 0.0;
    for (std::size_t k = 0; k < k_bins; ++k) {
      const double fk = static_cast<double>(k) * rir.sample_rate / static_cast<double>(n);
      cd acc(0.0, 0.0);
      double denom = 0.0;
      for (std::size_t m = 0; m < rir.channels; ++m) {
        const double phase = -2.0 * kPi * fk * grid.delay(d, m);
        acc += std::conj(spectra[m][k]) * cd(std::cos(phase), std::sin(phase));
        denom += std::norm(spectra[m][k]);
      }
      if (denom > 0.0) score += std::norm(acc) / denom;
    }
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(d);
    }
  }
  return best;
}

}  // namespace bssd
