#pragma once

#include <optional>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/doa_grid.hpp"
#include "bssd/geometry.hpp"
#include "bssd/rir.hpp"
#include "bssd/rng.hpp"

namespace bssd {

enum class AbsorptionModel { Eyring, Sabine };

// Shoebox room description. Positions are absolute room coordinates; the
// array geometry is translated so its centroid lands on array_position.
struct RoomSpec {
  Vec3 dimensions{5.0, 4.0, 3.0};
  double rt60_target = 0.3;
  Vec3 source_position{1.0, 1.0, 1.5};
  Vec3 array_position{2.5, 2.0, 1.2};
  std::optional<int> max_order;  // unset: derived from rt60 and room size
  AbsorptionModel absorption = AbsorptionModel::Sabine;
  double sample_rate = kDefaultSampleRate;
  std::uint64_t seed = 0;
};

// Uniform wall absorption for the requested decay, Sabine's closed form
// alpha = 0.161 V / (S RT60) by default. The specular image model decays
// slower than the diffuse-field prediction (axial image chains reflect
// least), which Sabine's overshoot against Eyring compensates; inverting
// Eyring exactly leaves the measured decay ~25-40% long.
inline double wall_absorption(const Vec3& dims, double rt60, AbsorptionModel model) {
  const double volume = dims[0] * dims[1] * dims[2];
  const double surface =
      2.0 * (dims[0] * dims[1] + dims[0] * dims[2] + dims[1] * dims[2]);
  if (rt60 <= 0.0) throw invalid_input("wall_absorption: rt60 must be positive");
  const double sabine = 0.161 * volume / (surface * rt60);
  double alpha = model == AbsorptionModel::Sabine ? sabine : 1.0 - std::exp(-sabine);
  return std::max(1e-6, std::min(0.99, alpha));
}

inline int default_max_order(const RoomSpec& spec) {
  const double min_dim = std::min({spec.dimensions[0], spec.dimensions[1], spec.dimensions[2]});
  const int order = static_cast<int>(std::ceil(kSpeedOfSound * spec.rt60_target / min_dim));
  return std::min(40, std::max(0, order));
}

namespace detail {

inline void check_inside(const Vec3& p, const Vec3& dims, const char* what) {
  for (int i = 0; i < 3; ++i)
    if (p[i] <= 0.0 || p[i] >= dims[i])
      throw invalid_input(std::string("simulate_rir: ") + what + " outside the room");
}

}  // namespace detail

// Image source method for a shoebox room: mirrors the source across the six
// walls up to max_order reflections, each arrival attenuated by
// beta^order / (4 pi dist) and placed with the windowed-sinc interpolator.
inline RoomImpulseResponse simulate_rir(const RoomSpec& spec, const ArrayGeometry& geo) {
  geo.validate();
  detail::check_inside(spec.source_position, spec.dimensions, "source");
  detail::check_inside(spec.array_position, spec.dimensions, "array");
  if (spec.max_order && *spec.max_order < 0)
    throw invalid_input("simulate_rir: max_order must be >= 0");

  const int order_cap = spec.max_order ? *spec.max_order : default_max_order(spec);
  const double fs = spec.sample_rate;
  const double c = geo.speed_of_sound;
  const double beta = std::sqrt(1.0 - wall_absorption(spec.dimensions, spec.rt60_target,
                                                      spec.absorption));

  const Vec3 centroid = geo.centroid();
  std::vector<Vec3> mics(geo.channels());
  double max_direct = 0.0;
  for (std::size_t m = 0; m < geo.channels(); ++m) {
    mics[m] = spec.array_position + (geo.positions[m] - centroid);
    detail::check_inside(mics[m], spec.dimensions, "microphone");
    max_direct = std::max(max_direct, norm(spec.source_position - mics[m]));
  }

  const double tail = order_cap > 0 ? spec.rt60_target * 1.25 : 0.0;
  const std::size_t length =
      static_cast<std::size_t>(std::ceil(fs * (max_direct / c + tail))) + 2 * kSincHalfWidth + 2;
  RoomImpulseResponse rir(length, geo.channels(), fs);

  const double max_dist = c * static_cast<double>(length) / fs;
  int range[3];
  for (int i = 0; i < 3; ++i)
    range[i] = static_cast<int>(std::ceil(max_dist / (2.0 * spec.dimensions[i]))) + 1;

  // Images are accumulated into per-slab buffers (fixed slab boundaries over
  // the x image index) merged in slab order, so the result is independent of
  // the thread count.
  const int nx = 2 * range[0] + 1;
  const int n_slabs = std::min(16, nx);
  std::vector<std::vector<double>> slab_taps(static_cast<std::size_t>(n_slabs));
  for (auto& s : slab_taps) s.assign(rir.taps.size(), 0.0);

  parallel_for(0, n_slabs, [&](std::int64_t slab_lo, std::int64_t slab_hi) {
    for (std::int64_t slab = slab_lo; slab < slab_hi; ++slab) {
      std::vector<double>& taps = slab_taps[static_cast<std::size_t>(slab)];
      const int mx_begin = -range[0] + static_cast<int>(slab) * nx / n_slabs;
      const int mx_end = -range[0] + static_cast<int>(slab + 1) * nx / n_slabs;
      for (int mx = mx_begin; mx < mx_end; ++mx) {
        for (int my = -range[1]; my <= range[1]; ++my) {
          for (int mz = -range[2]; mz <= range[2]; ++mz) {
            for (int q = 0; q <= 1; ++q) {
              for (int j = 0; j <= 1; ++j) {
                for (int kk = 0; kk <= 1; ++kk) {
                  const int order = std::abs(2 * mx - q) + std::abs(2 * my - j) +
                                    std::abs(2 * mz - kk);
                  if (order > order_cap) continue;
                  const Vec3 img = {
                      (1 - 2 * q) * spec.source_position[0] + 2.0 * mx * spec.dimensions[0],
                      (1 - 2 * j) * spec.source_position[1] + 2.0 * my * spec.dimensions[1],
                      (1 - 2 * kk) * spec.source_position[2] + 2.0 * mz * spec.dimensions[2]};
                  const double refl = std::pow(beta, static_cast<double>(order));
                  for (std::size_t m = 0; m < mics.size(); ++m) {
                    const double dist = norm(img - mics[m]);
                    const double t_arr = dist * fs / c;
                    const auto t0 = static_cast<std::ptrdiff_t>(std::floor(t_arr));
                    if (t0 - kSincHalfWidth >= static_cast<std::ptrdiff_t>(rir.length()))
                      continue;
                    const double gain = refl / (4.0 * kPi * std::max(dist, 1e-3));
                    for (std::ptrdiff_t t = t0 - kSincHalfWidth;
                         t <= t0 + kSincHalfWidth + 1; ++t) {
                      if (t < 0 || t >= static_cast<std::ptrdiff_t>(rir.length())) continue;
                      taps[static_cast<std::size_t>(t) * mics.size() + m] +=
                          gain * windowed_sinc_tap(static_cast<double>(t) - t_arr);
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
  });

  for (const auto& s : slab_taps)
    for (std::size_t i = 0; i < rir.taps.size(); ++i) rir.taps[i] += s[i];
  return rir;
}

// Virtual array rotation: circular permutation of the channel columns.
inline RoomImpulseResponse rotate_channels(const RoomImpulseResponse& rir, int steps) {
  const int m_ch = static_cast<int>(rir.channels);
  const int s = ((steps % m_ch) + m_ch) % m_ch;
  RoomImpulseResponse out = rir;
  if (s == 0) return out;
  for (std::size_t t = 0; t < rir.length(); ++t)
    for (int m = 0; m < m_ch; ++m) out.at(t, static_cast<std::size_t>(m)) =
        rir.at(t, static_cast<std::size_t>((m + s) % m_ch));
  out.doa_label.reset();
  return out;
}

// Stamps the GCC-PHAT DOA label onto a copy of the RIR.
inline RoomImpulseResponse label_doa(const RoomImpulseResponse& rir, const DoaGrid& grid) {
  RoomImpulseResponse out = rir;
  out.doa_label = assign_doa(rir, grid);
  return out;
}

// Backward-integrated energy decay curve in dB, summed over channels.
inline std::vector<double> schroeder_decay_db(const RoomImpulseResponse& rir) {
  const std::size_t n = rir.length();
  std::vector<double> decay(n, 0.0);
  double acc = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    double e = 0.0;
    for (std::size_t m = 0; m < rir.channels; ++m) e += rir.at(t, m) * rir.at(t, m);
    acc += e;
    decay[t] = acc;
  }
  const double total = acc > 0.0 ? acc : 1.0;
  for (auto& v : decay) v = 10.0 * std::log10(std::max(v / total, 1e-30));
  return decay;
}

// RT60 from a least-squares line through the decay between -10 and -40 dB;
// the first 10 dB are skipped so the direct sound does not steepen the fit.
inline std::optional<double> schroeder_rt60(const RoomImpulseResponse& rir) {
  const std::vector<double> decay = schroeder_decay_db(rir);
  std::size_t t_hi = 0, t_lo = 0;
  for (std::size_t t = 0; t < decay.size(); ++t) {
    if (t_hi == 0 && decay[t] <= -10.0) t_hi = t;
    if (decay[t] <= -40.0) {
      t_lo = t;
      break;
    }
  }
  if (t_lo <= t_hi + 8) return std::nullopt;

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const auto n = static_cast<double>(t_lo - t_hi + 1);
  for (std::size_t t = t_hi; t <= t_lo; ++t) {
    const auto x = static_cast<double>(t);
    sx += x;
    sy += decay[t];
    sxx += x * x;
    sxy += x * decay[t];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);  // dB per sample
  if (slope >= 0.0) return std::nullopt;
  return -60.0 / slope / rir.sample_rate;
}

// Random shoebox draw used by fixtures and the CLI: dimensions in [3,6] m,
// RT60 in [0.2,0.4] s, array near the room center, source at >= 1 m from
// the array with wall clearance.
inline RoomSpec random_room_spec(Rng& rng) {
  RoomSpec spec;
  for (int i = 0; i < 3; ++i) spec.dimensions[i] = rng.uniform(3.0, 6.0);
  spec.rt60_target = rng.uniform(0.2, 0.4);
  spec.array_position = {spec.dimensions[0] * rng.uniform(0.4, 0.6),
                         spec.dimensions[1] * rng.uniform(0.4, 0.6),
                         rng.uniform(1.0, 1.4)};
  for (int attempt = 0; attempt < 256; ++attempt) {
    Vec3 p = {rng.uniform(0.5, spec.dimensions[0] - 0.5),
              rng.uniform(0.5, spec.dimensions[1] - 0.5),
              rng.uniform(0.5, std::min(spec.dimensions[2] - 0.5, 2.2))};
    const double d = norm(p - spec.array_position);
    if (d >= 1.0 && d <= 2.5) {
      spec.source_position = p;
      break;
    }
  }
  return spec;
}

}  // namespace bssd
