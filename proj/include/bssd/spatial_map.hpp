#pragma once

#include <vector>

#include "bssd/common.hpp"
#include "bssd/container.hpp"
#include "bssd/doa_grid.hpp"
#include "bssd/stft.hpp"
#include "bssd/whitening.hpp"

namespace bssd {

enum class MapKind { Raw, Whitened, Weighted };

// Spatial speech presence probability map over frames, bins and directions.
struct SpatialMap {
  std::vector<double> values;  // [L x K x D]
  std::size_t frames = 0;
  std::size_t bin_count = 0;
  std::size_t d_count = 0;
  MapKind kind = MapKind::Raw;

  double at(std::size_t l, std::size_t k, std::size_t d) const {
    return values[(l * bin_count + k) * d_count + d];
  }
  double& at(std::size_t l, std::size_t k, std::size_t d) {
    return values[(l * bin_count + k) * d_count + d];
  }

  double total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }

  // sum over l and k, one value per direction.
  std::vector<double> mass_per_direction() const {
    std::vector<double> mass(d_count, 0.0);
    for (std::size_t l = 0; l < frames; ++l)
      for (std::size_t k = 0; k < bin_count; ++k)
        for (std::size_t d = 0; d < d_count; ++d) mass[d] += at(l, k, d);
    return mass;
  }

  // sum over l only: [K x D], row-major.
  std::vector<double> mass_per_bin_direction() const {
    std::vector<double> mass(bin_count * d_count, 0.0);
    for (std::size_t l = 0; l < frames; ++l)
      for (std::size_t k = 0; k < bin_count; ++k)
        for (std::size_t d = 0; d < d_count; ++d) mass[k * d_count + d] += at(l, k, d);
    return mass;
  }

  Tensor to_tensor() const {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(frames), static_cast<std::uint32_t>(bin_count),
              static_cast<std::uint32_t>(d_count)};
    t.real = values;
    return t;
  }

  static SpatialMap from_tensor(const Tensor& t, MapKind kind = MapKind::Raw) {
    if (t.is_complex || t.dims.size() != 3)
      throw invalid_input("SpatialMap: expected real [L x K x D] tensor");
    SpatialMap map;
    map.frames = t.dims[0];
    map.bin_count = t.dims[1];
    map.d_count = t.dims[2];
    map.kind = kind;
    map.values = t.real;
    return map;
  }
};

namespace detail {

inline void check_map_shapes(const Spectrogram& z, const DoaGrid& grid) {
  if (z.channels != grid.channels) throw invalid_input("spatial map: channel count mismatch");
  if (z.bin_count != grid.bin_count) throw invalid_input("spatial map: bin count mismatch");
}

}  // namespace detail

// gamma(l,k,d) = |Z^H V|^2 / (|Z|^2 |V|^2), in [0,1]; both norms in the
// denominator so a parallel signal scores exactly 1. Zero-energy bins map
// to 0 (no speech evidence).
inline SpatialMap spatial_map_raw(const Spectrogram& z, const DoaGrid& grid) {
  detail::check_map_shapes(z, grid);
  SpatialMap map;
  map.frames = z.frames;
  map.bin_count = z.bin_count;
  map.d_count = grid.d_count;
  map.kind = MapKind::Raw;
  map.values.assign(map.frames * map.bin_count * map.d_count, 0.0);

  const std::size_t m_ch = z.channels;
  parallel_for(0, static_cast<std::int64_t>(z.frames), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t l = lo; l < hi; ++l) {
      for (std::size_t k = 0; k < z.bin_count; ++k) {
        const cd* zv = &z.bins[(static_cast<std::size_t>(l) * z.bin_count + k) * m_ch];
        double zn = 0.0;
        for (std::size_t m = 0; m < m_ch; ++m) zn += std::norm(zv[m]);
        if (zn <= 0.0) continue;
        for (std::size_t d = 0; d < grid.d_count; ++d) {
          cd acc(0.0, 0.0);
          double vn = 0.0;
          const cd* sv = &grid.steering[(d * grid.bin_count + k) * m_ch];
          for (std::size_t m = 0; m < m_ch; ++m) {
            acc += std::conj(zv[m]) * sv[m];
            vn += std::norm(sv[m]);
          }
          map.at(static_cast<std::size_t>(l), k, d) = std::norm(acc) / (zn * vn);
        }
      }
    }
  });
  return map;
}

// Whitened variant: both Z and V premultiplied by U(k), both norms in the
// denominator. Decorrelates the low-frequency sound field so directions
// separate there as well.
inline SpatialMap spatial_map_whitened(const Spectrogram& z, const DoaGrid& grid,
                                       const WhiteningTransform& u) {
  detail::check_map_shapes(z, grid);
  if (u.channels != z.channels || u.bin_count < z.bin_count)
    throw invalid_input("spatial map: whitening shape mismatch");

  const std::size_t m_ch = z.channels;

  // Whitened steering, precomputed once: [D x K x M] plus its norms.
  std::vector<cd> uv(grid.d_count * grid.bin_count * m_ch);
  std::vector<double> uv_norm(grid.d_count * grid.bin_count, 0.0);
  for (std::size_t d = 0; d < grid.d_count; ++d) {
    for (std::size_t k = 0; k < grid.bin_count; ++k) {
      const std::size_t base = (d * grid.bin_count + k) * m_ch;
      u.apply(k, &grid.steering[base], &uv[base]);
      double n2 = 0.0;
      for (std::size_t m = 0; m < m_ch; ++m) n2 += std::norm(uv[base + m]);
      uv_norm[d * grid.bin_count + k] = n2;
    }
  }

  SpatialMap map;
  map.frames = z.frames;
  map.bin_count = z.bin_count;
  map.d_count = grid.d_count;
  map.kind = MapKind::Whitened;
  map.values.assign(map.frames * map.bin_count * map.d_count, 0.0);

  parallel_for(0, static_cast<std::int64_t>(z.frames), [&](std::int64_t lo, std::int64_t hi) {
    std::vector<cd> uz(m_ch);
    for (std::int64_t l = lo; l < hi; ++l) {
      for (std::size_t k = 0; k < z.bin_count; ++k) {
        const cd* zv = &z.bins[(static_cast<std::size_t>(l) * z.bin_count + k) * m_ch];
        u.apply(k, zv, uz.data());
        double zn = 0.0;
        for (std::size_t m = 0; m < m_ch; ++m) zn += std::norm(uz[m]);
        if (zn <= 0.0) continue;
        for (std::size_t d = 0; d < grid.d_count; ++d) {
          const cd* sv = &uv[(d * grid.bin_count + k) * m_ch];
          cd acc(0.0, 0.0);
          for (std::size_t m = 0; m < m_ch; ++m) acc += std::conj(uz[m]) * sv[m];
          const double vn = uv_norm[d * grid.bin_count + k];
          if (vn > 0.0)
            map.at(static_cast<std::size_t>(l), k, d) = std::norm(acc) / (zn * vn);
        }
      }
    }
  });
  return map;
}

// P_Z(l,k) = (1/M) sum_m |Z(l,k,m)|^2.
inline std::vector<double> bin_power(const Spectrogram& z) {
  std::vector<double> p(z.frames * z.bin_count, 0.0);
  const double inv_m = 1.0 / static_cast<double>(z.channels);
  for (std::size_t l = 0; l < z.frames; ++l) {
    for (std::size_t k = 0; k < z.bin_count; ++k) {
      double acc = 0.0;
      for (std::size_t m = 0; m < z.channels; ++m) acc += std::norm(z.at(l, k, m));
      p[l * z.bin_count + k] = acc * inv_m;
    }
  }
  return p;
}

// gamma_W(l,k,d) = gamma_U(l,k,d) * P_Z(l,k).
inline SpatialMap weight_map(const SpatialMap& gamma_u, const Spectrogram& z) {
  if (gamma_u.frames != z.frames || gamma_u.bin_count != z.bin_count)
    throw invalid_input("weight_map: shape mismatch");
  const std::vector<double> p = bin_power(z);
  SpatialMap out = gamma_u;
  out.kind = MapKind::Weighted;
  for (std::size_t l = 0; l < out.frames; ++l) {
    const double* pr = &p[l * out.bin_count];
    for (std::size_t k = 0; k < out.bin_count; ++k) {
      double* row = &out.values[(l * out.bin_count + k) * out.d_count];
      for (std::size_t d = 0; d < out.d_count; ++d) row[d] *= pr[k];
    }
  }
  return out;
}

}  // namespace bssd
