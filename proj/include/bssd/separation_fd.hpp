#pragma once

#include <vector>

#include "bssd/common.hpp"
#include "bssd/container.hpp"
#include "bssd/doa_grid.hpp"
#include "bssd/stft.hpp"
#include "bssd/whitening.hpp"

namespace bssd {

// Per-DOA adaption matrices A(d,k), complex [D x K x M x M].
struct AdaptionWeightsFD {
  std::vector<cd> a;
  std::size_t d_count = 0;
  std::size_t bin_count = 0;
  std::size_t channels = 0;

  cd at(std::size_t d, std::size_t k, std::size_t i, std::size_t j) const {
    return a[((d * bin_count + k) * channels + i) * channels + j];
  }
  cd& at(std::size_t d, std::size_t k, std::size_t i, std::size_t j) {
    return a[((d * bin_count + k) * channels + i) * channels + j];
  }

  Tensor to_tensor() const {
    Tensor t;
    t.is_complex = true;
    t.dims = {static_cast<std::uint32_t>(d_count), static_cast<std::uint32_t>(bin_count),
              static_cast<std::uint32_t>(channels), static_cast<std::uint32_t>(channels)};
    t.complex_data = a;
    return t;
  }

  static AdaptionWeightsFD from_tensor(const Tensor& t) {
    if (!t.is_complex || t.dims.size() != 4 || t.dims[2] != t.dims[3])
      throw invalid_input("AdaptionWeightsFD: expected complex [D x K x M x M] tensor");
    AdaptionWeightsFD w;
    w.d_count = t.dims[0];
    w.bin_count = t.dims[1];
    w.channels = t.dims[2];
    w.a = t.complex_data;
    return w;
  }
};

// Per-bin beamforming filters W(l,k,m), complex [L x K x M].
struct BeamWeightsFD {
  std::vector<cd> w;
  std::size_t frames = 0;
  std::size_t bin_count = 0;
  std::size_t channels = 0;

  cd at(std::size_t l, std::size_t k, std::size_t m) const {
    return w[(l * bin_count + k) * channels + m];
  }
  cd& at(std::size_t l, std::size_t k, std::size_t m) {
    return w[(l * bin_count + k) * channels + m];
  }

  Tensor to_tensor() const {
    Tensor t;
    t.is_complex = true;
    t.dims = {static_cast<std::uint32_t>(frames), static_cast<std::uint32_t>(bin_count),
              static_cast<std::uint32_t>(channels)};
    t.complex_data = w;
    return t;
  }

  static BeamWeightsFD from_tensor(const Tensor& t) {
    if (!t.is_complex || t.dims.size() != 3)
      throw invalid_input("BeamWeightsFD: expected complex [L x K x M] tensor");
    BeamWeightsFD w;
    w.frames = t.dims[0];
    w.bin_count = t.dims[1];
    w.channels = t.dims[2];
    w.w = t.complex_data;
    return w;
  }
};

namespace detail {

inline void check_adaption_args(const Spectrogram& z, int doa_index, std::size_t d_count) {
  if (doa_index < 0 || static_cast<std::size_t>(doa_index) >= d_count)
    throw invalid_input("adaption: DOA index out of range");
  if (z.frames == 0) throw invalid_input("adaption: empty spectrogram");
}

}  // namespace detail

// Analytic adaption: Z~(l,k) = (U(k) V(d,k))* (.) (U(k) Z(l,k)). Whitens the
// mixture and rotates phases so the target direction has zero IPD.
inline Spectrogram analytic_adaption_fd(const Spectrogram& z, int doa_index, const DoaGrid& grid,
                                        const WhiteningTransform& u) {
  detail::check_adaption_args(z, doa_index, grid.d_count);
  if (z.channels != grid.channels || z.bin_count != grid.bin_count ||
      u.channels != z.channels || u.bin_count < z.bin_count)
    throw invalid_input("analytic_adaption_fd: shape mismatch");

  const std::size_t m_ch = z.channels;
  const auto d = static_cast<std::size_t>(doa_index);

  std::vector<cd> uv(z.bin_count * m_ch);
  for (std::size_t k = 0; k < z.bin_count; ++k)
    u.apply(k, &grid.steering[(d * grid.bin_count + k) * m_ch], &uv[k * m_ch]);

  Spectrogram out = z;
  std::vector<cd> uz(m_ch);
  for (std::size_t l = 0; l < z.frames; ++l) {
    for (std::size_t k = 0; k < z.bin_count; ++k) {
      const std::size_t base = (l * z.bin_count + k) * m_ch;
      u.apply(k, &z.bins[base], uz.data());
      for (std::size_t m = 0; m < m_ch; ++m)
        out.bins[base + m] = std::conj(uv[k * m_ch + m]) * uz[m];
    }
  }
  return out;
}

// Statistic adaption: Z~(l,k) = A(d,k) Z(l,k) with loaded per-DOA matrices.
inline Spectrogram statistic_adaption_fd(const Spectrogram& z, int doa_index,
                                         const AdaptionWeightsFD& weights) {
  detail::check_adaption_args(z, doa_index, weights.d_count);
  if (z.channels != weights.channels || z.bin_count != weights.bin_count)
    throw invalid_input("statistic_adaption_fd: shape mismatch");

  const std::size_t m_ch = z.channels;
  const auto d = static_cast<std::size_t>(doa_index);
  Spectrogram out = z;
  for (std::size_t l = 0; l < z.frames; ++l) {
    for (std::size_t k = 0; k < z.bin_count; ++k) {
      const std::size_t base = (l * z.bin_count + k) * m_ch;
      for (std::size_t i = 0; i < m_ch; ++i) {
        cd acc(0.0, 0.0);
        for (std::size_t j = 0; j < m_ch; ++j) acc += weights.at(d, k, i, j) * z.bins[base + j];
        out.bins[base + i] = acc;
      }
    }
  }
  return out;
}

// The analytic adaption written as per-DOA matrices A(d,k) = diag((U V)*) U,
// so statistic_adaption_fd(Z, d, weights) reproduces analytic_adaption_fd.
inline AdaptionWeightsFD fd_weights_from_analytic(const DoaGrid& grid,
                                                  const WhiteningTransform& u) {
  if (u.channels != grid.channels || u.bin_count < grid.bin_count)
    throw invalid_input("fd_weights_from_analytic: shape mismatch");
  AdaptionWeightsFD w;
  w.d_count = grid.d_count;
  w.bin_count = grid.bin_count;
  w.channels = grid.channels;
  w.a.resize(w.d_count * w.bin_count * w.channels * w.channels);
  std::vector<cd> uv(w.channels);
  for (std::size_t d = 0; d < w.d_count; ++d) {
    for (std::size_t k = 0; k < w.bin_count; ++k) {
      u.apply(k, &grid.steering[(d * grid.bin_count + k) * w.channels], uv.data());
      for (std::size_t i = 0; i < w.channels; ++i)
        for (std::size_t j = 0; j < w.channels; ++j)
          w.at(d, k, i, j) = std::conj(uv[i]) * u.at(k, i, j);
    }
  }
  return w;
}

// Norm layer: v = Z~ Z~*(m=1), scaled to unit L2 norm. Channel 1 comes out
// real and nonnegative; an all-zero bin stays zero.
inline Spectrogram norm_layer(const Spectrogram& z) {
  const std::size_t m_ch = z.channels;
  Spectrogram out = z;
  for (std::size_t l = 0; l < z.frames; ++l) {
    for (std::size_t k = 0; k < z.bin_count; ++k) {
      const std::size_t base = (l * z.bin_count + k) * m_ch;
      const cd ref = std::conj(z.bins[base]);
      double n2 = 0.0;
      for (std::size_t m = 0; m < m_ch; ++m) {
        out.bins[base + m] = z.bins[base + m] * ref;
        n2 += std::norm(out.bins[base + m]);
      }
      if (n2 > 0.0) {
        const double inv = 1.0 / std::sqrt(n2);
        for (std::size_t m = 0; m < m_ch; ++m) out.bins[base + m] *= inv;
      }
    }
  }
  return out;
}

// Filter-and-sum: Y(l,k) = W^T(l,k) Z~(l,k) (plain transpose as printed;
// set conjugate_weights to use W^H instead).
inline Spectrogram filter_and_sum(const Spectrogram& z, const BeamWeightsFD& w,
                                  bool conjugate_weights = false) {
  if (w.frames != z.frames || w.bin_count != z.bin_count || w.channels != z.channels)
    throw invalid_input("filter_and_sum: shape mismatch");
  Spectrogram out(z.frames, z.bin_count, 1);
  out.fft_size = z.fft_size;
  out.hop = z.hop;
  out.sample_rate = z.sample_rate;
  out.signal_length = z.signal_length;
  for (std::size_t l = 0; l < z.frames; ++l) {
    for (std::size_t k = 0; k < z.bin_count; ++k) {
      cd acc(0.0, 0.0);
      for (std::size_t m = 0; m < z.channels; ++m) {
        const cd wv = w.at(l, k, m);
        acc += (conjugate_weights ? std::conj(wv) : wv) * z.at(l, k, m);
      }
      out.at(l, k, 0) = acc;
    }
  }
  return out;
}

// Reference weight estimator standing in for the learned stack: after an
// adaption layer the target IPDs are zero, so averaging the channels is a
// delay-and-sum beamformer. W(l,k,m) = 1/M.
inline BeamWeightsFD oracle_delay_and_sum(const Spectrogram& z) {
  BeamWeightsFD w;
  w.frames = z.frames;
  w.bin_count = z.bin_count;
  w.channels = z.channels;
  w.w.assign(z.frames * z.bin_count * z.channels,
             cd(1.0 / static_cast<double>(z.channels), 0.0));
  return w;
}

}  // namespace bssd
