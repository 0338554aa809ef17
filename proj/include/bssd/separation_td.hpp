#pragma once

#include <optional>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/container.hpp"
#include "bssd/doa_grid.hpp"
#include "bssd/fft.hpp"
#include "bssd/rng.hpp"
#include "bssd/signal.hpp"
#include "bssd/whitening.hpp"

namespace bssd {

// FIR adaption kernels v'(d, t, m, i) truncated from the frequency-domain
// adaption response. `shift` is the per-direction latency in samples: the
// full response is acausal (whitening is zero-phase, the steered channels
// are advanced), so the dominant energy is rotated to the front of the
// window and adapt_td reads ahead by the same amount.
struct AdaptionKernelsTD {
  std::vector<double> taps;    // [D x T_A x M x M]
  std::vector<int> shift;      // [D]
  std::size_t d_count = 0;
  std::size_t tap_count = 0;   // T_A
  std::size_t channels = 0;

  double at(std::size_t d, std::size_t t, std::size_t m, std::size_t i) const {
    return taps[((d * tap_count + t) * channels + m) * channels + i];
  }
  double& at(std::size_t d, std::size_t t, std::size_t m, std::size_t i) {
    return taps[((d * tap_count + t) * channels + m) * channels + i];
  }

  Tensor to_tensor() const {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(d_count), static_cast<std::uint32_t>(tap_count),
              static_cast<std::uint32_t>(channels), static_cast<std::uint32_t>(channels)};
    t.real = taps;
    return t;
  }

  static AdaptionKernelsTD from_tensor(const Tensor& t, const std::vector<int>& shifts) {
    if (t.is_complex || t.dims.size() != 4 || t.dims[2] != t.dims[3])
      throw invalid_input("AdaptionKernelsTD: expected real [D x T_A x M x M] tensor");
    AdaptionKernelsTD k;
    k.d_count = t.dims[0];
    k.tap_count = t.dims[1];
    k.channels = t.dims[2];
    k.taps = t.real;
    k.shift = shifts.empty() ? std::vector<int>(k.d_count, 0) : shifts;
    if (k.shift.size() != k.d_count)
      throw invalid_input("AdaptionKernelsTD: shift count mismatch");
    return k;
  }
};

// Passband for the FIR design. The raw adaption response has ~1/t time
// tails (the fractional-delay phase is discontinuous at Nyquist, and the
// eps-loaded whitening spikes near DC), so a T_A-tap truncation of the
// plain inverse FFT keeps percent-level broadband error. Shaping the
// spectrum with a smooth window outside the band of interest concentrates
// the kernel; inside the band the response is untouched.
struct KernelBand {
  double lo_stop_hz = 40.0;
  double lo_pass_hz = 700.0;
  double hi_pass_hz = 6300.0;
  double hi_stop_hz = 7950.0;
};

namespace detail {

inline double smooth_step(double x) {
  x = std::max(0.0, std::min(1.0, x));
  return x * x * x * (x * (x * 6.0 - 15.0) + 10.0);  // C2 at both ends
}

inline double band_gain(double f, const KernelBand& band) {
  return smooth_step((f - band.lo_stop_hz) / (band.lo_pass_hz - band.lo_stop_hz)) *
         smooth_step((band.hi_stop_hz - f) / (band.hi_stop_hz - band.hi_pass_hz));
}

}  // namespace detail

// Builds the analytic adaption kernels: for each (d, m, i) the one-sided
// response V'(d,k,m,i) = conj(sum_j U(k,m,j) V(d,k,j)) * U(k,m,i) is
// Hermitian-extended, inverse transformed, rotated so the first T_A taps
// capture maximal energy, and truncated. Without a band the spectrum is
// used as-is; with one it is windowed per KernelBand first.
inline AdaptionKernelsTD build_td_kernels(const DoaGrid& grid, const WhiteningTransform& u,
                                          std::size_t tap_count = 100,
                                          const std::optional<KernelBand>& band = std::nullopt) {
  if (tap_count == 0 || tap_count > grid.fft_size)
    throw invalid_config("build_td_kernels: T_A must be in [1, fft_size]");
  if (u.channels != grid.channels || u.bin_count < grid.bin_count)
    throw invalid_input("build_td_kernels: shape mismatch");

  const std::size_t m_ch = grid.channels;
  const std::size_t n = grid.fft_size;
  const std::size_t k_bins = grid.bin_count;

  AdaptionKernelsTD kernels;
  kernels.d_count = grid.d_count;
  kernels.tap_count = tap_count;
  kernels.channels = m_ch;
  kernels.taps.assign(grid.d_count * tap_count * m_ch * m_ch, 0.0);
  kernels.shift.assign(grid.d_count, 0);

  std::vector<cd> uv(k_bins * m_ch);
  std::vector<std::vector<double>> full(m_ch * m_ch);
  std::vector<cd> spec(k_bins);

  for (std::size_t d = 0; d < grid.d_count; ++d) {
    for (std::size_t k = 0; k < k_bins; ++k)
      u.apply(k, &grid.steering[(d * grid.bin_count + k) * m_ch], &uv[k * m_ch]);

    for (std::size_t m = 0; m < m_ch; ++m) {
      for (std::size_t i = 0; i < m_ch; ++i) {
        for (std::size_t k = 0; k < k_bins; ++k) {
          cd v = std::conj(uv[k * m_ch + m]) * u.at(k, m, i);
          if (band) v *= detail::band_gain(grid.bin_frequency(k), *band);
          // DC and Nyquist must be real for a real kernel.
          if (k == 0 || k == k_bins - 1) v = cd(v.real(), 0.0);
          spec[k] = v;
        }
        full[m * m_ch + i] = irfft(spec, n);
      }
    }

    // Latency shared by all M x M kernels of this direction: the circular
    // rotation whose first T_A taps capture the most energy, ties broken
    // toward the smallest latency. Window energies via a sliding sum over
    // the per-sample totals.
    std::vector<double> sample_energy(n, 0.0);
    for (const auto& g : full)
      for (std::size_t t = 0; t < n; ++t) sample_energy[t] += g[t] * g[t];

    double window = 0.0;
    for (std::size_t t = 0; t < tap_count; ++t) window += sample_energy[t];
    double best_energy = window;
    int best_shift = 0;
    for (std::size_t s = 1; s < n; ++s) {
      // shift s: window covers samples {-s, ..., -s + T_A - 1} mod n
      const std::size_t incoming = n - s;
      const std::size_t outgoing = (n - s + tap_count) % n;
      window += sample_energy[incoming] - sample_energy[outgoing];
      if (window > best_energy * (1.0 + 1e-12) + 1e-300) {
        best_energy = window;
        best_shift = static_cast<int>(s);
      }
    }
    kernels.shift[d] = best_shift;
    for (std::size_t t = 0; t < tap_count; ++t) {
      const std::size_t src = (t + n - static_cast<std::size_t>(best_shift)) % n;
      for (std::size_t m = 0; m < m_ch; ++m)
        for (std::size_t i = 0; i < m_ch; ++i)
          kernels.at(d, t, m, i) = full[m * m_ch + i][src];
    }
  }
  return kernels;
}

// Time-domain adaption: z~(t,m) = sum_i z(t,i) (*) v'(d,t,m,i), compensated
// for the kernel latency so the output stays aligned with the input.
inline MultiChannelSignal adapt_td(const MultiChannelSignal& z, int doa_index,
                                   const AdaptionKernelsTD& kernels) {
  if (doa_index < 0 || static_cast<std::size_t>(doa_index) >= kernels.d_count)
    throw invalid_input("adapt_td: DOA index out of range");
  if (z.channels != kernels.channels) throw invalid_input("adapt_td: channel count mismatch");

  const auto d = static_cast<std::size_t>(doa_index);
  const std::size_t m_ch = z.channels;
  const std::size_t t_len = z.frames();
  const int lat = kernels.shift[d];

  MultiChannelSignal out(t_len, m_ch, z.sample_rate);
  std::vector<double> in(t_len), acc(t_len + kernels.tap_count - 1);
  for (std::size_t m = 0; m < m_ch; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < m_ch; ++i) {
      for (std::size_t t = 0; t < t_len; ++t) in[t] = z.at(t, i);
      std::vector<double> taps(kernels.tap_count);
      for (std::size_t t = 0; t < kernels.tap_count; ++t) taps[t] = kernels.at(d, t, m, i);
      const std::vector<double> y = convolve(in, taps);
      for (std::size_t t = 0; t < y.size(); ++t) acc[t] += y[t];
    }
    for (std::size_t t = 0; t < t_len; ++t) {
      const std::size_t src = t + static_cast<std::size_t>(lat);
      out.at(t, m) = src < acc.size() ? acc[src] : 0.0;
    }
  }
  return out;
}

// Latent-space frames from a strided linear encoder.
struct LatentFrames {
  std::vector<double> frames;  // [L x H]
  std::size_t frame_count = 0;
  std::size_t latent_dim = 0;   // H
  std::size_t frame_len = 200;
  std::size_t stride = 50;
  std::size_t signal_length = 0;

  double at(std::size_t l, std::size_t h) const { return frames[l * latent_dim + h]; }
  double& at(std::size_t l, std::size_t h) { return frames[l * latent_dim + h]; }
};

// Encoder/decoder basis, [H x frame_len]. The reference basis has
// orthonormal columns (B^T B = I), which makes decode(encode(x)) = x on
// interior samples after overlap-add normalization.
struct LatentBasis {
  std::vector<double> b;  // [H x T]
  std::size_t latent_dim = 500;
  std::size_t frame_len = 200;
  std::size_t stride = 50;

  double at(std::size_t h, std::size_t t) const { return b[h * frame_len + t]; }
  double& at(std::size_t h, std::size_t t) { return b[h * frame_len + t]; }

  Tensor to_tensor() const {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(latent_dim), static_cast<std::uint32_t>(frame_len)};
    t.real = b;
    return t;
  }

  static LatentBasis from_tensor(const Tensor& t, std::size_t stride = 50) {
    if (t.is_complex || t.dims.size() != 2)
      throw invalid_input("LatentBasis: expected real [H x T] tensor");
    LatentBasis basis;
    basis.latent_dim = t.dims[0];
    basis.frame_len = t.dims[1];
    basis.stride = stride;
    basis.b = t.real;
    return basis;
  }
};

// Seeded Gaussian matrix with columns orthonormalized by modified
// Gram-Schmidt; requires H >= frame_len.
inline LatentBasis reference_latent_basis(std::size_t latent_dim = 500,
                                          std::size_t frame_len = 200, std::size_t stride = 50,
                                          std::uint64_t seed = 0x42) {
  if (latent_dim < frame_len)
    throw invalid_config("reference_latent_basis: need H >= frame_len for orthonormal columns");
  if (stride == 0 || frame_len % stride != 0)
    throw invalid_config("reference_latent_basis: stride must divide frame_len");
  LatentBasis basis;
  basis.latent_dim = latent_dim;
  basis.frame_len = frame_len;
  basis.stride = stride;
  basis.b.resize(latent_dim * frame_len);
  Rng rng = Rng(seed).stream("latent-basis");
  for (auto& v : basis.b) v = rng.normal();
  for (std::size_t c = 0; c < frame_len; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t h = 0; h < latent_dim; ++h) dot += basis.at(h, c) * basis.at(h, p);
      for (std::size_t h = 0; h < latent_dim; ++h) basis.at(h, c) -= dot * basis.at(h, p);
    }
    double n2 = 0.0;
    for (std::size_t h = 0; h < latent_dim; ++h) n2 += basis.at(h, c) * basis.at(h, c);
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t h = 0; h < latent_dim; ++h) basis.at(h, c) *= inv;
  }
  return basis;
}

// Strided linear frames z'(l,h) = sum_t B(h,t) x(l*stride + t) over the
// zero-padded input (frame_len - stride pad on both sides).
inline LatentFrames frame_encode(const MultiChannelSignal& x, const LatentBasis& basis) {
  if (x.channels != 1) throw invalid_input("frame_encode: mono input required");
  if (x.frames() < basis.frame_len)
    throw invalid_input("frame_encode: signal shorter than one frame");

  const std::size_t pad = basis.frame_len - basis.stride;
  const std::size_t padded = x.frames() + 2 * pad;
  const std::size_t count = (padded - basis.frame_len) / basis.stride + 1;

  LatentFrames out;
  out.frame_count = count;
  out.latent_dim = basis.latent_dim;
  out.frame_len = basis.frame_len;
  out.stride = basis.stride;
  out.signal_length = x.frames();
  out.frames.assign(count * basis.latent_dim, 0.0);

  for (std::size_t l = 0; l < count; ++l) {
    const std::ptrdiff_t start =
        static_cast<std::ptrdiff_t>(l * basis.stride) - static_cast<std::ptrdiff_t>(pad);
    for (std::size_t h = 0; h < basis.latent_dim; ++h) {
      double acc = 0.0;
      for (std::size_t t = 0; t < basis.frame_len; ++t) {
        const std::ptrdiff_t src = start + static_cast<std::ptrdiff_t>(t);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(x.frames())) continue;
        acc += basis.at(h, t) * x.at(static_cast<std::size_t>(src), 0);
      }
      out.at(l, h) = acc;
    }
  }
  return out;
}

// Transposed filtering with overlap-add; inverse of frame_encode for the
// reference basis.
inline MultiChannelSignal frame_decode(const LatentFrames& y, const LatentBasis& basis) {
  if (y.latent_dim != basis.latent_dim || y.frame_len != basis.frame_len ||
      y.stride != basis.stride)
    throw invalid_input("frame_decode: basis does not match frames");

  const std::size_t pad = basis.frame_len - basis.stride;
  const std::size_t padded = (y.frame_count - 1) * basis.stride + basis.frame_len;
  std::vector<double> acc(padded, 0.0);
  std::vector<double> cover(padded, 0.0);

  for (std::size_t l = 0; l < y.frame_count; ++l) {
    const std::size_t start = l * basis.stride;
    for (std::size_t t = 0; t < basis.frame_len; ++t) {
      double v = 0.0;
      for (std::size_t h = 0; h < basis.latent_dim; ++h) v += basis.at(h, t) * y.at(l, h);
      acc[start + t] += v;
      cover[start + t] += 1.0;
    }
  }

  const std::size_t n = y.signal_length > 0 ? y.signal_length : padded - 2 * pad;
  MultiChannelSignal out(n, 1);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t p = t + pad;
    out.at(t, 0) = cover[p] > 0.0 ? acc[p] / cover[p] : 0.0;
  }
  return out;
}

// Latent-space beamforming: y'(l,h) = w'(l,h) (.) z'(l,h).
inline LatentFrames latent_beamform(const LatentFrames& z, const LatentFrames& w) {
  if (z.frame_count != w.frame_count || z.latent_dim != w.latent_dim)
    throw invalid_input("latent_beamform: shape mismatch");
  LatentFrames out = z;
  for (std::size_t i = 0; i < out.frames.size(); ++i) out.frames[i] = z.frames[i] * w.frames[i];
  return out;
}

}  // namespace bssd
