#pragma once

#include <vector>

#include "bssd/common.hpp"
#include "bssd/geometry.hpp"

namespace bssd {

// Spatial coherence of the ideal isotropic sound field, per bin:
// Gamma_ij(k) = sinc(2 pi f_k x_ij / c) with x_ij the microphone distance.
struct CoherenceModel {
  std::vector<double> gamma;  // [K x M x M]
  std::size_t bin_count = 0;
  std::size_t channels = 0;

  double at(std::size_t k, std::size_t i, std::size_t j) const {
    return gamma[(k * channels + i) * channels + j];
  }
  double& at(std::size_t k, std::size_t i, std::size_t j) {
    return gamma[(k * channels + i) * channels + j];
  }
};

inline CoherenceModel isotropic_coherence(const ArrayGeometry& geo, std::size_t bin_count,
                                          double sample_rate, std::size_t fft_size) {
  geo.validate();
  CoherenceModel model;
  model.bin_count = bin_count;
  model.channels = geo.channels();
  model.gamma.resize(bin_count * model.channels * model.channels);
  for (std::size_t k = 0; k < bin_count; ++k) {
    const double fk = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
    for (std::size_t i = 0; i < model.channels; ++i) {
      for (std::size_t j = 0; j < model.channels; ++j) {
        const double x = geo.pair_distance(i, j);
        model.at(k, i, j) = sinc(2.0 * kPi * fk * x / geo.speed_of_sound);
      }
    }
  }
  return model;
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Eigenvectors are returned as columns of v.
inline void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& eigenvalues,
                         std::vector<double>& v) {
  v.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a[i * n + p];
          const double aiq = a[i * n + q];
          a[i * n + p] = c * aip - s * aiq;
          a[i * n + q] = s * aip + c * aiq;
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double apj = a[p * n + j];
          const double aqj = a[q * n + j];
          a[p * n + j] = c * apj - s * aqj;
          a[q * n + j] = s * apj + c * aqj;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v[i * n + p];
          const double viq = v[i * n + q];
          v[i * n + p] = c * vip - s * viq;
          v[i * n + q] = s * vip + c * viq;
        }
      }
    }
  }

  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a[i * n + i];
}

}  // namespace detail

// ZCA whitening transform U(k) = E (D + eps I)^{-1/2} E^T per bin; symmetric
// by construction, so orientation of the data is preserved.
struct WhiteningTransform {
  std::vector<double> u;  // [K x M x M]
  std::size_t bin_count = 0;
  std::size_t channels = 0;
  double epsilon = 1e-3;

  double at(std::size_t k, std::size_t i, std::size_t j) const {
    return u[(k * channels + i) * channels + j];
  }
  double& at(std::size_t k, std::size_t i, std::size_t j) {
    return u[(k * channels + i) * channels + j];
  }

  // U(k) z for a complex channel vector z.
  void apply(std::size_t k, const cd* z, cd* out) const {
    for (std::size_t i = 0; i < channels; ++i) {
      cd acc(0.0, 0.0);
      for (std::size_t j = 0; j < channels; ++j) acc += at(k, i, j) * z[j];
      out[i] = acc;
    }
  }
};

inline WhiteningTransform zca(const CoherenceModel& model, double epsilon = 1e-3) {
  const std::size_t m = model.channels;
  for (std::size_t k = 0; k < model.bin_count; ++k)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j)
        if (std::abs(model.at(k, i, j) - model.at(k, j, i)) > 1e-12)
          throw invalid_input("zca: coherence matrix must be symmetric");

  WhiteningTransform w;
  w.bin_count = model.bin_count;
  w.channels = m;
  w.epsilon = epsilon;
  w.u.resize(model.bin_count * m * m);

  std::vector<double> a(m * m), eigenvalues, vectors;
  for (std::size_t k = 0; k < model.bin_count; ++k) {
    for (std::size_t i = 0; i < m * m; ++i) a[i] = model.gamma[k * m * m + i];
    detail::jacobi_eigen(a, m, eigenvalues, vectors);
    // Gamma is PSD analytically; clamp numerical negatives before loading.
    for (auto& lambda : eigenvalues) lambda = std::max(0.0, lambda);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t e = 0; e < m; ++e)
          acc += vectors[i * m + e] * vectors[j * m + e] / std::sqrt(eigenvalues[e] + epsilon);
        w.at(k, i, j) = acc;
      }
    }
  }
  return w;
}

// Identity-eigensystem transform (U(k) = (1+eps)^{-1/2} I); handy where the
// whitened path should reduce to the raw one.
inline WhiteningTransform identity_whitening(std::size_t bin_count, std::size_t channels,
                                             double epsilon = 0.0) {
  WhiteningTransform w;
  w.bin_count = bin_count;
  w.channels = channels;
  w.epsilon = epsilon;
  w.u.assign(bin_count * channels * channels, 0.0);
  const double scale = 1.0 / std::sqrt(1.0 + epsilon);
  for (std::size_t k = 0; k < bin_count; ++k)
    for (std::size_t i = 0; i < channels; ++i) w.at(k, i, i) = scale;
  return w;
}

}  // namespace bssd
