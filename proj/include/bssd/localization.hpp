#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/doa_grid.hpp"
#include "bssd/metrics.hpp"
#include "bssd/separation_fd.hpp"
#include "bssd/separation_td.hpp"
#include "bssd/signal.hpp"
#include "bssd/spatial_map.hpp"
#include "bssd/stft.hpp"
#include "bssd/whitening.hpp"

namespace bssd {

// One extracted source: its DOA index, the enhanced mono signal and the
// speaker embedding that drove the accept/reject decision.
struct ExtractionResult {
  int doa_index = 0;
  MultiChannelSignal signal;
  Embedding embedding;
  bool accepted = false;
  double registry_dist = 0.0;
  double map_mass = 0.0;
};

struct LocalizationOutcome {
  std::vector<ExtractionResult> sources;  // all extracted, rejected one included
  int iterations = 0;
  bool truncated = false;

  std::vector<const ExtractionResult*> accepted() const {
    std::vector<const ExtractionResult*> out;
    for (const auto& s : sources)
      if (s.accepted) out.push_back(&s);
    return out;
  }
};

// Produces the embedding for an enhanced mono signal. Stands in for the
// identification branch of the trained network.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(const std::vector<double>& mono, double sample_rate) const = 0;
};

// Extraction strategy: given the mixture and a DOA index, return the
// enhanced signal and its embedding. Implementations must be deterministic.
class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual ExtractionResult extract(const MultiChannelSignal& z, int doa_index) const = 0;
};

// Oracle embedder keyed to known reference signals: the embedding is the
// canonical unit vector of the best-matching reference (peak normalized
// cross-correlation over all lags). Same speaker -> distance 0, different
// speaker -> sqrt(2).
class ReferenceMatchEmbedder : public Embedder {
 public:
  ReferenceMatchEmbedder(std::vector<std::vector<double>> references, std::size_t dim = 100)
      : refs_(std::move(references)), dim_(dim) {
    if (refs_.empty()) throw invalid_input("ReferenceMatchEmbedder: no references");
    if (dim_ < refs_.size()) throw invalid_input("ReferenceMatchEmbedder: dim < reference count");
  }

  Embedding embed(const std::vector<double>& mono, double) const override {
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t c = 0; c < refs_.size(); ++c) {
      const double score = peak_xcorr(mono, refs_[c]);
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    Embedding e;
    e.e.assign(dim_, 0.0);
    e.e[best] = 1.0;
    return e;
  }

 private:
  // max over lags of |sum_t a(t) b(t+lag)| / (|a| |b|), via FFT correlation.
  static double peak_xcorr(const std::vector<double>& a, const std::vector<double>& b) {
    const double ea = energy(a), eb = energy(b);
    if (ea <= 0.0 || eb <= 0.0) return 0.0;
    const std::size_t n = next_pow2(a.size() + b.size());
    std::vector<cd> fa(n, cd{}), fb(n, cd{});
    for (std::size_t i = 0; i < a.size(); ++i) fa[i] = cd(a[i], 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) fb[i] = cd(b[i], 0.0);
    fft_inplace(fa);
    fft_inplace(fb);
    for (std::size_t i = 0; i < n; ++i) fa[i] *= std::conj(fb[i]);
    fft_inplace(fa, true);
    double peak = 0.0;
    for (const cd& v : fa) peak = std::max(peak, std::abs(v.real()));
    return peak / std::sqrt(ea * eb);
  }

  std::vector<std::vector<double>> refs_;
  std::size_t dim_;
};

enum class EstimatorKind { AnalyticFd, StatisticFd, AnalyticTd, StatisticTd };

// Reference extractor: adaption toward the DOA followed by delay-and-sum
// beamforming, in the frequency or time domain, with embeddings from a
// configured embedder. Replaces the trained network of the full system.
class OracleBeamExtractor : public Extractor {
 public:
  OracleBeamExtractor(const DoaGrid& grid, const WhiteningTransform& u, StftConfig stft_cfg,
                      std::shared_ptr<const Embedder> embedder,
                      EstimatorKind kind = EstimatorKind::AnalyticFd)
      : grid_(grid), u_(u), stft_cfg_(stft_cfg), embedder_(std::move(embedder)), kind_(kind) {}

  // Loaded weights for the statistic variants. FD weights default to the
  // analytic algebra; TD kernels to the analytic build with T_A taps.
  void set_fd_weights(AdaptionWeightsFD w) { fd_weights_ = std::move(w); }
  void set_td_kernels(AdaptionKernelsTD k) { td_kernels_ = std::move(k); }
  void set_tap_count(std::size_t t) { tap_count_ = t; }
  void set_latent_basis(LatentBasis b) { latent_basis_ = std::move(b); }

  // Per-DOA embedding table (external-container mode); takes precedence
  // over the embedder.
  void set_embedding_table(std::vector<Embedding> table) { embedding_table_ = std::move(table); }

  ExtractionResult extract(const MultiChannelSignal& z, int doa_index) const override {
    if (doa_index < 0 || static_cast<std::size_t>(doa_index) >= grid_.d_count)
      throw invalid_input("extract: DOA index out of range");

    ExtractionResult res;
    res.doa_index = doa_index;
    switch (kind_) {
      case EstimatorKind::AnalyticFd:
      case EstimatorKind::StatisticFd: {
        const Spectrogram zf = stft(z, stft_cfg_);
        Spectrogram adapted =
            kind_ == EstimatorKind::AnalyticFd
                ? analytic_adaption_fd(zf, doa_index, grid_, u_)
                : statistic_adaption_fd(zf, doa_index, fd_weights());
        const BeamWeightsFD w = oracle_delay_and_sum(adapted);
        res.signal = istft(filter_and_sum(adapted, w), stft_cfg_);
        break;
      }
      case EstimatorKind::AnalyticTd:
      case EstimatorKind::StatisticTd: {
        const AdaptionKernelsTD& kernels = td_kernels();
        const MultiChannelSignal adapted = adapt_td(z, doa_index, kernels);
        // delay-and-sum across the ITD-aligned channels
        MultiChannelSignal mono(adapted.frames(), 1, adapted.sample_rate);
        const double inv_m = 1.0 / static_cast<double>(adapted.channels);
        for (std::size_t t = 0; t < adapted.frames(); ++t) {
          double acc = 0.0;
          for (std::size_t m = 0; m < adapted.channels; ++m) acc += adapted.at(t, m);
          mono.at(t, 0) = acc * inv_m;
        }
        // latent framing round trip keeps the TD path exercised end to end
        const LatentBasis& basis = latent_basis();
        if (mono.frames() >= basis.frame_len) {
          LatentFrames frames = frame_encode(mono, basis);
          LatentFrames ones = frames;
          std::fill(ones.frames.begin(), ones.frames.end(), 1.0);
          res.signal = frame_decode(latent_beamform(frames, ones), basis);
          res.signal.sample_rate = mono.sample_rate;
        } else {
          res.signal = mono;
        }
        break;
      }
    }
    if (!embedding_table_.empty()) {
      if (static_cast<std::size_t>(doa_index) >= embedding_table_.size())
        throw invalid_input("extract: no table embedding for DOA index");
      res.embedding = embedding_table_[static_cast<std::size_t>(doa_index)];
    } else if (embedder_) {
      res.embedding = embedder_->embed(res.signal.channel(0), res.signal.sample_rate);
    } else {
      throw invalid_input("extract: no embedder configured");
    }
    return res;
  }

 private:
  const AdaptionWeightsFD& fd_weights() const {
    if (!fd_weights_) fd_weights_ = fd_weights_from_analytic(grid_, u_);
    return *fd_weights_;
  }
  const AdaptionKernelsTD& td_kernels() const {
    if (!td_kernels_) td_kernels_ = build_td_kernels(grid_, u_, tap_count_);
    return *td_kernels_;
  }
  const LatentBasis& latent_basis() const {
    if (!latent_basis_) latent_basis_ = reference_latent_basis();
    return *latent_basis_;
  }

  const DoaGrid& grid_;
  const WhiteningTransform& u_;
  StftConfig stft_cfg_;
  std::shared_ptr<const Embedder> embedder_;
  EstimatorKind kind_;
  std::size_t tap_count_ = 100;
  std::vector<Embedding> embedding_table_;
  mutable std::optional<AdaptionWeightsFD> fd_weights_;
  mutable std::optional<AdaptionKernelsTD> td_kernels_;
  mutable std::optional<LatentBasis> latent_basis_;
};

// Table-lookup extractor for tests: every DOA index maps to a frozen
// (signal, embedding) pair.
class FixtureExtractor : public Extractor {
 public:
  void add(int doa_index, MultiChannelSignal signal, Embedding embedding) {
    table_[doa_index] = {std::move(signal), std::move(embedding)};
  }

  ExtractionResult extract(const MultiChannelSignal&, int doa_index) const override {
    const auto it = table_.find(doa_index);
    if (it == table_.end()) throw invalid_input("FixtureExtractor: no entry for DOA index");
    ExtractionResult res;
    res.doa_index = doa_index;
    res.signal = it->second.first;
    res.embedding = it->second.second;
    return res;
  }

 private:
  std::map<int, std::pair<MultiChannelSignal, Embedding>> table_;
};

struct LocalizeParams {
  double delta = 0.5;          // registry distance threshold
  int max_iterations = 8;
  double zero_mass_guard = 1e-12;
};

// Iterative DOA selection and extraction:
//   gamma_W = gamma_U * P_Z; repeat { d = argmax mass; extract; accept if the
//   embedding is new, then subtract the d column from every direction with a
//   floor at 0; otherwise stop }.
// All extracted signals are kept, the final rejected one flagged.
inline LocalizationOutcome localize(const MultiChannelSignal& z, const DoaGrid& grid,
                                    const WhiteningTransform& u, const Extractor& extractor,
                                    const StftConfig& stft_cfg, const LocalizeParams& params) {
  if (params.delta <= 0.0) throw invalid_input("localize: delta must be positive");

  const Spectrogram zf = stft(z, stft_cfg);
  SpatialMap gamma_w;
  {
    // scoped so the unweighted map is released before the iteration loop
    const SpatialMap gamma_u = spatial_map_whitened(zf, grid, u);
    gamma_w = weight_map(gamma_u, zf);
  }
  SpatialMap residual = gamma_w;

  LocalizationOutcome outcome;
  std::vector<Embedding> registry;

  while (true) {
    if (outcome.iterations >= params.max_iterations) {
      outcome.truncated = true;
      break;
    }

    const std::vector<double> mass = residual.mass_per_direction();
    double total = 0.0;
    for (double v : mass) total += v;
    if (total < params.zero_mass_guard) break;

    std::size_t d_hat = 0;
    for (std::size_t d = 1; d < mass.size(); ++d)
      if (mass[d] > mass[d_hat]) d_hat = d;

    ++outcome.iterations;
    ExtractionResult res = extractor.extract(z, static_cast<int>(d_hat));
    res.map_mass = mass[d_hat];
    res.registry_dist = registry_distance(registry, res.embedding);

    const bool is_new = res.registry_dist > params.delta;
    res.accepted = is_new;
    outcome.sources.push_back(std::move(res));
    if (!is_new) break;

    registry.push_back(outcome.sources.back().embedding);
    // residual(l,k,:) <- max(residual(l,k,:) - gamma_w(l,k,d_hat), 0)
    for (std::size_t l = 0; l < residual.frames; ++l) {
      for (std::size_t k = 0; k < residual.bin_count; ++k) {
        const double sub = gamma_w.at(l, k, d_hat);
        if (sub <= 0.0) continue;
        double* row = &residual.values[(l * residual.bin_count + k) * residual.d_count];
        for (std::size_t d = 0; d < residual.d_count; ++d)
          row[d] = std::max(row[d] - sub, 0.0);
      }
    }
  }
  return outcome;
}

}  // namespace bssd
