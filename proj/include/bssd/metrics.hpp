#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "bssd/common.hpp"

namespace bssd {

// Speaker embedding with Euclidean distance semantics.
struct Embedding {
  std::vector<double> e;

  std::size_t dim() const { return e.size(); }

  double norm() const {
    double s = 0.0;
    for (double v : e) s += v * v;
    return std::sqrt(s);
  }

  Embedding normalized() const {
    const double n = norm();
    if (n <= 0.0) throw invalid_input("Embedding: cannot normalize a zero vector");
    Embedding out = *this;
    for (double& v : out.e) v /= n;
    return out;
  }
};

inline double distance(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw invalid_input("embedding distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.e.size(); ++i) {
    const double d = a.e[i] - b.e[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// min distance to any registry member; +inf for an empty registry so the
// first source is always accepted.
inline double registry_distance(const std::vector<Embedding>& registry, const Embedding& e) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : registry) best = std::min(best, distance(r, e));
  return best;
}

// B speakers x P utterances of E-dimensional embeddings.
struct TripletBatch {
  std::vector<double> data;  // [B x P x E]
  std::size_t speakers = 0;   // B
  std::size_t utterances = 0; // P
  std::size_t dim = 0;        // E

  double at(std::size_t b, std::size_t p, std::size_t i) const {
    return data[(b * utterances + p) * dim + i];
  }
  double& at(std::size_t b, std::size_t p, std::size_t i) {
    return data[(b * utterances + p) * dim + i];
  }

  Embedding embedding(std::size_t b, std::size_t p) const {
    Embedding e;
    e.e.assign(data.begin() + static_cast<std::ptrdiff_t>((b * utterances + p) * dim),
               data.begin() + static_cast<std::ptrdiff_t>((b * utterances + p + 1) * dim));
    return e;
  }

  void require_minable() const {
    if (speakers < 2 || utterances < 2)
      throw invalid_input("TripletBatch: need B >= 2 and P >= 2");
    if (dim == 0 || data.size() != speakers * utterances * dim)
      throw invalid_input("TripletBatch: inconsistent shape");
  }
};

struct LossWeights {
  double margin = 1.0;       // beta
  double lambda_htm = 1e-2;  // lambda_1
  double lambda_ce = 1e-4;   // lambda_2
};

inline constexpr double kSiSdrCapDb = 300.0;

struct SiSdrResult {
  double value_db = 0.0;
  std::vector<double> grad;  // d(value)/dy
};

// SI-SDR in dB with the analytic gradient wrt the estimate:
//   10 log10(|a r|^2 / |a r - y|^2), a = y^T r / r^T r.
// Exact reconstruction and orthogonality are capped at +-300 dB so values
// stay totally ordered.
inline SiSdrResult si_sdr(const std::vector<double>& y, const std::vector<double>& r) {
  if (y.size() != r.size()) throw invalid_input("si_sdr: length mismatch");
  if (y.empty()) throw invalid_input("si_sdr: empty input");
  double rr = 0.0, yr = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    rr += r[i] * r[i];
    yr += y[i] * r[i];
  }
  if (rr <= 0.0) throw invalid_input("si_sdr: zero reference");

  const double alpha = yr / rr;
  const double p = alpha * alpha * rr;  // |a r|^2
  double e = 0.0;                       // |a r - y|^2
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = alpha * r[i] - y[i];
    e += d * d;
  }

  SiSdrResult out;
  out.grad.assign(y.size(), 0.0);
  if (e <= 0.0) {
    out.value_db = kSiSdrCapDb;
    return out;
  }
  if (p <= 0.0) {
    out.value_db = -kSiSdrCapDb;
    return out;
  }
  out.value_db = std::max(-kSiSdrCapDb, std::min(kSiSdrCapDb, db10(p / e)));
  // d/dy 10(ln p - ln e)/ln10 with grad p = 2 a r and grad e = -2(a r - y)
  // (the residual is orthogonal to r, so a's dependence drops out of e).
  const double c = 10.0 / std::log(10.0);
  for (std::size_t i = 0; i < y.size(); ++i)
    out.grad[i] = c * (2.0 * r[i] / (alpha * rr) + 2.0 * (alpha * r[i] - y[i]) / e);
  return out;
}

// Single-triplet hinge [|e_a - e_p| - |e_a - e_n| + beta]_+.
inline double triplet_loss(const Embedding& anchor, const Embedding& positive,
                           const Embedding& negative, double margin) {
  const double v = distance(anchor, positive) - distance(anchor, negative) + margin;
  return v > 0.0 ? v : 0.0;
}

struct HtmResult {
  double value = 0.0;
  std::vector<double> grad;  // [B x P x E], same layout as the batch
};

// Hard triplet mining: per anchor the farthest positive within its speaker
// and the nearest negative among the other speakers,
//   mean over B*P anchors of [beta + max_p |e_a - e_p| - min_{j!=i,n} |e_a - e_n|]_+.
// Subgradient at ties follows the first (lowest-index) extremum.
inline HtmResult triplet_loss_htm(const TripletBatch& batch, double margin) {
  batch.require_minable();
  const std::size_t b_n = batch.speakers, p_n = batch.utterances, e_n = batch.dim;

  HtmResult out;
  out.grad.assign(batch.data.size(), 0.0);

  auto dist = [&](std::size_t b1, std::size_t p1, std::size_t b2, std::size_t p2) {
    double s = 0.0;
    for (std::size_t i = 0; i < e_n; ++i) {
      const double d = batch.at(b1, p1, i) - batch.at(b2, p2, i);
      s += d * d;
    }
    return std::sqrt(s);
  };
  auto grad_pair = [&](std::size_t b1, std::size_t p1, std::size_t b2, std::size_t p2,
                       double scale) {
    // scale * d|e1 - e2|/d(e1,e2)
    const double dv = dist(b1, p1, b2, p2);
    if (dv <= 0.0) return;
    for (std::size_t i = 0; i < e_n; ++i) {
      const double g = scale * (batch.at(b1, p1, i) - batch.at(b2, p2, i)) / dv;
      out.grad[(b1 * p_n + p1) * e_n + i] += g;
      out.grad[(b2 * p_n + p2) * e_n + i] -= g;
    }
  };

  double total = 0.0;
  for (std::size_t i = 0; i < b_n; ++i) {
    for (std::size_t a = 0; a < p_n; ++a) {
      double hardest_pos = -1.0;
      std::size_t pos_idx = 0;
      for (std::size_t p = 0; p < p_n; ++p) {
        const double dv = dist(i, a, i, p);
        if (dv > hardest_pos) {
          hardest_pos = dv;
          pos_idx = p;
        }
      }
      double hardest_neg = std::numeric_limits<double>::infinity();
      std::size_t neg_b = 0, neg_p = 0;
      for (std::size_t j = 0; j < b_n; ++j) {
        if (j == i) continue;
        for (std::size_t p = 0; p < p_n; ++p) {
          const double dv = dist(i, a, j, p);
          if (dv < hardest_neg) {
            hardest_neg = dv;
            neg_b = j;
            neg_p = p;
          }
        }
      }
      const double slack = margin + hardest_pos - hardest_neg;
      if (slack > 0.0) {
        total += slack;
        const double w = 1.0 / static_cast<double>(b_n * p_n);
        grad_pair(i, a, i, pos_idx, w);
        grad_pair(i, a, neg_b, neg_p, -w);
      }
    }
  }
  out.value = total / static_cast<double>(b_n * p_n);
  return out;
}

inline constexpr double kCeClampFloor = 1e-12;

struct CeResult {
  double value = 0.0;
  std::vector<double> grad;  // [B x P x E]
};

// Cross-entropy regularizer over normalized embeddings of different speakers:
//   -1/((B^2-B) P^2) sum_{a != n} sum_{i,j} log |e~_a^i . e~_n^j|^2,
// with |.|^2 clamped to [1e-12, 1]. As displayed the term is 0 for parallel
// embeddings and maximal for orthogonal ones; sign_flipped negates the whole
// expression for experiments that want the opposite direction.
inline CeResult triplet_ce_regularizer(const TripletBatch& batch, bool sign_flipped = false) {
  batch.require_minable();
  const std::size_t b_n = batch.speakers, p_n = batch.utterances, e_n = batch.dim;

  std::vector<double> norms(b_n * p_n, 0.0);
  for (std::size_t b = 0; b < b_n; ++b) {
    for (std::size_t p = 0; p < p_n; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < e_n; ++i) s += batch.at(b, p, i) * batch.at(b, p, i);
      if (s <= 0.0) throw invalid_input("triplet_ce_regularizer: zero embedding");
      norms[b * p_n + p] = std::sqrt(s);
    }
  }

  CeResult out;
  out.grad.assign(batch.data.size(), 0.0);
  const double scale = -1.0 / (static_cast<double>(b_n * b_n - b_n) * static_cast<double>(p_n) *
                               static_cast<double>(p_n));

  double total = 0.0;
  for (std::size_t a = 0; a < b_n; ++a) {
    for (std::size_t n = 0; n < b_n; ++n) {
      if (n == a) continue;
      for (std::size_t i = 0; i < p_n; ++i) {
        for (std::size_t j = 0; j < p_n; ++j) {
          const double na = norms[a * p_n + i];
          const double nn = norms[n * p_n + j];
          double x = 0.0;
          for (std::size_t e = 0; e < e_n; ++e)
            x += batch.at(a, i, e) * batch.at(n, j, e);
          x /= na * nn;
          const double x2 = x * x;
          const double clamped = std::min(1.0, std::max(kCeClampFloor, x2));
          total += std::log(clamped);
          if (x2 > kCeClampFloor && x2 < 1.0) {
            // d log(x^2)/d e_a = (2/x) (e_n~ - x e_a~)/|e_a|, symmetric in n.
            const double g = scale * 2.0 / x;
            for (std::size_t e = 0; e < e_n; ++e) {
              const double ea = batch.at(a, i, e) / na;
              const double en = batch.at(n, j, e) / nn;
              out.grad[(a * p_n + i) * e_n + e] += g * (en - x * ea) / na;
              out.grad[(n * p_n + j) * e_n + e] += g * (ea - x * en) / nn;
            }
          }
        }
      }
    }
  }
  out.value = scale * total;
  if (sign_flipped) {
    out.value = -out.value;
    for (double& g : out.grad) g = -g;
  }
  return out;
}

// L = si_sdr_term + lambda_1 * htm_term + lambda_2 * ce_term.
inline double combined_loss(double si_sdr_term, double htm_term, double ce_term,
                            const LossWeights& w) {
  return si_sdr_term + w.lambda_htm * htm_term + w.lambda_ce * ce_term;
}

// Gradient of the combined loss given the term gradients (all same length).
inline std::vector<double> combined_loss_grad(const std::vector<double>& si_sdr_grad,
                                              const std::vector<double>& htm_grad,
                                              const std::vector<double>& ce_grad,
                                              const LossWeights& w) {
  const std::size_t n = std::max({si_sdr_grad.size(), htm_grad.size(), ce_grad.size()});
  std::vector<double> g(n, 0.0);
  for (std::size_t i = 0; i < si_sdr_grad.size(); ++i) g[i] += si_sdr_grad[i];
  for (std::size_t i = 0; i < htm_grad.size(); ++i) g[i] += w.lambda_htm * htm_grad[i];
  for (std::size_t i = 0; i < ce_grad.size(); ++i) g[i] += w.lambda_ce * ce_grad[i];
  return g;
}

// FAR(delta): fraction of different-speaker (ordered) pairs closer than delta.
inline double far(const TripletBatch& batch, double delta) {
  batch.require_minable();
  const std::size_t b_n = batch.speakers, p_n = batch.utterances;
  std::size_t hits = 0;
  for (std::size_t a = 0; a < b_n; ++a)
    for (std::size_t n = 0; n < b_n; ++n) {
      if (n == a) continue;
      for (std::size_t i = 0; i < p_n; ++i)
        for (std::size_t j = 0; j < p_n; ++j)
          if (distance(batch.embedding(a, i), batch.embedding(n, j)) < delta) ++hits;
    }
  return static_cast<double>(hits) /
         (static_cast<double>(b_n * b_n - b_n) * static_cast<double>(p_n) *
          static_cast<double>(p_n));
}

// FRR(delta): fraction of same-speaker (ordered, distinct) pairs farther than delta.
inline double frr(const TripletBatch& batch, double delta) {
  batch.require_minable();
  const std::size_t b_n = batch.speakers, p_n = batch.utterances;
  std::size_t hits = 0;
  for (std::size_t a = 0; a < b_n; ++a)
    for (std::size_t i = 0; i < p_n; ++i)
      for (std::size_t j = 0; j < p_n; ++j) {
        if (j == i) continue;
        if (distance(batch.embedding(a, i), batch.embedding(a, j)) > delta) ++hits;
      }
  return static_cast<double>(hits) /
         (static_cast<double>(b_n) * static_cast<double>(p_n * p_n - p_n));
}

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;  // delta-hat
};

namespace detail {

struct DistancePools {
  std::vector<double> inter;  // sorted, unordered pairs
  std::vector<double> intra;  // sorted, unordered pairs
};

inline DistancePools collect_distances(const TripletBatch& batch) {
  batch.require_minable();
  DistancePools pools;
  const std::size_t b_n = batch.speakers, p_n = batch.utterances;
  for (std::size_t a = 0; a < b_n; ++a)
    for (std::size_t i = 0; i < p_n; ++i)
      for (std::size_t n = a; n < b_n; ++n)
        for (std::size_t j = (n == a ? i + 1 : 0); j < p_n; ++j) {
          const double d = distance(batch.embedding(a, i), batch.embedding(n, j));
          (n == a ? pools.intra : pools.inter).push_back(d);
        }
  std::sort(pools.inter.begin(), pools.inter.end());
  std::sort(pools.intra.begin(), pools.intra.end());
  return pools;
}

// Counting versions of FAR/FRR over the sorted unordered pools; they match
// the quadruple-sum definitions because distances are symmetric.
inline double far_sorted(const DistancePools& p, double delta) {
  const auto it = std::lower_bound(p.inter.begin(), p.inter.end(), delta);
  return static_cast<double>(it - p.inter.begin()) / static_cast<double>(p.inter.size());
}

inline double frr_sorted(const DistancePools& p, double delta) {
  const auto it = std::upper_bound(p.intra.begin(), p.intra.end(), delta);
  return static_cast<double>(p.intra.end() - it) / static_cast<double>(p.intra.size());
}

}  // namespace detail

// FAR/FRR evaluated at each threshold via sorted distance pools; equal to
// the quadruple-sum definitions, fast enough for dense sweeps.
inline std::vector<std::pair<double, double>> far_frr_sweep(const TripletBatch& batch,
                                                            const std::vector<double>& deltas) {
  const detail::DistancePools pools = detail::collect_distances(batch);
  std::vector<std::pair<double, double>> out;
  out.reserve(deltas.size());
  for (double d : deltas)
    out.emplace_back(detail::far_sorted(pools, d), detail::frr_sorted(pools, d));
  return out;
}

// Sweeps delta over every observed pairwise distance plus the midpoints
// between consecutive sorted values (FAR and FRR are step functions, so the
// sweep is exact). The minimizing |FAR - FRR| region is an interval of
// candidates; delta-hat is its midpoint and the EER the mean of the two
// rates there.
inline EerResult eer(const TripletBatch& batch) {
  const detail::DistancePools pools = detail::collect_distances(batch);

  std::vector<double> candidates;
  candidates.reserve(2 * (pools.inter.size() + pools.intra.size()) + 2);
  std::vector<double> all(pools.inter);
  all.insert(all.end(), pools.intra.begin(), pools.intra.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  candidates.push_back(0.0);
  for (std::size_t i = 0; i < all.size(); ++i) {
    candidates.push_back(all[i]);
    if (i + 1 < all.size()) candidates.push_back(0.5 * (all[i] + all[i + 1]));
  }
  if (!all.empty()) candidates.push_back(all.back() + 1.0);

  double best_gap = std::numeric_limits<double>::infinity();
  double first_best = 0.0, last_best = 0.0;
  for (double delta : candidates) {
    const double gap =
        std::abs(detail::far_sorted(pools, delta) - detail::frr_sorted(pools, delta));
    if (gap < best_gap - 1e-15) {
      best_gap = gap;
      first_best = last_best = delta;
    } else if (gap <= best_gap + 1e-15) {
      last_best = delta;
    }
  }

  EerResult out;
  out.threshold = 0.5 * (first_best + last_best);
  out.eer = 0.5 * (detail::far_sorted(pools, out.threshold) +
                   detail::frr_sorted(pools, out.threshold));
  return out;
}

// Block error rate: fraction of per-block assignments whose embedding is
// farther than delta-hat from the speaker's reference embedding.
inline double block_error_rate(const std::vector<Embedding>& reference,
                               const std::vector<std::vector<Embedding>>& blocks,
                               double delta) {
  if (reference.empty() || blocks.size() != reference.size())
    throw invalid_input("block_error_rate: need one block row per reference speaker");
  const std::size_t n_blocks = blocks.front().size();
  std::size_t errors = 0;
  for (std::size_t c = 0; c < reference.size(); ++c) {
    if (blocks[c].size() != n_blocks)
      throw invalid_input("block_error_rate: ragged block matrix");
    for (std::size_t b = 0; b < n_blocks; ++b)
      if (distance(reference[c], blocks[c][b]) > delta) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(reference.size() * n_blocks);
}

}  // namespace bssd
