#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/metrics.hpp"
#include "bssd/rng.hpp"

namespace bssd {

// Central finite differences of a scalar function; the numeric side of the
// gradient checks. Only calls the value path, never the analytic gradients.
inline std::vector<double> central_differences(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double step = 1e-6) {
  std::vector<double> g(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  int points = 0;
  int skipped = 0;  // hinge/tie/cap neighborhoods excluded from the check
  bool pass = false;
};

namespace detail {

// |margin slack| of every anchor must clear the band, and extremum picks
// must be unique by the same band, for the HTM loss to be differentiable at
// the point.
inline bool htm_point_is_smooth(const TripletBatch& batch, double margin, double band) {
  const std::size_t b_n = batch.speakers, p_n = batch.utterances;
  auto dist2 = [&](std::size_t b1, std::size_t p1, std::size_t b2, std::size_t p2) {
    return distance(batch.embedding(b1, p1), batch.embedding(b2, p2));
  };
  for (std::size_t i = 0; i < b_n; ++i) {
    for (std::size_t a = 0; a < p_n; ++a) {
      std::vector<double> pos, neg;
      for (std::size_t p = 0; p < p_n; ++p) pos.push_back(dist2(i, a, i, p));
      for (std::size_t j = 0; j < b_n; ++j) {
        if (j == i) continue;
        for (std::size_t p = 0; p < p_n; ++p) neg.push_back(dist2(i, a, j, p));
      }
      std::sort(pos.rbegin(), pos.rend());
      std::sort(neg.begin(), neg.end());
      if (pos.size() > 1 && pos[0] - pos[1] < band && pos[1] > 0.0) return false;
      if (neg.size() > 1 && neg[1] - neg[0] < band) return false;
      if (std::abs(margin + pos[0] - neg[0]) < band) return false;
    }
  }
  return true;
}

}  // namespace detail

// The standard gradient-check suite: SI-SDR, hard-triplet-mining loss, CE
// regularizer and the combined loss, each at `points` seeded random points
// away from hinge kinks, extremum ties and caps.
inline std::vector<GradCheckReport> run_gradient_checks(std::uint64_t seed, int points = 100,
                                                        double tolerance = 1e-4) {
  std::vector<GradCheckReport> reports;
  const double band = 1e-3;

  {
    GradCheckReport rep;
    rep.name = "si_sdr";
    Rng rng = Rng(seed).stream("gradcheck-sisdr");
    const std::size_t n = 16;
    for (int it = 0; it < points; ++it) {
      std::vector<double> y(n), r(n);
      for (auto& v : y) v = rng.normal();
      for (auto& v : r) v = rng.normal();
      const SiSdrResult res = si_sdr(y, r);
      if (std::abs(res.value_db) > kSiSdrCapDb - 1.0) {
        ++rep.skipped;
        continue;
      }
      const auto fd = central_differences(
          [&](const std::vector<double>& yy) { return si_sdr(yy, r).value_db; }, y);
      rep.max_rel_err = std::max(rep.max_rel_err, relative_error(res.grad, fd));
      ++rep.points;
    }
    rep.pass = rep.points > 0 && rep.max_rel_err < tolerance;
    reports.push_back(rep);
  }

  auto random_batch = [](Rng& rng, std::size_t b, std::size_t p, std::size_t e) {
    TripletBatch batch;
    batch.speakers = b;
    batch.utterances = p;
    batch.dim = e;
    batch.data.resize(b * p * e);
    for (auto& v : batch.data) v = rng.normal();
    return batch;
  };

  {
    GradCheckReport rep;
    rep.name = "triplet_loss_htm";
    Rng rng = Rng(seed).stream("gradcheck-htm");
    const double margin = 1.0;
    for (int it = 0; it < points; ++it) {
      TripletBatch batch = random_batch(rng, 3, 2, 5);
      if (!detail::htm_point_is_smooth(batch, margin, band)) {
        ++rep.skipped;
        continue;
      }
      const HtmResult res = triplet_loss_htm(batch, margin);
      const auto fd = central_differences(
          [&](const std::vector<double>& data) {
            TripletBatch bb = batch;
            bb.data = data;
            return triplet_loss_htm(bb, margin).value;
          },
          batch.data);
      rep.max_rel_err = std::max(rep.max_rel_err, relative_error(res.grad, fd));
      ++rep.points;
    }
    rep.pass = rep.points > 0 && rep.max_rel_err < tolerance;
    reports.push_back(rep);
  }

  {
    GradCheckReport rep;
    rep.name = "triplet_ce_regularizer";
    Rng rng = Rng(seed).stream("gradcheck-ce");
    for (int it = 0; it < points; ++it) {
      TripletBatch batch = random_batch(rng, 3, 2, 5);
      bool near_clamp = false;
      for (std::size_t a = 0; a < batch.speakers && !near_clamp; ++a)
        for (std::size_t n = 0; n < batch.speakers && !near_clamp; ++n) {
          if (n == a) continue;
          for (std::size_t i = 0; i < batch.utterances && !near_clamp; ++i)
            for (std::size_t j = 0; j < batch.utterances; ++j) {
              const Embedding ea = batch.embedding(a, i).normalized();
              const Embedding en = batch.embedding(n, j).normalized();
              double x = 0.0;
              for (std::size_t e = 0; e < batch.dim; ++e) x += ea.e[e] * en.e[e];
              if (x * x < 1e-6 || x * x > 1.0 - 1e-6) {
                near_clamp = true;
                break;
              }
            }
        }
      if (near_clamp) {
        ++rep.skipped;
        continue;
      }
      const CeResult res = triplet_ce_regularizer(batch);
      const auto fd = central_differences(
          [&](const std::vector<double>& data) {
            TripletBatch bb = batch;
            bb.data = data;
            return triplet_ce_regularizer(bb).value;
          },
          batch.data);
      rep.max_rel_err = std::max(rep.max_rel_err, relative_error(res.grad, fd));
      ++rep.points;
    }
    rep.pass = rep.points > 0 && rep.max_rel_err < tolerance;
    reports.push_back(rep);
  }

  {
    // Combined loss over a shared embedding batch: the SI-SDR term is held
    // at a fixed scalar (it depends on signals, not embeddings), so the
    // check exercises the weighted combination of the two batch terms.
    GradCheckReport rep;
    rep.name = "combined_loss";
    Rng rng = Rng(seed).stream("gradcheck-combined");
    LossWeights weights;
    weights.margin = 1.0;
    for (int it = 0; it < points; ++it) {
      TripletBatch batch = random_batch(rng, 3, 2, 5);
      if (!detail::htm_point_is_smooth(batch, weights.margin, band)) {
        ++rep.skipped;
        continue;
      }
      const double si_term = rng.normal();
      const HtmResult htm = triplet_loss_htm(batch, weights.margin);
      const CeResult ce = triplet_ce_regularizer(batch);
      const std::vector<double> analytic =
          combined_loss_grad({}, htm.grad, ce.grad, weights);
      const auto fd = central_differences(
          [&](const std::vector<double>& data) {
            TripletBatch bb = batch;
            bb.data = data;
            return combined_loss(si_term, triplet_loss_htm(bb, weights.margin).value,
                                 triplet_ce_regularizer(bb).value, weights);
          },
          batch.data);
      rep.max_rel_err = std::max(rep.max_rel_err, relative_error(analytic, fd));
      ++rep.points;
    }
    rep.pass = rep.points > 0 && rep.max_rel_err < tolerance;
    reports.push_back(rep);
  }

  return reports;
}

}  // namespace bssd
