#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bssd/gradcheck.hpp"
#include "bssd/metrics.hpp"
#include "bssd/rng.hpp"
#include "fixtures.hpp"

using namespace bssd;

namespace {

TripletBatch random_batch(Rng& rng, std::size_t b, std::size_t p, std::size_t e) {
  TripletBatch batch;
  batch.speakers = b;
  batch.utterances = p;
  batch.dim = e;
  batch.data.resize(b * p * e);
  for (auto& v : batch.data) v = rng.normal();
  return batch;
}

// Two tight clusters: speaker means separated by `gap`, utterances jittered
// by at most `spread` in L2.
TripletBatch two_cluster_batch(std::size_t p, double spread, double gap, Rng& rng) {
  TripletBatch batch;
  batch.speakers = 2;
  batch.utterances = p;
  batch.dim = 8;
  batch.data.assign(2 * p * 8, 0.0);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < p; ++i) {
      std::vector<double> dir(8);
      double n = 0.0;
      for (auto& v : dir) {
        v = rng.normal();
        n += v * v;
      }
      const double r = rng.uniform(0.0, spread * 0.5);
      for (std::size_t e = 0; e < 8; ++e)
        batch.at(s, i, e) = (s == 0 ? 0.0 : gap) * (e == 0 ? 1.0 : 0.0) +
                            dir[e] / std::sqrt(n) * r;
    }
  return batch;
}

}  // namespace

TEST_CASE("si_sdr") {
  Rng rng(701);

  SUBCASE("scaled copy caps at +300 dB") {
    const std::vector<double> r = fixtures::white_noise(64, rng);
    std::vector<double> y = r;
    for (auto& v : y) v *= -2.5;
    CHECK(si_sdr(y, r).value_db == kSiSdrCapDb);
  }

  SUBCASE("orthogonal estimate caps at -300 dB") {
    std::vector<double> r(16, 0.0), y(16, 0.0);
    r[0] = 1.0;
    y[1] = 1.0;
    CHECK(si_sdr(y, r).value_db == -kSiSdrCapDb);
  }

  SUBCASE("matches the direct formula on random pairs") {
    for (int it = 0; it < 20; ++it) {
      const std::vector<double> y = fixtures::white_noise(16, rng);
      const std::vector<double> r = fixtures::white_noise(16, rng);
      double rr = 0.0, yr = 0.0;
      for (std::size_t i = 0; i < 16; ++i) {
        rr += r[i] * r[i];
        yr += y[i] * r[i];
      }
      const double alpha = yr / rr;
      double p = 0.0, e = 0.0;
      for (std::size_t i = 0; i < 16; ++i) {
        p += alpha * r[i] * alpha * r[i];
        e += (alpha * r[i] - y[i]) * (alpha * r[i] - y[i]);
      }
      CHECK(si_sdr(y, r).value_db == doctest::Approx(10.0 * std::log10(p / e)).epsilon(1e-12));
    }
  }

  SUBCASE("gradient matches central differences") {
    for (int it = 0; it < 10; ++it) {
      const std::vector<double> y = fixtures::white_noise(16, rng);
      const std::vector<double> r = fixtures::white_noise(16, rng);
      const SiSdrResult res = si_sdr(y, r);
      const auto fd = central_differences(
          [&](const std::vector<double>& yy) { return si_sdr(yy, r).value_db; }, y);
      CHECK(relative_error(res.grad, fd) < 1e-5);
    }
  }

  SUBCASE("scale invariance in both arguments") {
    const std::vector<double> y = fixtures::white_noise(64, rng);
    const std::vector<double> r = fixtures::white_noise(64, rng);
    const double base = si_sdr(y, r).value_db;
    std::vector<double> y2 = y, r2 = r;
    for (auto& v : y2) v *= 7.3;
    for (auto& v : r2) v *= 0.21;
    CHECK(si_sdr(y2, r).value_db == doctest::Approx(base).epsilon(1e-10));
    CHECK(si_sdr(y, r2).value_db == doctest::Approx(base).epsilon(1e-10));
  }

  SUBCASE("zero reference and length mismatch are rejected") {
    CHECK_THROWS_AS(si_sdr({1.0, 2.0}, {0.0, 0.0}), invalid_input);
    CHECK_THROWS_AS(si_sdr({1.0}, {1.0, 2.0}), invalid_input);
  }
}

TEST_CASE("triplet loss") {
  Embedding a, p, n;
  a.e = {1.0, 0.0};
  p.e = {1.0, 0.0};
  n.e = {0.0, 1.0};

  SUBCASE("anchor equals positive with unit-distance negative") {
    n.e = {1.0 - std::sqrt(0.5), std::sqrt(0.5)};
    // |a-n| is not 1 here; construct it exactly instead
    n.e = {0.0, 0.0};
    n.e = {1.0, 1.0};  // |a-n| = 1
    CHECK(triplet_loss(a, p, n, 0.2) == 0.0);
  }

  SUBCASE("all equal gives the margin") {
    CHECK(triplet_loss(a, a, a, 0.37) == doctest::Approx(0.37));
  }

  SUBCASE("random triplets match the direct formula") {
    Rng rng(703);
    for (int it = 0; it < 25; ++it) {
      Embedding ea, ep, en;
      ea.e = fixtures::white_noise(5, rng);
      ep.e = fixtures::white_noise(5, rng);
      en.e = fixtures::white_noise(5, rng);
      const double beta = rng.uniform(0.1, 2.0);
      const double expect =
          std::max(0.0, distance(ea, ep) - distance(ea, en) + beta);
      CHECK(triplet_loss(ea, ep, en, beta) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("hard triplet mining") {
  Rng rng(707);

  SUBCASE("separated clusters score zero") {
    const TripletBatch batch = two_cluster_batch(4, 0.05, 3.0, rng);
    CHECK(triplet_loss_htm(batch, 1.0).value == 0.0);
  }

  SUBCASE("all-identical embeddings score the margin") {
    TripletBatch batch;
    batch.speakers = 3;
    batch.utterances = 2;
    batch.dim = 4;
    batch.data.assign(24, 0.7);
    CHECK(triplet_loss_htm(batch, 0.9).value == doctest::Approx(0.9));
  }

  SUBCASE("matches the exhaustive anchor loop oracle") {
    for (int it = 0; it < 10; ++it) {
      const TripletBatch batch = random_batch(rng, 3, 2, 4);
      const double beta = 1.0;
      double expect = 0.0;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t a = 0; a < 2; ++a) {
          double maxpos = 0.0;
          for (std::size_t p = 0; p < 2; ++p)
            maxpos = std::max(maxpos, distance(batch.embedding(i, a), batch.embedding(i, p)));
          double minneg = 1e300;
          for (std::size_t j = 0; j < 3; ++j) {
            if (j == i) continue;
            for (std::size_t p = 0; p < 2; ++p)
              minneg = std::min(minneg, distance(batch.embedding(i, a), batch.embedding(j, p)));
          }
          expect += std::max(0.0, beta + maxpos - minneg);
        }
      expect /= 6.0;
      CHECK(triplet_loss_htm(batch, beta).value == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("nonnegative and zero iff every anchor clears the margin") {
    for (int it = 0; it < 20; ++it) {
      const TripletBatch batch = random_batch(rng, 2, 3, 6);
      CHECK(triplet_loss_htm(batch, 0.5).value >= 0.0);
    }
    const TripletBatch tight = two_cluster_batch(3, 0.01, 5.0, rng);
    CHECK(triplet_loss_htm(tight, 1.0).value == 0.0);
  }

  SUBCASE("degenerate batch dims are rejected") {
    TripletBatch bad;
    bad.speakers = 1;
    bad.utterances = 4;
    bad.dim = 2;
    bad.data.assign(8, 0.0);
    CHECK_THROWS_AS(triplet_loss_htm(bad, 1.0), invalid_input);
  }
}

TEST_CASE("cross-entropy regularizer") {
  Rng rng(709);

  SUBCASE("parallel embeddings score zero") {
    TripletBatch batch;
    batch.speakers = 2;
    batch.utterances = 2;
    batch.dim = 3;
    batch.data.assign(12, 0.0);
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t p = 0; p < 2; ++p) {
        batch.at(s, p, 0) = (s + 1) * (p + 2) * 0.5;  // all along e1
      }
    CHECK(triplet_ce_regularizer(batch).value == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("orthogonal speakers hit the documented clamp") {
    TripletBatch batch;
    batch.speakers = 2;
    batch.utterances = 2;
    batch.dim = 4;
    batch.data.assign(16, 0.0);
    for (std::size_t p = 0; p < 2; ++p) {
      batch.at(0, p, 0) = 1.0;
      batch.at(1, p, 1) = 1.0;
    }
    // every cross term log(1e-12) = -12 ln 10, scaled by -1/((B^2-B)P^2)
    CHECK(triplet_ce_regularizer(batch).value ==
          doctest::Approx(12.0 * std::log(10.0)).epsilon(1e-12));
  }

  SUBCASE("matches the quadruple-loop oracle") {
    for (int it = 0; it < 10; ++it) {
      const TripletBatch batch = random_batch(rng, 3, 2, 5);
      double expect = 0.0;
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t n = 0; n < 3; ++n) {
          if (n == a) continue;
          for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
              const Embedding ea = batch.embedding(a, i).normalized();
              const Embedding en = batch.embedding(n, j).normalized();
              double x = 0.0;
              for (std::size_t e = 0; e < 5; ++e) x += ea.e[e] * en.e[e];
              expect += std::log(std::min(1.0, std::max(1e-12, x * x)));
            }
        }
      expect *= -1.0 / ((9.0 - 3.0) * 4.0);
      CHECK(triplet_ce_regularizer(batch).value == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("sign-flipped variant negates value and gradient") {
    const TripletBatch batch = random_batch(rng, 2, 2, 4);
    const CeResult plain = triplet_ce_regularizer(batch);
    const CeResult flipped = triplet_ce_regularizer(batch, true);
    CHECK(flipped.value == doctest::Approx(-plain.value));
    for (std::size_t i = 0; i < plain.grad.size(); ++i)
      CHECK(flipped.grad[i] == doctest::Approx(-plain.grad[i]));
  }

  SUBCASE("zero embedding is rejected") {
    TripletBatch batch = random_batch(rng, 2, 2, 3);
    for (std::size_t e = 0; e < 3; ++e) batch.at(0, 1, e) = 0.0;
    CHECK_THROWS_AS(triplet_ce_regularizer(batch), invalid_input);
  }
}

TEST_CASE("combined loss") {
  Rng rng(711);
  LossWeights w;
  w.lambda_htm = 1e-2;
  w.lambda_ce = 1e-4;

  SUBCASE("weighted sum of term values") {
    for (int it = 0; it < 10; ++it) {
      const double a = rng.normal(), b = rng.normal(), c = rng.normal();
      CHECK(combined_loss(a, b, c, w) == doctest::Approx(a + 1e-2 * b + 1e-4 * c));
    }
  }

  SUBCASE("zero weights reduce to the SI-SDR term") {
    LossWeights zero;
    zero.lambda_htm = 0.0;
    zero.lambda_ce = 0.0;
    CHECK(combined_loss(3.25, 100.0, -50.0, zero) == 3.25);
  }

  SUBCASE("gradient is the weighted sum of gradients") {
    const std::vector<double> g1 = fixtures::white_noise(6, rng);
    const std::vector<double> g2 = fixtures::white_noise(6, rng);
    const std::vector<double> g3 = fixtures::white_noise(6, rng);
    const auto g = combined_loss_grad(g1, g2, g3, w);
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(g[i] == doctest::Approx(g1[i] + 1e-2 * g2[i] + 1e-4 * g3[i]));
  }
}

TEST_CASE("full gradient-check suite") {
  const auto reports = run_gradient_checks(20240817, 100);
  REQUIRE(reports.size() == 4);
  for (const auto& rep : reports) {
    INFO(rep.name, " max_rel_err=", rep.max_rel_err, " points=", rep.points,
         " skipped=", rep.skipped);
    CHECK(rep.pass);
    CHECK(rep.points >= 50);  // the kink/tie filter must not eat the budget
  }
}

TEST_CASE("far / frr / eer") {
  Rng rng(719);

  SUBCASE("hand-built 2x2 batch matches hand counts at three thresholds") {
    TripletBatch batch;
    batch.speakers = 2;
    batch.utterances = 2;
    batch.dim = 1;
    batch.data = {0.0, 0.1, 1.0, 1.05};
    // intra distances: |0-0.1| = 0.1, |1-1.05| = 0.05
    // inter distances: 1.0, 1.05, 0.9, 0.95
    CHECK(far(batch, 0.92) == doctest::Approx(2.0 / 8.0));   // 0.9 only (x2 ordered)
    CHECK(frr(batch, 0.92) == doctest::Approx(0.0));
    CHECK(far(batch, 0.07) == doctest::Approx(0.0));
    CHECK(frr(batch, 0.07) == doctest::Approx(2.0 / 4.0));   // 0.1 pair (x2 ordered)
    CHECK(far(batch, 2.0) == doctest::Approx(1.0));
    CHECK(frr(batch, 2.0) == doctest::Approx(0.0));
  }

  SUBCASE("separable clusters: EER 0 with threshold in the gap") {
    TripletBatch batch = two_cluster_batch(5, 0.1, 1.0, rng);
    const EerResult res = eer(batch);
    CHECK(res.eer == 0.0);
    CHECK(res.threshold > 0.1);
    CHECK(res.threshold < 1.0);
    CHECK(far(batch, res.threshold) == 0.0);
    CHECK(frr(batch, res.threshold) == 0.0);
  }

  SUBCASE("random labels on one Gaussian cloud give EER near 0.5") {
    TripletBatch batch = random_batch(rng, 25, 8, 16);
    const EerResult res = eer(batch);
    CHECK(res.eer > 0.42);
    CHECK(res.eer < 0.58);
  }

  SUBCASE("FAR nondecreasing and FRR nonincreasing over the sweep") {
    TripletBatch batch = random_batch(rng, 6, 4, 8);
    std::vector<double> deltas;
    for (int i = 0; i <= 200; ++i) deltas.push_back(i * 0.05);
    const auto rates = far_frr_sweep(batch, deltas);
    for (std::size_t i = 1; i < rates.size(); ++i) {
      CHECK(rates[i].first >= rates[i - 1].first);
      CHECK(rates[i].second <= rates[i - 1].second);
    }
    // the sweep helper agrees with the quadruple-sum definitions
    for (std::size_t i = 0; i < deltas.size(); i += 37) {
      CHECK(rates[i].first == doctest::Approx(far(batch, deltas[i])));
      CHECK(rates[i].second == doctest::Approx(frr(batch, deltas[i])));
    }
  }
}

TEST_CASE("block error rate") {
  Embedding e1, e2;
  e1.e = {1.0, 0.0};
  e2.e = {0.0, 1.0};

  SUBCASE("identical embeddings give zero") {
    CHECK(block_error_rate({e1, e2}, {{e1, e1, e1}, {e2, e2, e2}}, 0.5) == 0.0);
  }

  SUBCASE("all distances above the threshold give one") {
    CHECK(block_error_rate({e1, e2}, {{e2, e2}, {e1, e1}}, 0.5) == 1.0);
  }

  SUBCASE("random case matches the enumeration oracle") {
    Rng rng(723);
    const std::size_t c = 3, nb = 5;
    std::vector<Embedding> refs(c);
    std::vector<std::vector<Embedding>> blocks(c, std::vector<Embedding>(nb));
    for (auto& r : refs) r.e = fixtures::white_noise(4, rng);
    for (auto& row : blocks)
      for (auto& e : row) e.e = fixtures::white_noise(4, rng);
    const double delta = 2.3;
    std::size_t errors = 0;
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t b = 0; b < nb; ++b)
        if (distance(refs[i], blocks[i][b]) > delta) ++errors;
    CHECK(block_error_rate(refs, blocks, delta) ==
          doctest::Approx(static_cast<double>(errors) / (c * nb)));
  }
}
