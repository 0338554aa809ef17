#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "bssd/rir_sim.hpp"
#include "bssd/rir.hpp"
#include "bssd/spatial_map.hpp"
#include "bssd/stft.hpp"
#include "bssd/whitening.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bssd;

namespace {

constexpr std::size_t kFft = 1024;
constexpr double kFs = 16000.0;

Spectrogram make_spectrogram(std::size_t frames, std::size_t bins, std::size_t channels) {
  Spectrogram z(frames, bins, channels);
  z.fft_size = kFft;
  z.hop = kFft / 4;
  z.sample_rate = kFs;
  return z;
}

}  // namespace

TEST_CASE("isotropic coherence") {
  const ArrayGeometry geo = circular_array();
  const CoherenceModel model = isotropic_coherence(geo, 513, kFs, kFft);

  SUBCASE("diagonal is 1 for every bin") {
    for (std::size_t k = 0; k < model.bin_count; k += 17)
      for (std::size_t i = 0; i < 6; ++i) CHECK(model.at(k, i, i) == 1.0);
  }

  SUBCASE("k = 0 is the all-ones matrix") {
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) CHECK(model.at(0, i, j) == 1.0);
  }

  SUBCASE("matches the sinc formula at 1 kHz for each pair") {
    const std::size_t k1k = 64;  // 64 * 16000 / 1024 = 1000 Hz
    REQUIRE(k1k * kFs / kFft == 1000.0);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        const double x = geo.pair_distance(i, j);
        const double arg = 2.0 * kPi * 1000.0 * x / geo.speed_of_sound;
        const double expect = x == 0.0 ? 1.0 : std::sin(arg) / arg;
        CHECK(model.at(k1k, i, j) == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }

  SUBCASE("entries stay in [-1, 1]") {
    for (double v : model.gamma) {
      CHECK(v <= 1.0);
      CHECK(v >= -1.0);
    }
  }
}

TEST_CASE("zca whitening") {
  const ArrayGeometry geo = circular_array();
  const CoherenceModel model = isotropic_coherence(geo, 513, kFs, kFft);
  const double eps = 1e-3;
  const WhiteningTransform u = zca(model, eps);

  SUBCASE("identity coherence gives (1+eps)^{-1/2} I") {
    CoherenceModel ident;
    ident.bin_count = 3;
    ident.channels = 4;
    ident.gamma.assign(3 * 16, 0.0);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < 4; ++i) ident.at(k, i, i) = 1.0;
    const WhiteningTransform w = zca(ident, eps);
    const double expect = 1.0 / std::sqrt(1.0 + eps);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
          CHECK(w.at(k, i, j) == doctest::Approx(i == j ? expect : 0.0).epsilon(1e-12));
  }

  SUBCASE("defining property: U (Gamma + eps I) U^T = I within 1e-8") {
    for (std::size_t k = 0; k < u.bin_count; k += 8) {
      for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
          double acc = 0.0;
          for (std::size_t a = 0; a < 6; ++a)
            for (std::size_t b = 0; b < 6; ++b)
              acc += u.at(k, i, a) * (model.at(k, a, b) + (a == b ? eps : 0.0)) * u.at(k, j, b);
          CHECK(std::abs(acc - (i == j ? 1.0 : 0.0)) < 1e-8);
        }
      }
    }
  }

  SUBCASE("U is symmetric within 1e-10") {
    for (std::size_t k = 0; k < u.bin_count; k += 5)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j)
          CHECK(std::abs(u.at(k, i, j) - u.at(k, j, i)) < 1e-10);
  }

  SUBCASE("matches the QL eigensolver oracle at 250 Hz") {
    const std::size_t k250 = 16;  // 16 * 16000 / 1024 = 250 Hz
    std::vector<double> gamma(36);
    for (std::size_t i = 0; i < 36; ++i) gamma[i] = model.gamma[k250 * 36 + i];
    const std::vector<double> u_oracle = oracles::zca_oracle(gamma, 6, eps);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        CHECK(std::abs(u.at(k250, i, j) - u_oracle[i * 6 + j]) < 1e-8);
  }

  SUBCASE("non-symmetric input is rejected") {
    CoherenceModel bad;
    bad.bin_count = 1;
    bad.channels = 2;
    bad.gamma = {1.0, 0.3, 0.1, 1.0};
    CHECK_THROWS_AS(zca(bad), invalid_input);
  }
}

TEST_CASE("spatial maps") {
  const ArrayGeometry geo = circular_array();
  const DoaGrid grid = make_doa_grid(40, geo);
  const CoherenceModel model = isotropic_coherence(geo, grid.bin_count, kFs, kFft);
  const WhiteningTransform u = zca(model);
  Rng rng(211);

  SUBCASE("parallel signal scores exactly 1, orthogonal scores 0") {
    const std::size_t d0 = 11, d1 = 25;
    Spectrogram z = make_spectrogram(2, grid.bin_count, grid.channels);
    for (std::size_t k = 0; k < grid.bin_count; ++k) {
      const cd s(0.3 * std::cos(0.01 * k), -0.2 * std::sin(0.013 * k));
      for (std::size_t m = 0; m < grid.channels; ++m) {
        z.at(0, k, m) = grid.steer(d0, k, m) * s;  // parallel to V(d0)
      }
      // orthogonal to V(d1): (conj(V2), -conj(V1), 0, ...)
      z.at(1, k, 0) = std::conj(grid.steer(d1, k, 1));
      z.at(1, k, 1) = -std::conj(grid.steer(d1, k, 0));
    }
    const SpatialMap map = spatial_map_raw(z, grid);
    for (std::size_t k = 1; k < grid.bin_count; k += 64) {
      CHECK(map.at(0, k, d0) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(map.at(1, k, d1) == doctest::Approx(0.0).epsilon(1e-24));
    }
  }

  SUBCASE("values in [0,1] and zero-energy bins give 0") {
    Spectrogram z = make_spectrogram(3, grid.bin_count, grid.channels);
    for (auto& v : z.bins) v = cd(rng.normal(), rng.normal());
    for (std::size_t k = 0; k < grid.bin_count; ++k)
      for (std::size_t m = 0; m < grid.channels; ++m) z.at(1, k, m) = cd{};  // silent frame
    const SpatialMap map = spatial_map_raw(z, grid);
    for (double v : map.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
    for (std::size_t k = 0; k < grid.bin_count; k += 100)
      for (std::size_t d = 0; d < grid.d_count; d += 7) CHECK(map.at(1, k, d) == 0.0);
  }

  SUBCASE("random spectrogram matches the literal per-bin oracle (raw and whitened)") {
    Spectrogram z = make_spectrogram(2, grid.bin_count, grid.channels);
    for (auto& v : z.bins) v = cd(rng.normal(), rng.normal());
    const SpatialMap raw = spatial_map_raw(z, grid);
    const SpatialMap white = spatial_map_whitened(z, grid, u);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t k = 0; k < grid.bin_count; k += 37)
        for (std::size_t d = 0; d < grid.d_count; d += 5) {
          CHECK(raw.at(l, k, d) ==
                doctest::Approx(oracles::gamma_raw_oracle(z, grid, l, k, d)).epsilon(1e-10));
          CHECK(white.at(l, k, d) ==
                doctest::Approx(oracles::gamma_whitened_oracle(z, grid, u, l, k, d))
                    .epsilon(1e-10));
        }
  }

  SUBCASE("whitened map with scaled identity U equals the raw map") {
    Spectrogram z = make_spectrogram(2, grid.bin_count, grid.channels);
    for (auto& v : z.bins) v = cd(rng.normal(), rng.normal());
    const WhiteningTransform ident = identity_whitening(grid.bin_count, grid.channels, 0.25);
    const SpatialMap raw = spatial_map_raw(z, grid);
    const SpatialMap white = spatial_map_whitened(z, grid, ident);
    for (std::size_t i = 0; i < raw.values.size(); i += 997)
      CHECK(white.values[i] == doctest::Approx(raw.values[i]).epsilon(1e-12));
  }

  SUBCASE("gamma is invariant to complex scaling of Z") {
    Spectrogram z = make_spectrogram(1, grid.bin_count, grid.channels);
    for (auto& v : z.bins) v = cd(rng.normal(), rng.normal());
    Spectrogram scaled = z;
    const cd alpha(1.7, -2.3);
    for (auto& v : scaled.bins) v *= alpha;
    const SpatialMap a = spatial_map_whitened(z, grid, u);
    const SpatialMap b = spatial_map_whitened(scaled, grid, u);
    const SpatialMap ar = spatial_map_raw(z, grid);
    const SpatialMap br = spatial_map_raw(scaled, grid);
    for (std::size_t i = 0; i < a.values.size(); i += 331) {
      CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-9));
      CHECK(ar.values[i] == doctest::Approx(br.values[i]).epsilon(1e-9));
    }
  }

  SUBCASE("maps survive the container round trip") {
    Spectrogram z = make_spectrogram(2, grid.bin_count, grid.channels);
    for (auto& v : z.bins) v = cd(rng.normal(), rng.normal());
    const SpatialMap map = spatial_map_whitened(z, grid, u);
    const auto dir = std::filesystem::temp_directory_path() / "bssd_map_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "map.bsst").string();
    save_tensor(path, map.to_tensor());
    const SpatialMap back = SpatialMap::from_tensor(load_tensor(path), MapKind::Whitened);
    REQUIRE(back.d_count == map.d_count);
    CHECK(back.values == map.values);
  }

  SUBCASE("noiseless plane wave: whitened argmax is the true direction in every energetic frame") {
    Rng noise_rng(7'000);
    fixtures::PlaneWaveSource src;
    src.doa_index = 23;
    src.amplitude = 1.0;
    src.dry = fixtures::band_limited_noise(16000, 100.0, 7000.0, kFs, noise_rng);
    const auto scene = fixtures::plane_wave_scene({src}, grid, kFs);
    StftConfig cfg;
    const Spectrogram z = stft(scene.mixture, cfg);
    const SpatialMap map = spatial_map_whitened(z, grid, u);
    const std::vector<double> power = bin_power(z);

    for (std::size_t l = 0; l < map.frames; ++l) {
      double frame_energy = 0.0;
      for (std::size_t k = 0; k < map.bin_count; ++k) frame_energy += power[l * map.bin_count + k];
      if (frame_energy < 1e-6) continue;
      std::size_t best = 0;
      double best_score = -1.0;
      for (std::size_t d = 0; d < map.d_count; ++d) {
        double score = 0.0;
        for (std::size_t k = 0; k < map.bin_count; ++k) score += map.at(l, k, d);
        if (score > best_score) {
          best_score = score;
          best = d;
        }
      }
      CHECK(best == 23);
    }
  }
}

TEST_CASE("weight map") {
  const ArrayGeometry geo = circular_array();
  const DoaGrid grid = make_doa_grid(15, geo);
  Rng rng(401);

  Spectrogram z(3, grid.bin_count, grid.channels);
  z.fft_size = kFft;
  z.hop = 256;
  for (auto& v : z.bins) v = cd(rng.normal(), rng.normal());

  const CoherenceModel model = isotropic_coherence(geo, grid.bin_count, kFs, kFft);
  const WhiteningTransform u = zca(model);
  const SpatialMap gamma_u = spatial_map_whitened(z, grid, u);

  SUBCASE("silent frame zeroes the weighted row") {
    Spectrogram zs = z;
    for (std::size_t k = 0; k < zs.bin_count; ++k)
      for (std::size_t m = 0; m < zs.channels; ++m) zs.at(1, k, m) = cd{};
    const SpatialMap gu = spatial_map_whitened(zs, grid, u);
    const SpatialMap gw = weight_map(gu, zs);
    for (std::size_t k = 0; k < gw.bin_count; ++k)
      for (std::size_t d = 0; d < gw.d_count; ++d) CHECK(gw.at(1, k, d) == 0.0);
  }

  SUBCASE("unit-power bins leave the map unchanged") {
    Spectrogram zu = z;
    for (std::size_t l = 0; l < zu.frames; ++l)
      for (std::size_t k = 0; k < zu.bin_count; ++k)
        for (std::size_t m = 0; m < zu.channels; ++m) {
          const cd v = zu.at(l, k, m);
          zu.at(l, k, m) = v / std::abs(v);  // every |Z| = 1 -> P_Z = 1
        }
    const SpatialMap gu = spatial_map_whitened(zu, grid, u);
    const SpatialMap gw = weight_map(gu, zu);
    for (std::size_t i = 0; i < gu.values.size(); i += 41)
      CHECK(gw.values[i] == doctest::Approx(gu.values[i]).epsilon(1e-12));
  }

  SUBCASE("random inputs match the elementwise product oracle") {
    const SpatialMap gw = weight_map(gamma_u, z);
    const std::vector<double> p = bin_power(z);
    for (std::size_t l = 0; l < 3; ++l)
      for (std::size_t k = 0; k < gw.bin_count; k += 19)
        for (std::size_t d = 0; d < gw.d_count; ++d)
          CHECK(gw.at(l, k, d) ==
                doctest::Approx(gamma_u.at(l, k, d) * p[l * gw.bin_count + k]).epsilon(1e-12));
  }
}

TEST_CASE("whitening benefit on a simulated anechoic speaker (low band)") {
  const ArrayGeometry geo = circular_array();
  const DoaGrid grid = make_doa_grid(60, geo);
  const CoherenceModel model = isotropic_coherence(geo, grid.bin_count, kFs, kFft);
  const WhiteningTransform u = zca(model);
  Rng rng(73);

  RoomSpec spec;
  spec.dimensions = {6.0, 5.0, 4.0};
  spec.array_position = {3.0, 2.5, 1.2};
  spec.max_order = 0;
  const int d0 = 21;
  const auto& p = grid.points[d0];
  spec.source_position = {3.0 + 1.5 * p[0], 2.5 + 1.5 * p[1], 1.2 + 1.5 * p[2]};
  const RoomImpulseResponse rir = simulate_rir(spec, geo);

  MultiChannelSignal dry = MultiChannelSignal::mono(
      fixtures::band_limited_noise(32000, 80.0, 7500.0, kFs, rng));
  const MultiChannelSignal zsig = convolve_rir(dry, rir);
  StftConfig cfg;
  const Spectrogram z = stft(zsig, cfg);
  const SpatialMap raw = spatial_map_raw(z, grid);
  const SpatialMap white = spatial_map_whitened(z, grid, u);

  // Normalized share of the low band (below 500 Hz) mass at the true DOA:
  // whitening concentrates the map there while the raw map spreads over
  // every direction.
  const std::size_t k_max = static_cast<std::size_t>(500.0 * kFft / kFs);  // 32 bins
  auto band_share = [&](const SpatialMap& map) {
    std::vector<double> mass(map.d_count, 0.0);
    for (std::size_t l = 0; l < map.frames; ++l)
      for (std::size_t k = 0; k <= k_max; ++k)
        for (std::size_t d = 0; d < map.d_count; ++d) mass[d] += map.at(l, k, d);
    double total = 0.0;
    for (double v : mass) total += v;
    return mass[d0] / total;
  };

  const double share_raw = band_share(raw);
  const double share_white = band_share(white);
  CHECK(share_white > share_raw);
  // the raw low band is nearly direction-blind: its share stays close to 1/D
  CHECK(share_raw < 2.5 / static_cast<double>(grid.d_count));
  CHECK(share_white > 2.0 * share_raw);
}
