#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/diarization.hpp"
#include "bssd/doa_grid.hpp"
#include "bssd/geometry.hpp"
#include "bssd/localization.hpp"
#include "bssd/metrics.hpp"
#include "bssd/rir_sim.hpp"
#include "bssd/rir.hpp"
#include "bssd/signal.hpp"
#include "bssd/stft.hpp"
#include "bssd/wav.hpp"
#include "bssd/whitening.hpp"

namespace bssd {

// Flat key-value configuration: one "key value" pair per line, '#' comments.
// CLI flags override file entries. The canonical dump (sorted keys) feeds
// the config hash embedded in manifests.
class KeyValueConfig {
 public:
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback = "") const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stod(it->second);
  }

  long get_int(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stol(it->second);
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw invalid_input("config: cannot open " + path);
    KeyValueConfig cfg;
    std::string line;
    while (std::getline(f, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      std::string key;
      if (!(ss >> key)) continue;
      std::string value, word;
      while (ss >> word) {
        if (!value.empty()) value += " ";
        value += word;
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  std::string canonical_dump() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " " << v << "\n";
    return out.str();
  }

  std::string hash_hex() const {
    std::ostringstream out;
    out << std::hex << fnv1a64(canonical_dump());
    return out.str();
  }

 private:
  std::map<std::string, std::string> values_;
};

enum class EmbedderKind { Oracle, Fixture, ExternalContainer };

// Aggregated experiment settings; every CLI command resolves its parameters
// through this.
struct PipelineConfig {
  std::string geometry_path;  // empty: built-in 6-channel circular array
  std::size_t d_count = 100;
  StftConfig stft;
  std::size_t tap_count = 100;  // T_A
  BlockConfig block;
  double delta = 0.5;
  LossWeights loss;  // margin, lambda_1 = 1e-2, lambda_2 = 1e-4
  EstimatorKind estimator = EstimatorKind::AnalyticFd;
  EmbedderKind embedder = EmbedderKind::Oracle;
  std::uint64_t seed = 1234;
  int max_iterations = 8;
  double epsilon = 1e-3;  // ZCA diagonal loading

  static PipelineConfig from_kv(const KeyValueConfig& kv) {
    PipelineConfig cfg;
    cfg.geometry_path = kv.get("geometry");
    cfg.d_count = static_cast<std::size_t>(kv.get_int("doa.count", 100));
    cfg.stft.fft_size = static_cast<std::size_t>(kv.get_int("stft.fft", 1024));
    cfg.stft.hop = static_cast<std::size_t>(kv.get_int("stft.hop", 256));
    cfg.tap_count = static_cast<std::size_t>(kv.get_int("td.taps", 100));
    cfg.block.block_seconds = kv.get_double("block.seconds", 5.0);
    cfg.delta = kv.get_double("delta", 0.5);
    cfg.loss.margin = kv.get_double("loss.margin", 1.0);
    cfg.loss.lambda_htm = kv.get_double("loss.lambda1", 1e-2);
    cfg.loss.lambda_ce = kv.get_double("loss.lambda2", 1e-4);
    cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1234));
    cfg.max_iterations = static_cast<int>(kv.get_int("max.iterations", 8));
    cfg.epsilon = kv.get_double("zca.epsilon", 1e-3);

    const std::string est = kv.get("estimator", "analytic-fd");
    if (est == "analytic-fd") cfg.estimator = EstimatorKind::AnalyticFd;
    else if (est == "statistic-fd") cfg.estimator = EstimatorKind::StatisticFd;
    else if (est == "analytic-td") cfg.estimator = EstimatorKind::AnalyticTd;
    else if (est == "statistic-td") cfg.estimator = EstimatorKind::StatisticTd;
    else throw invalid_config("config: unknown estimator " + est);

    const std::string emb = kv.get("embedder", "oracle");
    if (emb == "oracle") cfg.embedder = EmbedderKind::Oracle;
    else if (emb == "fixture") cfg.embedder = EmbedderKind::Fixture;
    else if (emb == "external-container") cfg.embedder = EmbedderKind::ExternalContainer;
    else throw invalid_config("config: unknown embedder " + emb);

    if (cfg.d_count < 2) throw invalid_config("config: doa.count must be >= 2");
    return cfg;
  }

  ArrayGeometry geometry() const {
    return geometry_path.empty() ? circular_array() : load_geometry(geometry_path);
  }

  // Effective settings as flat keys; manifests embed the hash of this dump.
  KeyValueConfig to_kv() const {
    KeyValueConfig kv;
    kv.set("geometry", geometry_path.empty() ? "<builtin-circular-6ch>" : geometry_path);
    kv.set("doa.count", std::to_string(d_count));
    kv.set("stft.fft", std::to_string(stft.fft_size));
    kv.set("stft.hop", std::to_string(stft.hop));
    kv.set("td.taps", std::to_string(tap_count));
    kv.set("block.seconds", std::to_string(block.block_seconds));
    kv.set("delta", std::to_string(delta));
    kv.set("loss.margin", std::to_string(loss.margin));
    kv.set("loss.lambda1", std::to_string(loss.lambda_htm));
    kv.set("loss.lambda2", std::to_string(loss.lambda_ce));
    kv.set("seed", std::to_string(seed));
    kv.set("max.iterations", std::to_string(max_iterations));
    kv.set("zca.epsilon", std::to_string(epsilon));
    const char* est_names[] = {"analytic-fd", "statistic-fd", "analytic-td", "statistic-td"};
    kv.set("estimator", est_names[static_cast<int>(estimator)]);
    const char* emb_names[] = {"oracle", "fixture", "external-container"};
    kv.set("embedder", emb_names[static_cast<int>(embedder)]);
    return kv;
  }

  LocalizeParams localize_params() const {
    LocalizeParams p;
    p.delta = delta;
    p.max_iterations = max_iterations;
    return p;
  }
};

// One source line of a mix scene: a mono signal plus either a labeled RIR
// file or an inline room description.
struct SceneSource {
  std::string signal_path;
  std::string rir_path;      // exclusive with room
  std::optional<RoomSpec> room;
  double gain = 1.0;
};

struct SceneSpec {
  std::vector<SceneSource> sources;
  double duration_seconds = 0.0;  // 0: keep the longest source
  std::uint64_t seed = 0;

  // Keys: source.N.signal, source.N.rir | source.N.room.{dim,rt60,src,array,order,seed},
  // source.N.gain, duration, seed.
  static SceneSpec from_kv(const KeyValueConfig& kv) {
    SceneSpec spec;
    spec.duration_seconds = kv.get_double("duration", 0.0);
    spec.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    for (int n = 1;; ++n) {
      const std::string prefix = "source." + std::to_string(n) + ".";
      if (!kv.has(prefix + "signal")) break;
      SceneSource src;
      src.signal_path = kv.get(prefix + "signal");
      src.rir_path = kv.get(prefix + "rir");
      src.gain = kv.get_double(prefix + "gain", 1.0);
      if (src.rir_path.empty() && kv.has(prefix + "room.dim")) {
        RoomSpec room;
        std::istringstream dims(kv.get(prefix + "room.dim"));
        dims >> room.dimensions[0] >> room.dimensions[1] >> room.dimensions[2];
        room.rt60_target = kv.get_double(prefix + "room.rt60", 0.3);
        std::istringstream sp(kv.get(prefix + "room.src", "1.0 1.0 1.5"));
        sp >> room.source_position[0] >> room.source_position[1] >> room.source_position[2];
        std::istringstream ap(kv.get(prefix + "room.array",
                                     std::to_string(room.dimensions[0] / 2) + " " +
                                         std::to_string(room.dimensions[1] / 2) + " 1.2"));
        ap >> room.array_position[0] >> room.array_position[1] >> room.array_position[2];
        if (kv.has(prefix + "room.order"))
          room.max_order = static_cast<int>(kv.get_int(prefix + "room.order", 0));
        room.seed = static_cast<std::uint64_t>(kv.get_int(prefix + "room.seed", 0));
        src.room = room;
      }
      if (src.rir_path.empty() && !src.room)
        throw invalid_input("scene: source " + std::to_string(n) + " needs a rir or room");
      spec.sources.push_back(std::move(src));
    }
    if (spec.sources.empty()) throw invalid_input("scene: no sources listed");
    return spec;
  }
};

struct MixedScene {
  MultiChannelSignal mixture;
  std::vector<MultiChannelSignal> references;  // anechoic r_c = s_c, gain applied
  std::vector<int> doa_labels;
  std::vector<RoomImpulseResponse> rirs;
};

// Convolves each source with its RIR (file or freshly simulated room),
// labels the RIR on the grid, applies gains and sums.
inline MixedScene mix_scene(const SceneSpec& spec, const ArrayGeometry& geo,
                            const DoaGrid& grid) {
  MixedScene scene;
  std::vector<MultiChannelSignal> images;
  for (const SceneSource& src : spec.sources) {
    MultiChannelSignal s = read_wav(src.signal_path);
    if (s.channels != 1) throw invalid_input("scene: source signals must be mono");
    if (spec.duration_seconds > 0.0) {
      const auto want =
          static_cast<std::size_t>(std::llround(spec.duration_seconds * s.sample_rate));
      s.samples.resize(want, 0.0);
    }
    for (auto& v : s.samples) v *= src.gain;

    RoomImpulseResponse rir;
    if (!src.rir_path.empty()) {
      const MultiChannelSignal r = read_wav(src.rir_path);
      rir.taps = r.samples;
      rir.channels = r.channels;
      rir.sample_rate = r.sample_rate;
    } else {
      rir = simulate_rir(*src.room, geo);
    }
    if (rir.channels != geo.channels())
      throw invalid_input("scene: RIR channel count does not match the geometry");

    rir = label_doa(rir, grid);
    scene.doa_labels.push_back(*rir.doa_label);
    images.push_back(convolve_rir(s, rir));
    scene.references.push_back(s);
    scene.rirs.push_back(std::move(rir));
  }
  scene.mixture = mix(images);
  return scene;
}

}  // namespace bssd
