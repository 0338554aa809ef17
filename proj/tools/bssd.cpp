// bssd - command line frontend for the BSSD pipeline: scene synthesis,
// localization, separation, block-online diarization, metrics and the
// shoebox room simulator.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "bssd/bssd.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bssd;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  PipelineConfig resolve() const {
    KeyValueConfig kv;
    if (!config_path.empty()) kv = KeyValueConfig::from_file(config_path);
    for (const auto& [k, v] : overrides) kv.set(k, v);
    return PipelineConfig::from_kv(kv);
  }
};

// temp file + rename, so partially written outputs never appear
void atomic_write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
    if (!f) throw invalid_input("cannot open " + tmp.string());
    f << text;
  }
  fs::rename(tmp, path);
}

void atomic_write_wav(const fs::path& path, const MultiChannelSignal& sig,
                      WavFormat fmt = WavFormat::Float32) {
  const fs::path tmp = path.string() + ".tmp";
  write_wav(tmp.string(), sig, fmt);
  fs::rename(tmp, path);
}

struct Workspace {
  PipelineConfig cfg;
  ArrayGeometry geo;
  DoaGrid grid;
  WhiteningTransform u;

  explicit Workspace(const PipelineConfig& c) : cfg(c), geo(c.geometry()) {
    grid = make_doa_grid(cfg.d_count, geo, cfg.stft.fft_size, kDefaultSampleRate);
    u = zca(isotropic_coherence(geo, grid.bin_count, kDefaultSampleRate, cfg.stft.fft_size),
            cfg.epsilon);
  }

  std::string config_hash() const { return cfg.to_kv().hash_hex(); }
};

void require_pipeline_rate(const MultiChannelSignal& sig, const Workspace& ws) {
  if (sig.sample_rate != ws.grid.sample_rate)
    throw invalid_input("input sample rate " + std::to_string(sig.sample_rate) +
                        " does not match the pipeline rate " +
                        std::to_string(ws.grid.sample_rate));
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Builds the extractor selected by the config: beam path per estimator kind,
// embeddings from reference matching, a fixture table or a container.
std::unique_ptr<Extractor> make_extractor(const Workspace& ws, const std::string& refs_csv,
                                          const std::string& fixture_path,
                                          const std::string& embeddings_path,
                                          const std::string& fd_weights_path,
                                          const std::string& td_kernels_path) {
  if (ws.cfg.embedder == EmbedderKind::Fixture) {
    if (fixture_path.empty()) throw invalid_input("embedder fixture requires --fixture");
    std::ifstream f(fixture_path);
    if (!f) throw invalid_input("cannot open " + fixture_path);
    json manifest = json::parse(f);
    auto extractor = std::make_unique<FixtureExtractor>();
    for (const auto& entry : manifest.at("entries")) {
      Embedding e;
      e.e = entry.at("embedding").get<std::vector<double>>();
      MultiChannelSignal sig;
      if (entry.contains("wav")) sig = read_wav(entry.at("wav").get<std::string>());
      extractor->add(entry.at("doa").get<int>(), std::move(sig), std::move(e));
    }
    return extractor;
  }

  std::shared_ptr<const Embedder> embedder;
  if (ws.cfg.embedder == EmbedderKind::Oracle) {
    if (refs_csv.empty())
      throw invalid_input("embedder oracle requires --refs ref1.wav,ref2.wav,...");
    std::vector<std::vector<double>> refs;
    for (const auto& path : split_list(refs_csv)) refs.push_back(read_wav(path).channel(0));
    embedder = std::make_shared<ReferenceMatchEmbedder>(std::move(refs), 100);
  }

  auto extractor =
      std::make_unique<OracleBeamExtractor>(ws.grid, ws.u, ws.cfg.stft, embedder,
                                            ws.cfg.estimator);
  extractor->set_tap_count(ws.cfg.tap_count);

  if (ws.cfg.embedder == EmbedderKind::ExternalContainer) {
    if (embeddings_path.empty())
      throw invalid_input("embedder external-container requires --embeddings table.bsst");
    const Tensor t = load_tensor(embeddings_path);
    if (t.is_complex || t.dims.size() != 2)
      throw invalid_input("embedding table must be a real [D x E] tensor");
    std::vector<Embedding> table(t.dims[0]);
    for (std::size_t d = 0; d < t.dims[0]; ++d)
      table[d].e.assign(t.real.begin() + static_cast<std::ptrdiff_t>(d * t.dims[1]),
                        t.real.begin() + static_cast<std::ptrdiff_t>((d + 1) * t.dims[1]));
    extractor->set_embedding_table(std::move(table));
  }

  if (!fd_weights_path.empty())
    extractor->set_fd_weights(AdaptionWeightsFD::from_tensor(load_tensor(fd_weights_path)));
  if (!td_kernels_path.empty()) {
    const Tensor t = load_tensor(td_kernels_path);
    std::vector<int> shifts;
    const fs::path sidecar = td_kernels_path + ".json";
    if (fs::exists(sidecar)) {
      std::ifstream f(sidecar);
      json j = json::parse(f);
      shifts = j.at("shifts").get<std::vector<int>>();
    }
    extractor->set_td_kernels(AdaptionKernelsTD::from_tensor(t, shifts));
  }
  return extractor;
}

TripletBatch load_batch(const std::string& path) {
  const Tensor t = load_tensor(path);
  if (t.is_complex || t.dims.size() != 3)
    throw invalid_input("embedding batch must be a real [B x P x E] tensor");
  TripletBatch batch;
  batch.speakers = t.dims[0];
  batch.utterances = t.dims[1];
  batch.dim = t.dims[2];
  batch.data = t.real;
  return batch;
}

json outcome_record(int iter, const ExtractionResult& res) {
  return json{{"iteration", iter},
              {"doa", res.doa_index},
              {"map_mass", res.map_mass},
              {"registry_distance",
               std::isinf(res.registry_dist) ? json(nullptr) : json(res.registry_dist)},
              {"accepted", res.accepted}};
}

int cmd_simulate_rir(const Workspace& ws, int rooms, std::uint64_t seed,
                     const std::string& outdir) {
  fs::create_directories(outdir);
  Rng rng = Rng(seed).stream("rooms");
  for (int i = 0; i < rooms; ++i) {
    RoomSpec spec = random_room_spec(rng);
    spec.seed = seed;
    const RoomImpulseResponse rir = label_doa(simulate_rir(spec, ws.geo), ws.grid);

    MultiChannelSignal sig;
    sig.samples = rir.taps;
    sig.channels = rir.channels;
    sig.sample_rate = rir.sample_rate;
    char name[32];
    std::snprintf(name, sizeof(name), "rir_%03d", i);
    atomic_write_wav(fs::path(outdir) / (std::string(name) + ".wav"), sig);

    const auto rt60 = schroeder_rt60(rir);
    json sidecar{{"dimensions", spec.dimensions},
                 {"rt60_target", spec.rt60_target},
                 {"rt60_measured", rt60 ? json(*rt60) : json(nullptr)},
                 {"source_position", spec.source_position},
                 {"array_position", spec.array_position},
                 {"seed", seed},
                 {"doa_label", *rir.doa_label},
                 {"config_hash", ws.config_hash()}};
    atomic_write_text(fs::path(outdir) / (std::string(name) + ".json"), sidecar.dump(2) + "\n");
    std::cout << json{{"rir", name}, {"doa_label", *rir.doa_label},
                      {"rt60_target", spec.rt60_target}}
                     .dump()
              << "\n";
  }
  return 0;
}

int cmd_mix(const Workspace& ws, const std::string& scene_path, const std::string& outdir) {
  const SceneSpec spec = SceneSpec::from_kv(KeyValueConfig::from_file(scene_path));
  const MixedScene scene = mix_scene(spec, ws.geo, ws.grid);
  fs::create_directories(outdir);
  atomic_write_wav(fs::path(outdir) / "mixture.wav", scene.mixture);

  json sources = json::array();
  for (std::size_t c = 0; c < scene.references.size(); ++c) {
    const std::string ref_name = "ref_" + std::to_string(c + 1) + ".wav";
    atomic_write_wav(fs::path(outdir) / ref_name, scene.references[c]);
    sources.push_back({{"signal", spec.sources[c].signal_path},
                       {"rir", spec.sources[c].rir_path},
                       {"gain", spec.sources[c].gain},
                       {"doa_label", scene.doa_labels[c]},
                       {"reference", ref_name}});
  }
  const json manifest{{"config_hash", ws.config_hash()},
                      {"sample_rate", scene.mixture.sample_rate},
                      {"channels", scene.mixture.channels},
                      {"sources", sources}};
  atomic_write_text(fs::path(outdir) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << manifest.dump() << "\n";
  return 0;
}

int cmd_localize(const Workspace& ws, const Extractor& extractor, const std::string& in_wav,
                 const std::string& outdir) {
  const MultiChannelSignal z = read_wav(in_wav);
  require_pipeline_rate(z, ws);
  const LocalizationOutcome outcome =
      localize(z, ws.grid, ws.u, extractor, ws.cfg.stft, ws.cfg.localize_params());

  int iter = 0;
  for (const auto& res : outcome.sources)
    std::cout << outcome_record(++iter, res).dump() << "\n";
  std::cout << json{{"iterations", outcome.iterations},
                    {"truncated", outcome.truncated},
                    {"accepted", outcome.accepted().size()}}
                   .dump()
            << "\n";

  if (!outdir.empty()) {
    fs::create_directories(outdir);
    json manifest{{"config_hash", ws.config_hash()}, {"sources", json::array()}};
    int idx = 0;
    for (const auto& res : outcome.sources) {
      const std::string name =
          (res.accepted ? "source_" : "rejected_") + std::to_string(++idx) + ".wav";
      atomic_write_wav(fs::path(outdir) / name, res.signal);
      json rec = outcome_record(idx, res);
      rec["wav"] = name;
      manifest["sources"].push_back(rec);
    }
    atomic_write_text(fs::path(outdir) / "manifest.json", manifest.dump(2) + "\n");
  }
  return 0;
}

int cmd_diarize(const Workspace& ws, const Extractor& extractor, const std::string& in_wav,
                const std::string& outdir) {
  const MultiChannelSignal z = read_wav(in_wav);
  require_pipeline_rate(z, ws);
  const auto blocks = split_blocks(z, ws.cfg.block);
  const DiarizedOutput out =
      diarize(blocks, ws.grid, ws.u, extractor, ws.cfg.stft, ws.cfg.localize_params());

  fs::create_directories(outdir);
  json speakers = json::array();
  for (std::size_t s = 0; s < out.speakers.size(); ++s) {
    const std::string name = "speaker_" + std::to_string(s + 1) + ".wav";
    MultiChannelSignal stream;
    stream.samples = out.speakers[s].stream;
    stream.channels = 1;
    stream.sample_rate = out.sample_rate;
    atomic_write_wav(fs::path(outdir) / name, stream);
    json active = json::array();
    for (const auto& e : out.speakers[s].block_embeddings) active.push_back(e.has_value());
    speakers.push_back({{"wav", name}, {"active_blocks", active}});
  }
  json assignments = json::array();
  for (const auto& a : out.assignments)
    assignments.push_back({{"block", a.block},
                           {"doa", a.doa_index},
                           {"speaker", a.speaker},
                           {"new_speaker", a.new_speaker},
                           {"dropped_duplicate", a.dropped_duplicate},
                           {"registry_distance", a.registry_dist}});
  const json manifest{{"config_hash", ws.config_hash()},
                      {"block_samples", out.block_samples},
                      {"block_count", out.block_count},
                      {"speakers", speakers},
                      {"assignments", assignments},
                      {"diagnostics", out.diagnostics}};
  atomic_write_text(fs::path(outdir) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << manifest.dump() << "\n";
  return 0;
}

// best integer lag of y against r (positive: y lags r), via FFT correlation
std::ptrdiff_t best_lag(const std::vector<double>& y, const std::vector<double>& r) {
  const std::size_t n = next_pow2(y.size() + r.size());
  std::vector<cd> fy(n, cd{}), fr(n, cd{});
  for (std::size_t i = 0; i < y.size(); ++i) fy[i] = cd(y[i], 0.0);
  for (std::size_t i = 0; i < r.size(); ++i) fr[i] = cd(r[i], 0.0);
  fft_inplace(fy);
  fft_inplace(fr);
  for (std::size_t i = 0; i < n; ++i) fy[i] *= std::conj(fr[i]);
  fft_inplace(fy, true);
  std::size_t peak = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(fy[i].real()) > best) {
      best = std::abs(fy[i].real());
      peak = i;
    }
  return peak < n / 2 ? static_cast<std::ptrdiff_t>(peak)
                      : static_cast<std::ptrdiff_t>(peak) - static_cast<std::ptrdiff_t>(n);
}

int cmd_eval(const std::string& estimate, const std::string& reference,
             const std::string& embeddings, double delta, bool align) {
  if (!embeddings.empty()) {
    const TripletBatch batch = load_batch(embeddings);
    const EerResult res = eer(batch);
    json rec{{"eer", res.eer}, {"threshold", res.threshold}};
    if (delta > 0.0) {
      rec["far"] = far(batch, delta);
      rec["frr"] = frr(batch, delta);
      rec["delta"] = delta;
    }
    std::cout << rec.dump() << "\n";
    return 0;
  }
  const MultiChannelSignal est = read_wav(estimate);
  const MultiChannelSignal ref = read_wav(reference);
  std::vector<double> y = est.channel(0), r = ref.channel(0);

  std::ptrdiff_t lag = 0;
  if (align) {
    lag = best_lag(y, r);
    if (lag > 0) y.erase(y.begin(), y.begin() + lag);
    else if (lag < 0) r.erase(r.begin(), r.begin() - lag);
  }
  const std::size_t n = std::min(y.size(), r.size());
  y.resize(n);
  r.resize(n);
  const SiSdrResult res = si_sdr(y, r);
  json rec{{"si_sdr_db", res.value_db}, {"samples", n}};
  if (align) rec["lag"] = lag;
  std::cout << rec.dump() << "\n";
  return 0;
}

int cmd_eer(const std::string& embeddings) {
  const TripletBatch batch = load_batch(embeddings);
  const EerResult res = eer(batch);
  std::cout << json{{"eer", res.eer}, {"threshold", res.threshold}}.dump() << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int points) {
  const auto reports = run_gradient_checks(seed, points);
  bool all_pass = true;
  for (const auto& rep : reports) {
    all_pass = all_pass && rep.pass;
    std::cout << json{{"check", rep.name},
                      {"max_rel_err", rep.max_rel_err},
                      {"points", rep.points},
                      {"skipped", rep.skipped},
                      {"pass", rep.pass}}
                     .dump()
              << "\n";
  }
  return all_pass ? 0 : 1;
}

int cmd_export_map(const Workspace& ws, const std::string& in_wav, const std::string& out_csv,
                   const std::string& kind, bool per_bin) {
  const MultiChannelSignal z = read_wav(in_wav);
  require_pipeline_rate(z, ws);
  const Spectrogram zf = stft(z, ws.cfg.stft);

  SpatialMap map;
  if (kind == "raw") {
    map = spatial_map_raw(zf, ws.grid);
  } else {
    map = spatial_map_whitened(zf, ws.grid, ws.u);
    if (kind == "weighted") map = weight_map(map, zf);
    else if (kind != "whitened") throw invalid_input("map kind must be raw|whitened|weighted");
  }

  std::ostringstream csv;
  csv.precision(10);
  if (per_bin) {
    // one row per bin: k, f_hz, then D columns (map summed over frames)
    const std::vector<double> kd = map.mass_per_bin_direction();
    csv << "k,f_hz";
    for (std::size_t d = 0; d < map.d_count; ++d) csv << ",d" << d;
    csv << "\n";
    for (std::size_t k = 0; k < map.bin_count; ++k) {
      csv << k << "," << zf.bin_frequency(k);
      for (std::size_t d = 0; d < map.d_count; ++d) csv << "," << kd[k * map.d_count + d];
      csv << "\n";
    }
  } else {
    const std::vector<double> mass = map.mass_per_direction();
    csv << "d,x,y,z,mass\n";
    for (std::size_t d = 0; d < map.d_count; ++d)
      csv << d << "," << ws.grid.points[d][0] << "," << ws.grid.points[d][1] << ","
          << ws.grid.points[d][2] << "," << mass[d] << "\n";
  }
  atomic_write_text(out_csv, csv.str());
  std::cout << json{{"csv", out_csv}, {"kind", kind}, {"per_bin", per_bin}}.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BSSD pipeline: localization, separation, diarization and room simulation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOptions global;
  app.add_option("--config", global.config_path, "flat key-value config file");
  const auto add_override = [&](const std::string& flag, const std::string& key,
                                const std::string& help) {
    app.add_option_function<std::string>(
        flag, [&global, key](const std::string& v) { global.overrides[key] = v; }, help);
  };
  add_override("--geometry", "geometry", "geometry file (header: c; rows: x y z)");
  add_override("--doa-count", "doa.count", "number of DOA grid points (default 100)");
  add_override("--fft", "stft.fft", "STFT size (default 1024)");
  add_override("--hop", "stft.hop", "STFT hop (default 256)");
  add_override("--t-a", "td.taps", "time-domain adaption kernel taps (default 100)");
  add_override("--block-len", "block.seconds", "block length in seconds (default 5.0)");
  add_override("--delta", "delta", "embedding distance threshold");
  add_override("--estimator", "estimator",
               "analytic-fd | statistic-fd | analytic-td | statistic-td");
  add_override("--embedder", "embedder", "oracle | fixture | external-container");
  add_override("--seed", "seed", "global random seed");
  add_override("--max-iter", "max.iterations", "localization iteration cap");

  // shared per-command inputs
  std::string refs_csv, fixture_path, embeddings_path, fd_weights_path, td_kernels_path;

  auto* sim = app.add_subcommand("simulate-rir", "generate labeled shoebox RIRs");
  int sim_rooms = 1;
  std::uint64_t sim_seed = 1234;
  std::string sim_outdir;
  sim->add_option("--rooms", sim_rooms, "number of rooms")->required();
  sim->add_option("--seed", sim_seed, "seed for the room stream");
  sim->add_option("outdir", sim_outdir, "output directory")->required();

  auto* mix_cmd = app.add_subcommand("mix", "synthesize a mixture from a scene file");
  std::string mix_scene_path, mix_outdir;
  mix_cmd->add_option("scene", mix_scene_path, "scene key-value file")->required();
  mix_cmd->add_option("outdir", mix_outdir, "output directory")->required();

  auto* loc = app.add_subcommand("localize", "iterative DOA estimation (JSON lines)");
  std::string loc_in;
  loc->add_option("input", loc_in, "mixture wav")->required();
  loc->add_option("--refs", refs_csv, "reference wavs for the oracle embedder");
  loc->add_option("--fixture", fixture_path, "fixture extractor manifest");
  loc->add_option("--embeddings", embeddings_path, "per-DOA embedding table (bsst)");
  loc->add_option("--fd-weights", fd_weights_path, "statistic FD weights (bsst)");
  loc->add_option("--td-kernels", td_kernels_path, "statistic TD kernels (bsst)");

  auto* sep = app.add_subcommand("separate", "localize and write extracted sources");
  std::string sep_in, sep_outdir;
  sep->add_option("input", sep_in, "mixture wav")->required();
  sep->add_option("outdir", sep_outdir, "output directory")->required();
  sep->add_option("--refs", refs_csv, "reference wavs for the oracle embedder");
  sep->add_option("--fixture", fixture_path, "fixture extractor manifest");
  sep->add_option("--embeddings", embeddings_path, "per-DOA embedding table (bsst)");
  sep->add_option("--fd-weights", fd_weights_path, "statistic FD weights (bsst)");
  sep->add_option("--td-kernels", td_kernels_path, "statistic TD kernels (bsst)");

  auto* dia = app.add_subcommand("diarize", "block-online diarization");
  std::string dia_in, dia_outdir;
  dia->add_option("input", dia_in, "mixture wav")->required();
  dia->add_option("outdir", dia_outdir, "output directory")->required();
  dia->add_option("--refs", refs_csv, "reference wavs for the oracle embedder");
  dia->add_option("--fixture", fixture_path, "fixture extractor manifest");
  dia->add_option("--embeddings", embeddings_path, "per-DOA embedding table (bsst)");
  dia->add_option("--fd-weights", fd_weights_path, "statistic FD weights (bsst)");
  dia->add_option("--td-kernels", td_kernels_path, "statistic TD kernels (bsst)");

  auto* eval_cmd = app.add_subcommand("eval", "SI-SDR of estimate vs reference, or EER/FAR/FRR");
  std::string eval_est, eval_ref, eval_emb;
  double eval_delta = 0.0;
  bool eval_align = false;
  eval_cmd->add_option("estimate", eval_est, "estimate wav");
  eval_cmd->add_option("reference", eval_ref, "reference wav");
  eval_cmd->add_option("--embeddings", eval_emb, "labeled embedding batch [B x P x E] (bsst)");
  eval_cmd->add_option("--delta", eval_delta, "report FAR/FRR at this threshold");
  eval_cmd->add_flag("--align", eval_align, "compensate the best integer lag before SI-SDR");

  auto* eer_cmd = app.add_subcommand("eer", "EER and threshold from a labeled embedding batch");
  std::string eer_emb;
  eer_cmd->add_option("embeddings", eer_emb, "[B x P x E] tensor (bsst)")->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::uint64_t grad_seed = 20240817;
  int grad_points = 100;
  grad->add_option("--seed", grad_seed, "seed");
  grad->add_option("--points", grad_points, "points per check");

  auto* exp = app.add_subcommand("export-map", "spatial map reduced per direction as CSV");
  std::string exp_in, exp_out, exp_kind = "weighted";
  bool exp_per_bin = false;
  exp->add_option("input", exp_in, "mixture wav")->required();
  exp->add_option("output", exp_out, "CSV path")->required();
  exp->add_option("--kind", exp_kind, "raw | whitened | weighted (default)");
  exp->add_flag("--per-bin", exp_per_bin, "emit the K x D matrix instead of the per-d vector");

  CLI11_PARSE(app, argc, argv);

  try {
    if (grad->parsed()) return cmd_gradcheck(grad_seed, grad_points);
    if (eer_cmd->parsed()) return cmd_eer(eer_emb);
    if (eval_cmd->parsed()) {
      if (eval_emb.empty() && (eval_est.empty() || eval_ref.empty()))
        throw invalid_input("eval needs estimate+reference wavs or --embeddings");
      return cmd_eval(eval_est, eval_ref, eval_emb, eval_delta, eval_align);
    }

    const Workspace ws(global.resolve());
    if (sim->parsed()) return cmd_simulate_rir(ws, sim_rooms, sim_seed, sim_outdir);
    if (mix_cmd->parsed()) return cmd_mix(ws, mix_scene_path, mix_outdir);
    if (loc->parsed() || sep->parsed() || dia->parsed()) {
      const auto extractor = make_extractor(ws, refs_csv, fixture_path, embeddings_path,
                                            fd_weights_path, td_kernels_path);
      if (loc->parsed()) return cmd_localize(ws, *extractor, loc_in, "");
      if (sep->parsed()) return cmd_localize(ws, *extractor, sep_in, sep_outdir);
      return cmd_diarize(ws, *extractor, dia_in, dia_outdir);
    }
    if (exp->parsed()) return cmd_export_map(ws, exp_in, exp_out, exp_kind, exp_per_bin);
  } catch (const std::exception& ex) {
    std::cerr << "bssd: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
