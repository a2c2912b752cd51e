#include "aecbse/experiment.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "aecbse/error.h"
#include "aecbse/wav.h"

namespace aecbse {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

double ratio_value(const json& j, const std::string& key) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigError("'" + key + "' must be a number, \"inf\" or \"-inf\"");
}

// A ratio is either fixed (number or +-inf string) or a [lo, hi] range.
void read_ratio(const json& scenario, const std::string& key, Interval& range,
                std::optional<double>& fixed) {
  if (!scenario.contains(key)) return;
  const json& j = scenario.at(key);
  if (j.is_array()) {
    if (j.size() != 2) throw ConfigError("'" + key + "' range needs [lo, hi]");
    range = {ratio_value(j[0], key), ratio_value(j[1], key)};
    fixed.reset();
  } else {
    fixed = ratio_value(j, key);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

ConvolutivePaths read_sources(const json& j,
                              const std::filesystem::path& base) {
  check_keys(j, "scenario.sources",
             {"soi", "loudspeaker", "interferers", "soi_rir", "echo_rir",
              "interferer_rirs"});
  ConvolutivePaths p;
  p.soi = resolve(base, j.at("soi").get<std::string>());
  p.loudspeaker = resolve(base, j.at("loudspeaker").get<std::string>());
  p.soi_rir = resolve(base, j.at("soi_rir").get<std::string>());
  p.echo_rir = resolve(base, j.at("echo_rir").get<std::string>());
  for (const auto& s : j.value("interferers", json::array()))
    p.interferers.push_back(resolve(base, s.get<std::string>()));
  for (const auto& s : j.value("interferer_rirs", json::array()))
    p.interferer_rirs.push_back(resolve(base, s.get<std::string>()));
  return p;
}

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

json vector_json(const CVector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(complex_json(v(i)));
  return out;
}

json filters_json(const RunResult& r) {
  json h = json::array(), w = json::array(), scale = json::array();
  for (const BinState& bin : r.state.bins) {
    h.push_back(vector_json(bin.h));
    w.push_back(vector_json(bin.w));
  }
  for (Complex c : r.backprojection) scale.push_back(complex_json(c));
  return json{{"bins", r.state.num_bins()},
              {"mics", r.state.mics},
              {"h", h},
              {"w", w},
              {"backprojection", scale}};
}

json diagnostics_json(const RunResult& r, Algorithm algorithm,
                      std::uint64_t seed) {
  json iters = json::array();
  for (const IterationRecord& it : r.diagnostics.iterations) {
    iters.push_back({{"iteration", it.iteration},
                     {"cost", it.cost},
                     {"delta_h", it.delta_h},
                     {"delta_w", it.delta_w},
                     {"mean_nu", it.mean_nu},
                     {"mean_rho", it.mean_rho},
                     {"skipped_aec", it.skipped_aec},
                     {"skipped_bse", it.skipped_bse},
                     {"off_block_db", it.off_block_db ? json(*it.off_block_db)
                                                      : json(nullptr)}});
  }
  return json{{"algorithm", std::string(algorithm_name(algorithm))},
              {"seed", seed},
              {"skipped_bins", r.diagnostics.skipped_bins},
              {"iterations", iters}};
}

json metrics_json(const MetricsReport& m) {
  return json{{"algorithm", m.algorithm}, {"seed", m.seed},
              {"SIR", m.sir_db},          {"SER", m.ser_db},
              {"SIER", m.sier_db},        {"ERLE_aec", m.erle_aec_db},
              {"ERLE_bf", m.erle_bf_db}};
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

RunConfig run_config(const ExperimentSpec& spec, Algorithm algorithm,
                     const Scene& scene) {
  RunConfig rc;
  rc.iterations = spec.iterations;
  rc.algorithm = algorithm;
  rc.score_model = spec.score_model;
  rc.truth = scene.truth ? &*scene.truth : nullptr;
  return rc;
}

MetricsReport score_run(const Scene& scene, const RunResult& r,
                        Algorithm algorithm, const RunConfig& rc) {
  MetricsReport m =
      algorithm == Algorithm::kNone
          ? evaluate_unprocessed(scene, rc.reference)
          : evaluate(scene, r.state, r.backprojection, rc.reference);
  m.algorithm = std::string(algorithm_name(algorithm));
  m.seed = scene.cfg.seed;
  m.iterations = rc.iterations;
  return m;
}

}  // namespace

void ExperimentSpec::Validate() const {
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (algorithms.empty()) throw ConfigError("no algorithm selected");
  frame.Validate();
  if (ranges.mics < 2) throw ConfigError("scenario needs M >= 2 microphones");
  if (!(ranges.duration_s > 0.0)) throw ConfigError("duration must be positive");
  for (const Interval* r : {&ranges.ser_db, &ranges.ier_db, &ranges.enr_db}) {
    if (!(r->lo <= r->hi)) throw ConfigError("empty sampling range");
  }
  if (ranges.mode == SceneMode::kConvolutive) {
    if (!ranges.rir_paths)
      throw ConfigError("convolutive mode needs scenario.sources");
    const ConvolutivePaths& p = *ranges.rir_paths;
    std::vector<std::filesystem::path> files = {p.soi, p.loudspeaker,
                                                p.soi_rir, p.echo_rir};
    files.insert(files.end(), p.interferers.begin(), p.interferers.end());
    files.insert(files.end(), p.interferer_rirs.begin(),
                 p.interferer_rirs.end());
    for (const auto& f : files) {
      if (!std::filesystem::exists(f))
        throw ConfigError("missing input file " + f.string());
    }
    if (p.interferers.size() != p.interferer_rirs.size())
      throw ConfigError("need one RIR per interferer");
  }
  if (!scene_dir.empty() &&
      !std::filesystem::exists(scene_dir / "manifest.json"))
    throw ConfigError("no manifest.json in " + scene_dir.string());
}

std::vector<Algorithm> parse_algorithm_list(const std::string& names) {
  std::vector<Algorithm> out;
  std::stringstream ss(names);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_algorithm(item));
  }
  if (out.empty()) throw ConfigError("empty algorithm list");
  return out;
}

ExperimentSpec parse_experiment_spec(const std::string& json_text,
                                     const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config: " + std::string(e.what()));
  }
  ExperimentSpec spec;
  try {
    check_keys(j, "config",
               {"seed", "runs", "iterations", "algorithms", "score", "frame",
                "scenario", "output_dir", "scene_dir"});
    spec.seed = j.value("seed", spec.seed);
    spec.runs = j.value("runs", spec.runs);
    spec.iterations = j.value("iterations", spec.iterations);
    if (j.contains("algorithms")) {
      const json& a = j.at("algorithms");
      if (a.is_string()) {
        spec.algorithms = parse_algorithm_list(a.get<std::string>());
      } else {
        spec.algorithms.clear();
        for (const auto& name : a)
          spec.algorithms.push_back(parse_algorithm(name.get<std::string>()));
      }
    }
    if (j.contains("score")) {
      const auto s = j.at("score").get<std::string>();
      if (s == "spherical") spec.score_model = ScoreModel::kSpherical;
      else if (s == "gaussian") spec.score_model = ScoreModel::kGaussian;
      else throw ConfigError("unknown score model '" + s + "'");
    }
    if (j.contains("frame")) {
      const json& f = j.at("frame");
      check_keys(f, "frame", {"frame_len", "hop", "sample_rate", "window"});
      const auto len = f.value("frame_len", spec.frame.frame_len);
      const auto hop = f.value("hop", spec.frame.hop);
      const double rate = f.value("sample_rate", spec.frame.sample_rate);
      const auto window = f.value("window", std::string("sqrt_hann"));
      if (window == "sqrt_hann") spec.frame = FrameSpec::SqrtHann(len, hop, rate);
      else if (window == "rectangular")
        spec.frame = FrameSpec::Rectangular(len, hop, rate);
      else throw ConfigError("unknown window '" + window + "'");
    }
    if (j.contains("scenario")) {
      const json& s = j.at("scenario");
      check_keys(s, "scenario",
                 {"mode", "mics", "duration_s", "frames", "with_echo",
                  "ser_db", "ier_db", "enr_db", "sources"});
      if (s.contains("mode"))
        spec.ranges.mode = parse_scene_mode(s.at("mode").get<std::string>());
      spec.ranges.mics = s.value("mics", spec.ranges.mics);
      spec.ranges.duration_s = s.value("duration_s", spec.ranges.duration_s);
      spec.narrowband_frames = s.value("frames", spec.narrowband_frames);
      spec.with_echo = s.value("with_echo", spec.with_echo);
      read_ratio(s, "ser_db", spec.ranges.ser_db, spec.ser_db);
      read_ratio(s, "ier_db", spec.ranges.ier_db, spec.ier_db);
      read_ratio(s, "enr_db", spec.ranges.enr_db, spec.enr_db);
      if (s.contains("sources"))
        spec.ranges.rir_paths = read_sources(s.at("sources"), base_dir);
    }
    if (j.contains("output_dir"))
      spec.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    if (j.contains("scene_dir"))
      spec.scene_dir = resolve(base_dir, j.at("scene_dir").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError("bad config value: " + std::string(e.what()));
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_experiment_spec(text.str(), path.parent_path());
}

ScenarioConfig scenario_for(const ExperimentSpec& spec, std::uint64_t seed) {
  ScenarioConfig cfg = sample_scenario(seed, spec.ranges);
  if (spec.ser_db) cfg.ser_db = *spec.ser_db;
  if (spec.ier_db) cfg.ier_db = *spec.ier_db;
  if (spec.enr_db) cfg.enr_db = *spec.enr_db;
  cfg.with_echo = spec.with_echo;
  return cfg;
}

Scene build_scene(const ExperimentSpec& spec, std::uint64_t seed) {
  const ScenarioConfig cfg = scenario_for(spec, seed);
  if (cfg.mode == SceneMode::kNarrowband && spec.narrowband_frames > 0)
    return make_narrowband_scene(cfg, spec.frame, spec.narrowband_frames);
  return make_scene(cfg, spec.frame);
}

void cmd_simulate(const ExperimentSpec& spec) {
  spec.Validate();
  write_scene(build_scene(spec, spec.seed), spec.output_dir);
}

RunOutput cmd_run(const ExperimentSpec& spec) {
  spec.Validate();
  const Algorithm algorithm = spec.algorithms.front();
  if (spec.algorithms.size() != 1)
    throw ConfigError("run takes exactly one algorithm");

  Scene scene;
  if (spec.scene_dir.empty()) {
    scene = build_scene(spec, spec.seed);
  } else {
    scene = load_scene(spec.scene_dir, spec.frame);
    if (scene.time->mixture.sample_rate != spec.frame.sample_rate)
      throw ConfigError("scene sample rate differs from the frame spec");
  }

  const RunConfig rc = run_config(spec, algorithm, scene);
  RunOutput out;
  out.result = run_algorithm(scene.x, scene.u, rc);
  if (algorithm == Algorithm::kNone && scene.time) {
    out.enhanced = Audio(1, 0, scene.time->mixture.sample_rate);
    out.enhanced.channels[0] = scene.time->mixture.channels.at(rc.reference);
  } else {
    out.enhanced = synthesize(out.result.s_hat);
  }
  if (scene.images.soi.bins() > 0)
    out.metrics = score_run(scene, out.result, algorithm, rc);

  std::filesystem::create_directories(spec.output_dir);
  write_wav(spec.output_dir / "enhanced.wav", out.enhanced);
  write_json(spec.output_dir / "filters.json", filters_json(out.result));
  write_json(spec.output_dir / "diagnostics.json",
             diagnostics_json(out.result, algorithm, scene.cfg.seed));
  if (out.metrics)
    write_json(spec.output_dir / "metrics.json", metrics_json(*out.metrics));
  return out;
}

BenchResult cmd_bench(const ExperimentSpec& spec) {
  spec.Validate();
  std::vector<Algorithm> algorithms;
  for (Algorithm a : spec.algorithms) {
    if (std::find(algorithms.begin(), algorithms.end(), a) == algorithms.end())
      algorithms.push_back(a);
  }
  std::map<Algorithm, std::vector<MetricsReport>> by_algorithm;
  BenchResult bench;
  for (int k = 0; k < spec.runs; ++k) {
    const std::uint64_t seed = spec.seed + static_cast<std::uint64_t>(k);
    const Scene scene = build_scene(spec, seed);
    for (Algorithm algorithm : algorithms) {
      const RunConfig rc = run_config(spec, algorithm, scene);
      try {
        const RunResult r = run_algorithm(scene.x, scene.u, rc);
        by_algorithm[algorithm].push_back(score_run(scene, r, algorithm, rc));
      } catch (const NumericalError&) {
        ++bench.failed_runs;
      }
    }
  }
  for (Algorithm algorithm : algorithms) {
    auto& rows = by_algorithm[algorithm];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const MetricsReport& a, const MetricsReport& b) {
                       return a.seed < b.seed;
                     });
    bench.rows.insert(bench.rows.end(), rows.begin(), rows.end());
  }
  std::ostringstream csv;
  write_metrics_csv(csv, bench.rows);
  bench.csv = csv.str();

  std::filesystem::create_directories(spec.output_dir);
  std::ofstream out(spec.output_dir / "bench.csv", std::ios::trunc);
  if (!out) throw ConfigError("cannot write bench.csv");
  out << bench.csv;
  return bench;
}

}  // namespace aecbse
