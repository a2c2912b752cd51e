#ifndef AECBSE_EXPERIMENT_H_
#define AECBSE_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aecbse/metrics.h"
#include "aecbse/optimizer.h"
#include "aecbse/scenegen.h"
#include "aecbse/stft.h"

namespace aecbse {

// Everything a simulate/run/bench invocation depends on. Two invocations
// with equal specs produce identical files.
struct ExperimentSpec {
  ScenarioRanges ranges;  // per-seed scenario draws
  // Fixed ratios replace the corresponding draw.
  std::optional<double> ser_db;
  std::optional<double> ier_db;
  std::optional<double> enr_db;
  bool with_echo = true;
  // Narrowband scenes only: frame count; 0 derives it from the duration.
  std::size_t narrowband_frames = 0;

  std::uint64_t seed = 0;
  std::vector<Algorithm> algorithms = {Algorithm::kJoint};
  int runs = 50;
  int iterations = 50;
  ScoreModel score_model = ScoreModel::kSpherical;
  FrameSpec frame = FrameSpec::SqrtHann(2048, 1024, 16000.0);
  std::filesystem::path output_dir = "out";
  // cmd_run input; empty means "generate the scene for `seed`".
  std::filesystem::path scene_dir;

  void Validate() const;
};

// Parses a JSON config. Relative paths are taken relative to the file's
// directory. Unknown keys and algorithm names throw ConfigError.
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);
ExperimentSpec parse_experiment_spec(const std::string& json_text,
                                     const std::filesystem::path& base_dir);

// Comma-separated algorithm list.
std::vector<Algorithm> parse_algorithm_list(const std::string& names);

ScenarioConfig scenario_for(const ExperimentSpec& spec, std::uint64_t seed);
Scene build_scene(const ExperimentSpec& spec, std::uint64_t seed);

// Writes the scene for spec.seed into spec.output_dir.
void cmd_simulate(const ExperimentSpec& spec);

struct RunOutput {
  RunResult result;
  Audio enhanced;
  std::optional<MetricsReport> metrics;
};

// Runs spec.algorithms.front() on spec.scene_dir (or the generated scene)
// and writes enhanced.wav, filters.json, diagnostics.json and, when the
// component images are known, metrics.json.
RunOutput cmd_run(const ExperimentSpec& spec);

struct BenchResult {
  std::vector<MetricsReport> rows;  // grouped by algorithm, sorted by seed
  std::size_t failed_runs = 0;
  std::string csv;
};

// Runs every algorithm on spec.runs scenes seeded spec.seed, spec.seed+1,
// ... and writes bench.csv. Runs that hit a NumericalError are counted and
// left out of the table.
BenchResult cmd_bench(const ExperimentSpec& spec);

}  // namespace aecbse

#endif  // AECBSE_EXPERIMENT_H_
