// Command-line driver: scene simulation, single runs and benchmarks.
//
//   aecbse simulate --seed 3 --out scene3
//   aecbse run --scene scene3 --algo joint --out run3
//   aecbse bench --algo joint,bnlms_ive,ls_aec,ive_only,none --runs 20
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "aecbse/error.h"
#include "aecbse/experiment.h"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> algo;
  std::optional<int> runs;
  std::optional<std::string> out;
  std::optional<int> iterations;
  std::optional<std::size_t> frames;
  std::optional<std::size_t> frame_len;
  std::optional<std::size_t> hop;
  std::optional<std::string> scene;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--mode", f.mode, "narrowband or convolutive");
  cmd->add_option("--algo", f.algo,
                  "comma list of joint, bnlms_ive, ls_aec, ive_only, none");
  cmd->add_option("--runs", f.runs, "number of seeded scenes (bench)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--iterations", f.iterations, "optimizer iterations");
  cmd->add_option("--frames", f.frames, "STFT frames of narrowband scenes");
  cmd->add_option("--frame-len", f.frame_len, "STFT frame length");
  cmd->add_option("--hop", f.hop, "STFT hop");
}

aecbse::ExperimentSpec build_spec(const Flags& f) {
  aecbse::ExperimentSpec spec;
  if (!f.config.empty()) spec = aecbse::load_experiment_spec(f.config);
  if (f.seed) spec.seed = *f.seed;
  if (f.mode) spec.ranges.mode = aecbse::parse_scene_mode(*f.mode);
  if (f.algo) spec.algorithms = aecbse::parse_algorithm_list(*f.algo);
  if (f.runs) spec.runs = *f.runs;
  if (f.out) spec.output_dir = *f.out;
  if (f.iterations) spec.iterations = *f.iterations;
  if (f.frames) spec.narrowband_frames = *f.frames;
  if (f.frame_len || f.hop) {
    const std::size_t len = f.frame_len.value_or(spec.frame.frame_len);
    const std::size_t hop = f.hop.value_or(len / 2);
    spec.frame = aecbse::FrameSpec::SqrtHann(len, hop, spec.frame.sample_rate);
  }
  if (f.scene) spec.scene_dir = *f.scene;
  spec.Validate();
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint echo cancellation and source extraction"};
  app.require_subcommand(1);
  Flags flags;
  CLI::App* simulate = app.add_subcommand("simulate", "write a scene to disk");
  CLI::App* run = app.add_subcommand("run", "process one scene");
  CLI::App* bench = app.add_subcommand("bench", "metrics over seeded scenes");
  for (CLI::App* cmd : {simulate, run, bench}) add_flags(cmd, flags);
  run->add_option("--scene", flags.scene, "scene directory from simulate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const aecbse::ExperimentSpec spec = build_spec(flags);
    if (simulate->parsed()) {
      aecbse::cmd_simulate(spec);
      std::printf("scene written to %s\n", spec.output_dir.c_str());
    } else if (run->parsed()) {
      const aecbse::RunOutput out = aecbse::cmd_run(spec);
      if (out.metrics)
        std::printf("SIR %.2f  SER %.2f  SIER %.2f  ERLE_aec %.2f  ERLE_bf %.2f\n",
                    out.metrics->sir_db, out.metrics->ser_db,
                    out.metrics->sier_db, out.metrics->erle_aec_db,
                    out.metrics->erle_bf_db);
      std::printf("outputs written to %s\n", spec.output_dir.c_str());
    } else {
      const aecbse::BenchResult result = aecbse::cmd_bench(spec);
      std::fputs(result.csv.c_str(), stdout);
      if (result.failed_runs > 0) {
        std::fprintf(stderr, "%zu run(s) failed numerically\n",
                     result.failed_runs);
        return 2;
      }
    }
  } catch (const aecbse::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const aecbse::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "file error: %s\n", e.what());
    return 1;
  }
  return 0;
}
