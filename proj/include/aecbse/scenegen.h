#ifndef AECBSE_SCENEGEN_H_
#define AECBSE_SCENEGEN_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "aecbse/model.h"
#include "aecbse/stft.h"

namespace aecbse {

enum class SceneMode { kNarrowband, kConvolutive };

std::string scene_mode_name(SceneMode mode);
SceneMode parse_scene_mode(const std::string& name);

// Source and RIR files for convolutive scenes. Each RIR file holds one
// channel per microphone.
struct ConvolutivePaths {
  std::filesystem::path soi;
  std::filesystem::path loudspeaker;
  std::vector<std::filesystem::path> interferers;
  std::filesystem::path soi_rir;
  std::filesystem::path echo_rir;
  std::vector<std::filesystem::path> interferer_rirs;
};

struct ScenarioConfig {
  std::size_t mics = 4;
  // Power ratios at microphone 1. -inf SOI/interference ratios and +inf
  // echo-to-noise remove the corresponding component.
  double ser_db = 7.5;  // SOI-to-echo
  double ier_db = 2.5;  // interference-to-echo
  double enr_db = 30.0; // echo-to-noise
  bool with_echo = true;
  std::uint64_t seed = 0;
  double duration_s = 5.0;
  SceneMode mode = SceneMode::kNarrowband;
  std::optional<ConvolutivePaths> rir_paths;

  void Validate() const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Sampling ranges; the defaults are the evaluation ranges of the joint
// AEC/extraction experiments.
struct ScenarioRanges {
  Interval ser_db{5.0, 10.0};
  Interval ier_db{0.0, 5.0};
  Interval enr_db{25.0, 35.0};
  std::size_t mics = 4;
  double duration_s = 5.0;
  SceneMode mode = SceneMode::kNarrowband;
  std::optional<ConvolutivePaths> rir_paths;
};

// Uniform draws inside `ranges`, deterministic in `seed`.
ScenarioConfig sample_scenario(std::uint64_t seed, const ScenarioRanges& ranges);

// Unit-power STFT-domain source frames.
struct SourceFrames {
  Spectrogram soi;          // 1 ch, spherical super-Gaussian
  Spectrogram background;   // M-1 ch, circular Gaussian
  Spectrogram loudspeaker;  // 1 ch, spherical super-Gaussian, independent
  Spectrogram noise;        // M ch, circular Gaussian sensor noise
};

SourceFrames synth_sources(std::mt19937_64& rng, const FrameSpec& spec,
                           std::size_t frames, std::size_t mics,
                           std::size_t signal_length);

struct SceneImages {
  Spectrogram soi;
  Spectrogram echo;
  Spectrogram interference;
  Spectrogram noise;
};

struct SceneGains {
  double soi = 0.0;
  double echo = 0.0;
  double interference = 0.0;
  double noise = 0.0;
};

// Time-domain signals of a scene; present for convolutive scenes.
struct TimeDomainScene {
  Audio mixture;
  Audio loudspeaker;
  Audio soi;
  Audio echo;
  Audio interference;
  Audio noise;
};

struct Scene {
  ScenarioConfig cfg;
  Spectrogram x;  // M ch mixture
  Spectrogram u;  // 1 ch loudspeaker
  SceneImages images;
  SceneGains gains;
  std::optional<MixingTruth> truth;   // narrowband only
  std::optional<TimeDomainScene> time;
};

// Narrowband multiplicative mixing with i.i.d. circular Gaussian transfer
// functions per bin. The stored truth includes the scaling gains, so that
// truth.echo[f] * u reproduces the echo image.
Scene render_narrowband(const ScenarioConfig& cfg, const SourceFrames& sources);

// Draws sources from cfg.seed and renders a narrowband scene.
Scene make_narrowband_scene(const ScenarioConfig& cfg, const FrameSpec& spec);
// Narrowband scene with an explicit STFT size (frames x bins).
Scene make_narrowband_scene(const ScenarioConfig& cfg, const FrameSpec& spec,
                            std::size_t frames);

struct ConvolutiveInputs {
  Audio soi;
  Audio loudspeaker;
  std::vector<Audio> interferers;
  Audio soi_rir;
  Audio echo_rir;
  std::vector<Audio> interferer_rirs;
};

ConvolutiveInputs load_convolutive_inputs(const ConvolutivePaths& paths);

// Convolves every source with its multichannel RIR, adds white sensor noise
// drawn from cfg.seed and scales components to cfg's ratios at
// microphone 1. Signals are truncated to cfg.duration_s.
Scene render_convolutive(const ScenarioConfig& cfg,
                         const ConvolutiveInputs& inputs,
                         const FrameSpec& spec);

// Builds the scene for `cfg` in either mode.
Scene make_scene(const ScenarioConfig& cfg, const FrameSpec& spec);

// Power of one channel summed over all bins and frames.
double channel_power(const Spectrogram& s, std::size_t channel);

// Writes mixture, loudspeaker and component WAVs plus manifest.json into
// `dir` (created if missing).
void write_scene(const Scene& scene, const std::filesystem::path& dir);

// Loads a scene written by write_scene(). Ground-truth mixing is not
// restored; component images are when present.
Scene load_scene(const std::filesystem::path& dir, const FrameSpec& spec);

}  // namespace aecbse

#endif  // AECBSE_SCENEGEN_H_
