#include "aecbse/scenegen.h"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "aecbse/error.h"
#include "aecbse/wav.h"

namespace aecbse {
namespace {

using nlohmann::json;

Complex circular_gaussian(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  const double re = normal(rng);
  const double im = normal(rng);
  return {re, im};
}

// Per-frame exponential envelope with E[sigma^2] = 1.
double envelope(std::mt19937_64& rng) {
  std::exponential_distribution<double> exp(std::sqrt(2.0));
  return exp(rng);
}

Spectrogram spherical_source(std::mt19937_64& rng, const FrameSpec& spec,
                             std::size_t frames, std::size_t length) {
  Spectrogram s(spec, frames, 1, length);
  for (std::size_t t = 0; t < frames; ++t) {
    const double sigma = envelope(rng);
    for (std::size_t f = 0; f < s.bins(); ++f)
      s(f, t, 0) = sigma * circular_gaussian(rng);
  }
  return s;
}

Spectrogram gaussian_source(std::mt19937_64& rng, const FrameSpec& spec,
                            std::size_t frames, std::size_t channels,
                            std::size_t length) {
  Spectrogram s(spec, frames, channels, length);
  for (Complex& v : s.data()) v = circular_gaussian(rng);
  return s;
}

// Gain that puts a component at `ratio_db` relative to the reference power.
// -inf removes the component.
double ratio_gain(double ratio_db, double reference_power, double power) {
  if (std::isinf(ratio_db) && ratio_db < 0.0) return 0.0;
  if (!(power > 0.0)) return 0.0;
  return std::sqrt(std::pow(10.0, ratio_db / 10.0) * reference_power / power);
}

SceneGains scene_gains(const ScenarioConfig& cfg, double p_soi, double p_echo,
                       double p_intf, double p_noise) {
  if (!(p_echo > 0.0))
    throw NumericalError("echo reference power is zero; cannot scale scene");
  SceneGains g;
  g.echo = cfg.with_echo ? 1.0 : 0.0;
  g.soi = ratio_gain(cfg.ser_db, p_echo, p_soi);
  g.interference = ratio_gain(cfg.ier_db, p_echo, p_intf);
  g.noise = std::isinf(cfg.enr_db) ? 0.0 : ratio_gain(-cfg.enr_db, p_echo, p_noise);
  return g;
}

double audio_power(const Audio& a, std::size_t channel) {
  double p = 0.0;
  for (double v : a.channels.at(channel)) p += v * v;
  return p;
}

void scale_audio(Audio& a, double g) {
  for (auto& ch : a.channels)
    for (double& v : ch) v *= g;
}

Audio trimmed(const Audio& a, std::size_t length) {
  Audio out = a;
  for (auto& ch : out.channels) ch.resize(length, 0.0);
  return out;
}

Audio convolve_source(const Audio& source, const Audio& rir,
                      std::size_t mics, std::size_t length) {
  if (source.num_channels() < 1) throw ConfigError("source WAV has no channels");
  if (rir.num_channels() != mics)
    throw ConfigError("RIR file has " + std::to_string(rir.num_channels()) +
                      " channels, expected one per microphone (" +
                      std::to_string(mics) + ")");
  std::vector<double> x = source.channels[0];
  x.resize(length, 0.0);
  Audio out(mics, length, source.sample_rate);
  for (std::size_t m = 0; m < mics; ++m)
    out.channels[m] = fft_convolve(x, rir.channels[m]);
  return out;
}

json gains_json(const SceneGains& g) {
  return json{{"soi", g.soi},
              {"echo", g.echo},
              {"interference", g.interference},
              {"noise", g.noise}};
}

// JSON has no infinities; encode them as strings.
json ratio_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double ratio_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ConfigError("invalid ratio '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

std::string scene_mode_name(SceneMode mode) {
  return mode == SceneMode::kNarrowband ? "narrowband" : "convolutive";
}

SceneMode parse_scene_mode(const std::string& name) {
  if (name == "narrowband") return SceneMode::kNarrowband;
  if (name == "convolutive") return SceneMode::kConvolutive;
  throw ConfigError("unknown scene mode '" + name + "'");
}

void ScenarioConfig::Validate() const {
  if (mics < 2) throw ConfigError("scenario needs M >= 2 microphones");
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  if (std::isnan(ser_db) || std::isnan(ier_db) || std::isnan(enr_db))
    throw ConfigError("power ratios must not be NaN");
  if (std::isinf(ser_db) && ser_db > 0.0)
    throw ConfigError("SOI-to-echo ratio +inf; use with_echo = false");
  if (std::isinf(ier_db) && ier_db > 0.0)
    throw ConfigError("interference-to-echo ratio must not be +inf");
  if (std::isinf(enr_db) && enr_db < 0.0)
    throw ConfigError("echo-to-noise ratio must not be -inf");
  if (mode == SceneMode::kConvolutive && !rir_paths)
    throw ConfigError("convolutive scenes need source and RIR paths");
}

ScenarioConfig sample_scenario(std::uint64_t seed,
                               const ScenarioRanges& ranges) {
  for (const Interval* r : {&ranges.ser_db, &ranges.ier_db, &ranges.enr_db}) {
    if (!(r->lo <= r->hi)) throw ConfigError("empty sampling range");
  }
  std::mt19937_64 rng(seed);
  auto draw = [&rng](const Interval& r) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.mics = ranges.mics;
  cfg.duration_s = ranges.duration_s;
  cfg.mode = ranges.mode;
  cfg.rir_paths = ranges.rir_paths;
  cfg.ser_db = draw(ranges.ser_db);
  cfg.ier_db = draw(ranges.ier_db);
  cfg.enr_db = draw(ranges.enr_db);
  return cfg;
}

SourceFrames synth_sources(std::mt19937_64& rng, const FrameSpec& spec,
                           std::size_t frames, std::size_t mics,
                           std::size_t signal_length) {
  if (mics < 2) throw ConfigError("synth_sources needs M >= 2");
  SourceFrames src;
  src.soi = spherical_source(rng, spec, frames, signal_length);
  src.background = gaussian_source(rng, spec, frames, mics - 1, signal_length);
  src.loudspeaker = spherical_source(rng, spec, frames, signal_length);
  src.noise = gaussian_source(rng, spec, frames, mics, signal_length);
  return src;
}

double channel_power(const Spectrogram& s, std::size_t channel) {
  double p = 0.0;
  for (std::size_t f = 0; f < s.bins(); ++f)
    p += s.bin(f).col(channel).squaredNorm();
  return p;
}

Scene render_narrowband(const ScenarioConfig& cfg,
                        const SourceFrames& sources) {
  cfg.Validate();
  const std::size_t mics = cfg.mics;
  const std::size_t bins = sources.soi.bins();
  const std::size_t frames = sources.soi.frames();
  if (sources.background.channels() != mics - 1 ||
      sources.noise.channels() != mics)
    throw ConfigError("source frames do not match the microphone count");

  // Transfer functions come from a stream separate from the source draws.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  MixingTruth truth;
  truth.a_soi.resize(bins);
  truth.echo.resize(bins);
  truth.a_bg.resize(bins);
  const auto n = static_cast<Eigen::Index>(mics);
  for (std::size_t f = 0; f < bins; ++f) {
    truth.a_soi[f] = CVector(n);
    truth.echo[f] = CVector(n);
    truth.a_bg[f] = CMatrix(n, n - 1);
    for (Eigen::Index i = 0; i < n; ++i) truth.a_soi[f](i) = circular_gaussian(rng);
    for (Eigen::Index i = 0; i < n; ++i) truth.echo[f](i) = circular_gaussian(rng);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n - 1; ++j)
        truth.a_bg[f](i, j) = circular_gaussian(rng);
  }

  const FrameSpec& spec = sources.soi.spec;
  const std::size_t length = sources.soi.signal_length;
  SceneImages img{Spectrogram(spec, frames, mics, length),
                  Spectrogram(spec, frames, mics, length),
                  Spectrogram(spec, frames, mics, length), sources.noise};
  for (std::size_t f = 0; f < bins; ++f) {
    img.soi.bin(f) = sources.soi.bin(f) * truth.a_soi[f].transpose();
    img.echo.bin(f) = sources.loudspeaker.bin(f) * truth.echo[f].transpose();
    img.interference.bin(f) =
        sources.background.bin(f) * truth.a_bg[f].transpose();
  }

  Scene scene;
  scene.cfg = cfg;
  scene.gains = scene_gains(cfg, channel_power(img.soi, 0),
                            channel_power(img.echo, 0),
                            channel_power(img.interference, 0),
                            channel_power(img.noise, 0));
  img.soi *= scene.gains.soi;
  img.echo *= scene.gains.echo;
  img.interference *= scene.gains.interference;
  img.noise *= scene.gains.noise;
  for (std::size_t f = 0; f < bins; ++f) {
    truth.a_soi[f] *= scene.gains.soi;
    truth.echo[f] *= scene.gains.echo;
    truth.a_bg[f] *= scene.gains.interference;
  }

  scene.x = img.soi + img.echo + img.interference + img.noise;
  scene.u = sources.loudspeaker;
  scene.images = std::move(img);
  scene.truth = std::move(truth);
  return scene;
}

Scene make_narrowband_scene(const ScenarioConfig& cfg, const FrameSpec& spec,
                            std::size_t frames) {
  cfg.Validate();
  spec.Validate();
  const std::size_t length = (frames - 1) * spec.hop + spec.frame_len;
  std::mt19937_64 rng(cfg.seed);
  const SourceFrames sources = synth_sources(rng, spec, frames, cfg.mics, length);
  return render_narrowband(cfg, sources);
}

Scene make_narrowband_scene(const ScenarioConfig& cfg, const FrameSpec& spec) {
  cfg.Validate();
  spec.Validate();
  const auto length =
      static_cast<std::size_t>(std::llround(cfg.duration_s * spec.sample_rate));
  if (length < spec.frame_len)
    throw ConfigError("scene duration shorter than one frame");
  std::mt19937_64 rng(cfg.seed);
  const SourceFrames sources = synth_sources(
      rng, spec, spec.num_frames(length), cfg.mics, length);
  return render_narrowband(cfg, sources);
}

ConvolutiveInputs load_convolutive_inputs(const ConvolutivePaths& paths) {
  if (paths.interferers.size() != paths.interferer_rirs.size())
    throw ConfigError("need one RIR file per interferer");
  ConvolutiveInputs in;
  in.soi = read_wav(paths.soi);
  in.loudspeaker = read_wav(paths.loudspeaker);
  in.soi_rir = read_wav(paths.soi_rir);
  in.echo_rir = read_wav(paths.echo_rir);
  for (const auto& p : paths.interferers) in.interferers.push_back(read_wav(p));
  for (const auto& p : paths.interferer_rirs)
    in.interferer_rirs.push_back(read_wav(p));
  return in;
}

Scene render_convolutive(const ScenarioConfig& cfg,
                         const ConvolutiveInputs& inputs,
                         const FrameSpec& spec) {
  if (cfg.mics < 2) throw ConfigError("scenario needs M >= 2 microphones");
  if (!(cfg.duration_s > 0.0)) throw ConfigError("duration must be positive");
  spec.Validate();
  if (inputs.interferers.size() != inputs.interferer_rirs.size())
    throw ConfigError("need one RIR per interferer");

  const double rate = spec.sample_rate;
  std::vector<const Audio*> all = {&inputs.soi, &inputs.loudspeaker,
                                   &inputs.soi_rir, &inputs.echo_rir};
  for (const auto& a : inputs.interferers) all.push_back(&a);
  for (const auto& a : inputs.interferer_rirs) all.push_back(&a);
  for (const Audio* a : all) {
    if (a->sample_rate != rate)
      throw ConfigError("sample rate mismatch: file has " +
                        std::to_string(a->sample_rate) + " Hz, expected " +
                        std::to_string(rate));
  }

  const auto length =
      static_cast<std::size_t>(std::llround(cfg.duration_s * rate));
  const std::size_t mics = cfg.mics;
  TimeDomainScene td;
  td.soi = convolve_source(inputs.soi, inputs.soi_rir, mics, length);
  td.echo = convolve_source(inputs.loudspeaker, inputs.echo_rir, mics, length);
  td.interference = Audio(mics, length, rate);
  for (std::size_t k = 0; k < inputs.interferers.size(); ++k) {
    const Audio img = convolve_source(inputs.interferers[k],
                                      inputs.interferer_rirs[k], mics, length);
    for (std::size_t m = 0; m < mics; ++m)
      for (std::size_t i = 0; i < length; ++i)
        td.interference.channels[m][i] += img.channels[m][i];
  }
  td.noise = Audio(mics, length, rate);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& ch : td.noise.channels)
    for (double& v : ch) v = normal(rng);

  Scene scene;
  scene.cfg = cfg;
  scene.gains = scene_gains(cfg, audio_power(td.soi, 0), audio_power(td.echo, 0),
                            audio_power(td.interference, 0),
                            audio_power(td.noise, 0));
  scale_audio(td.soi, scene.gains.soi);
  scale_audio(td.echo, scene.gains.echo);
  scale_audio(td.interference, scene.gains.interference);
  scale_audio(td.noise, scene.gains.noise);

  td.mixture = Audio(mics, length, rate);
  for (std::size_t m = 0; m < mics; ++m)
    for (std::size_t i = 0; i < length; ++i)
      td.mixture.channels[m][i] = td.soi.channels[m][i] +
                                  td.echo.channels[m][i] +
                                  td.interference.channels[m][i] +
                                  td.noise.channels[m][i];
  td.loudspeaker = Audio(1, length, rate);
  td.loudspeaker.channels[0] = inputs.loudspeaker.channels.at(0);
  td.loudspeaker.channels[0].resize(length, 0.0);

  scene.x = analyze(td.mixture, spec);
  scene.u = analyze(td.loudspeaker, spec);
  scene.images = {analyze(td.soi, spec), analyze(td.echo, spec),
                  analyze(td.interference, spec), analyze(td.noise, spec)};
  scene.time = std::move(td);
  return scene;
}

Scene make_scene(const ScenarioConfig& cfg, const FrameSpec& spec) {
  cfg.Validate();
  if (cfg.mode == SceneMode::kNarrowband) return make_narrowband_scene(cfg, spec);
  return render_convolutive(cfg, load_convolutive_inputs(*cfg.rir_paths), spec);
}

void write_scene(const Scene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  TimeDomainScene td;
  if (scene.time) {
    td = *scene.time;
  } else {
    td.mixture = synthesize(scene.x);
    td.loudspeaker = synthesize(scene.u);
    td.soi = synthesize(scene.images.soi);
    td.echo = synthesize(scene.images.echo);
    td.interference = synthesize(scene.images.interference);
    td.noise = synthesize(scene.images.noise);
  }
  const std::vector<std::pair<std::string, const Audio*>> files = {
      {"mixture.wav", &td.mixture},   {"loudspeaker.wav", &td.loudspeaker},
      {"soi.wav", &td.soi},           {"echo.wav", &td.echo},
      {"interference.wav", &td.interference}, {"noise.wav", &td.noise}};
  json file_list = json::object();
  for (const auto& [name, audio] : files) {
    write_wav(dir / name, *audio);
    file_list[name.substr(0, name.size() - 4)] = name;
  }

  const ScenarioConfig& cfg = scene.cfg;
  json manifest;
  manifest["scenario"] = {{"mics", cfg.mics},
                          {"ser_db", ratio_json(cfg.ser_db)},
                          {"ier_db", ratio_json(cfg.ier_db)},
                          {"enr_db", ratio_json(cfg.enr_db)},
                          {"with_echo", cfg.with_echo},
                          {"seed", cfg.seed},
                          {"duration_s", cfg.duration_s},
                          {"mode", scene_mode_name(cfg.mode)}};
  manifest["gains"] = gains_json(scene.gains);
  manifest["frame"] = {{"frame_len", scene.x.spec.frame_len},
                       {"hop", scene.x.spec.hop},
                       {"sample_rate", scene.x.spec.sample_rate}};
  manifest["num_samples"] = td.mixture.num_samples();
  manifest["files"] = file_list;

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

Scene load_scene(const std::filesystem::path& dir, const FrameSpec& spec) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("no manifest.json in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest: " + std::string(e.what()));
  }

  Scene scene;
  try {
    const json& s = manifest.at("scenario");
    scene.cfg.mics = s.at("mics").get<std::size_t>();
    scene.cfg.ser_db = ratio_from_json(s.at("ser_db"));
    scene.cfg.ier_db = ratio_from_json(s.at("ier_db"));
    scene.cfg.enr_db = ratio_from_json(s.at("enr_db"));
    scene.cfg.with_echo = s.value("with_echo", true);
    scene.cfg.seed = s.at("seed").get<std::uint64_t>();
    scene.cfg.duration_s = s.at("duration_s").get<double>();
    scene.cfg.mode = parse_scene_mode(s.at("mode").get<std::string>());
    const json& g = manifest.at("gains");
    scene.gains = {g.at("soi").get<double>(), g.at("echo").get<double>(),
                   g.at("interference").get<double>(),
                   g.at("noise").get<double>()};
  } catch (const json::exception& e) {
    throw ConfigError("manifest missing fields: " + std::string(e.what()));
  }

  TimeDomainScene td;
  td.mixture = read_wav(dir / "mixture.wav");
  td.loudspeaker = read_wav(dir / "loudspeaker.wav");
  if (td.mixture.num_channels() != scene.cfg.mics)
    throw ConfigError("mixture channel count does not match the manifest");
  if (td.loudspeaker.num_samples() != td.mixture.num_samples())
    throw ConfigError("loudspeaker and mixture lengths differ");
  scene.x = analyze(td.mixture, spec);
  scene.u = analyze(trimmed(td.loudspeaker, td.mixture.num_samples()), spec);

  const bool has_images = std::filesystem::exists(dir / "soi.wav") &&
                          std::filesystem::exists(dir / "echo.wav") &&
                          std::filesystem::exists(dir / "interference.wav") &&
                          std::filesystem::exists(dir / "noise.wav");
  if (has_images) {
    td.soi = read_wav(dir / "soi.wav");
    td.echo = read_wav(dir / "echo.wav");
    td.interference = read_wav(dir / "interference.wav");
    td.noise = read_wav(dir / "noise.wav");
    scene.images = {analyze(td.soi, spec), analyze(td.echo, spec),
                    analyze(td.interference, spec), analyze(td.noise, spec)};
  }
  scene.time = std::move(td);
  return scene;
}

}  // namespace aecbse
