#ifndef AECBSE_METRICS_H_
#define AECBSE_METRICS_H_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "aecbse/model.h"
#include "aecbse/scenegen.h"
#include "aecbse/stft.h"

namespace aecbse {

// Ratios are clamped to +-kRatioCapDb when a power vanishes.
inline constexpr double kRatioCapDb = 99.0;

struct MetricsReport {
  std::string algorithm;
  std::uint64_t seed = 0;
  int iterations = 0;
  double sir_db = 0.0;
  double ser_db = 0.0;
  double sier_db = 0.0;
  double erle_aec_db = 0.0;
  double erle_bf_db = 0.0;
};

// Single-channel contributions of every component at one processing stage.
struct StageOutputs {
  Spectrogram soi;
  Spectrogram echo;
  Spectrogram interference;
  Spectrogram noise;

  Spectrogram sum() const;
};

struct ComponentPass {
  StageOutputs aec;  // reference channel of x - h u, per component
  StageOutputs bse;  // scale * w^H (x - h u), per component
};

// Pushes each component image through the estimated linear pipeline. Only
// the echo image has a loudspeaker part, so only it is reduced by h u.
ComponentPass component_pass(const DemixState& state,
                             const std::vector<Complex>& output_scale,
                             const SceneImages& images, const Spectrogram& u,
                             std::size_t reference);

// Sum of squares over samples, leaving out `edge` samples at both ends when
// the signal is long enough.
double interior_power(const std::vector<double>& x, std::size_t edge);

// 10 log10(num / den) clamped to +-kRatioCapDb.
double capped_db(double num, double den);

// Echo-return-loss enhancement in dB from time-domain echo signals.
double erle(const std::vector<double>& echo_image,
            const std::vector<double>& echo_residual, std::size_t edge = 0);

struct Ratios {
  double sir_db = 0.0;
  double ser_db = 0.0;
  double sier_db = 0.0;
};

Ratios ratios(const std::vector<double>& soi, const std::vector<double>& echo,
              const std::vector<double>& interference,
              const std::vector<double>& noise, std::size_t edge = 0);

// Time-domain metrics of a processed scene. Component images must be
// present in `scene`.
MetricsReport evaluate(const Scene& scene, const DemixState& state,
                       const std::vector<Complex>& output_scale,
                       std::size_t reference);

// Metrics of the unprocessed reference microphone.
MetricsReport evaluate_unprocessed(const Scene& scene, std::size_t reference);

// Column means over reports; algorithm and seed are taken from the caller.
MetricsReport mean_report(const std::vector<MetricsReport>& reports);

// CSV with header "algorithm,seed,SIR,SER,SIER,ERLE_aec,ERLE_bf". Rows are
// written as given, followed by one "mean" row per algorithm in order of
// first appearance.
void write_metrics_csv(std::ostream& out,
                       const std::vector<MetricsReport>& rows);

}  // namespace aecbse

#endif  // AECBSE_METRICS_H_
