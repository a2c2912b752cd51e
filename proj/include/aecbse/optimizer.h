#ifndef AECBSE_OPTIMIZER_H_
#define AECBSE_OPTIMIZER_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aecbse/model.h"
#include "aecbse/stft.h"

namespace aecbse {

enum class Algorithm {
  kJoint,     // joint Newton AEC + IVE
  kBnlmsIve,  // per-channel BNLMS echo canceller followed by IVE
  kLsAec,     // batch least-squares echo canceller, no beamformer
  kIveOnly,   // IVE on the microphone signals, no echo canceller
  kNone,      // pass-through of the reference microphone
};

std::string_view algorithm_name(Algorithm algorithm);
// Accepts "joint", "bnlms_ive", "ls_aec", "ive_only", "none" (alias
// "unprocessed"). Throws ConfigError otherwise.
Algorithm parse_algorithm(std::string_view name);

// Curvature and normalization magnitudes below this freeze a bin for the
// current iteration.
inline constexpr double kDeadBinThreshold = 1e-12;

struct RunConfig {
  int iterations = 50;
  double loading = kDefaultLoading;
  std::size_t reference = 0;  // zero-based backprojection channel
  Algorithm algorithm = Algorithm::kJoint;
  ScoreModel score_model = ScoreModel::kSpherical;
  // Enables the transmission-matrix diagnostic.
  const MixingTruth* truth = nullptr;

  void Validate(std::size_t mics) const;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double delta_h = 0.0;  // ||h_new - h_old|| over all bins
  double delta_w = 0.0;
  double mean_nu = 0.0;
  double mean_rho = 0.0;
  std::size_t skipped_aec = 0;
  std::size_t skipped_bse = 0;
  std::optional<double> off_block_db;
};

struct RunDiagnostics {
  std::vector<IterationRecord> iterations;
  std::size_t skipped_bins = 0;  // total over iterations and updates
};

struct RunResult {
  Spectrogram s_hat;  // backprojected SOI estimate, 1 channel
  Spectrogram e;      // AEC error signal, M channels
  DemixState state;
  std::vector<Complex> backprojection;  // per-bin output scale
  RunDiagnostics diagnostics;
};

// Per-bin counts of bins left untouched by an update.
struct UpdateReport {
  std::size_t skipped = 0;
  double step_norm = 0.0;
};

// Signals derived from the current filters: e = x - h u, s_hat = w^H e and
// the score statistics of s_hat.
struct Signals {
  Spectrogram e;
  Spectrogram s_hat;
  ScoreStats stats;
};

Signals compute_signals(const Spectrogram& x, const Spectrogram& u,
                        const DemixState& state, ScoreModel model);

// dJ/dh^*. With `normalized`, phi is divided by nu (as used in the Newton
// step); otherwise it is the raw cost gradient.
std::vector<CVector> grad_h(const Spectrogram& e, const Spectrogram& u,
                            const Spectrogram& s_hat, const DemixState& state,
                            const ScoreStats& stats, bool normalized = true,
                            ScoreModel model = ScoreModel::kSpherical);

// E[e phi] / nu - a (normalized) or E[e phi] - a (raw).
std::vector<CVector> grad_w(const Spectrogram& e, const Spectrogram& s_hat,
                            const DemixState& state, const ScoreStats& stats,
                            bool normalized = true,
                            ScoreModel model = ScoreModel::kSpherical);

// (R + (rho^*/nu^*) w w^H) E[|u|^2], the matrix inverted by the AEC update.
std::vector<CMatrix> hessian_h(const Spectrogram& u, const DemixState& state,
                               const ScoreStats& stats);

// |E[u^2]| / E[|u|^2] per bin; 0 for silent bins.
std::vector<double> circularity_check(const Spectrogram& u);

// One Newton step on h for every bin. Statistics in `state` (R, a) must be
// current for `signals`.
UpdateReport update_aec(DemixState& state, const Spectrogram& u,
                        const Signals& signals, const RunConfig& cfg);

// Independent single-channel BNLMS step per microphone (Gaussian score,
// w = 1, R discarded).
UpdateReport update_aec_bnlms(DemixState& state, const Spectrogram& u,
                              const Spectrogram& e);

// One Newton (one-unit FastIVA) step on w for every bin. C_ee and a in
// `state` must be current for `signals`.
UpdateReport update_bse(DemixState& state, const Signals& signals,
                        const RunConfig& cfg);

// w <- w / sqrt(w^H C_ee w), then a <- C_ee w / (w^H C_ee w). Returns the
// number of bins left unnormalized because the quadratic form vanished.
std::size_t normalize_w(DemixState& state);

struct Backprojection {
  Spectrogram s_hat;
  std::vector<Complex> scale;
};

// Minimal-distortion rescaling of s_hat onto channel `reference` of e.
Backprojection backproject(const Spectrogram& s_hat, const Spectrogram& e,
                           std::size_t reference);

RunResult run_joint(const Spectrogram& x, const Spectrogram& u,
                    const RunConfig& cfg);
RunResult run_bnlms_ive(const Spectrogram& x, const Spectrogram& u,
                        const RunConfig& cfg);
// Batch LS echo canceller; throws NumericalError when u has no energy.
RunResult run_ls_aec(const Spectrogram& x, const Spectrogram& u,
                     const RunConfig& cfg);
RunResult run_ive_only(const Spectrogram& x, const RunConfig& cfg);
RunResult run_none(const Spectrogram& x, const RunConfig& cfg);

// Dispatches on cfg.algorithm.
RunResult run_algorithm(const Spectrogram& x, const Spectrogram& u,
                        const RunConfig& cfg);

}  // namespace aecbse

#endif  // AECBSE_OPTIMIZER_H_
