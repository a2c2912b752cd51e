#include "aecbse/optimizer.h"

#include <cmath>
#include <limits>
#include <string>

#include "aecbse/error.h"

namespace aecbse {
namespace {

// phi_{f,t} for every bin and frame of a single-channel estimate.
Spectrogram score_values(const Spectrogram& s_hat, ScoreModel model) {
  Spectrogram phi(s_hat.bins(), s_hat.frames(), 1);
  std::vector<Complex> frame(s_hat.bins());
  for (std::size_t t = 0; t < s_hat.frames(); ++t) {
    for (std::size_t f = 0; f < s_hat.bins(); ++f) frame[f] = s_hat(f, t, 0);
    const ScoreFrame sf = score(frame, model);
    for (std::size_t f = 0; f < s_hat.bins(); ++f) phi(f, t, 0) = sf.phi[f];
  }
  return phi;
}

double mean_power(const Spectrogram::ConstBinMap& column) {
  return column.squaredNorm() / static_cast<double>(column.rows());
}

void check_inputs(const Spectrogram& x, const Spectrogram& u) {
  if (x.channels() == 0) throw ConfigError("microphone signal has no channels");
  if (u.channels() != 1) throw ConfigError("loudspeaker must be single-channel");
  if (u.bins() != x.bins() || u.frames() != x.frames())
    throw ConfigError("loudspeaker and microphone spectrograms differ in shape");
}

// Background precision R as an M x M matrix, zero for M == 1.
CMatrix precision_or_zero(const BinState& bin, std::size_t mics) {
  const auto n = static_cast<Eigen::Index>(mics);
  if (bin.r.rows() == n) return bin.r;
  return CMatrix::Zero(n, n);
}

enum class AecMode { kNewton, kBnlms, kFrozen };

double filter_distance(const DemixState& a, const DemixState& b, bool w) {
  double sum = 0.0;
  for (std::size_t f = 0; f < a.num_bins(); ++f)
    sum += w ? (a.bins[f].w - b.bins[f].w).squaredNorm()
             : (a.bins[f].h - b.bins[f].h).squaredNorm();
  return std::sqrt(sum);
}

IterationRecord make_record(int iteration, const DemixState& state,
                            const Signals& sig, const RunConfig& cfg) {
  IterationRecord rec;
  rec.iteration = iteration;
  try {
    rec.cost = cost(state, sig.e, sig.s_hat, cfg.score_model);
  } catch (const NumericalError&) {
    rec.cost = std::numeric_limits<double>::quiet_NaN();
  }
  const double bins = static_cast<double>(state.num_bins());
  for (std::size_t f = 0; f < state.num_bins(); ++f) {
    rec.mean_nu += sig.stats.nu[f].real() / bins;
    rec.mean_rho += sig.stats.rho[f].real() / bins;
  }
  if (cfg.truth != nullptr) {
    const double ratio =
        off_block_energy(transmission_matrix(state, *cfg.truth));
    rec.off_block_db = 10.0 * std::log10(std::max(ratio, 1e-300));
  }
  return rec;
}

RunResult run_extraction(const Spectrogram& x, const Spectrogram& u,
                         const RunConfig& cfg, AecMode mode) {
  check_inputs(x, u);
  cfg.Validate(x.channels());
  if (x.channels() < 2)
    throw ConfigError("extraction needs at least two microphones");
  if (x.frames() < 2) throw ConfigError("need at least two frames");

  DemixState state = DemixState::Initial(x.bins(), x.channels(), 0);
  Signals sig = compute_signals(x, u, state, cfg.score_model);
  refresh_statistics(state, sig.e, cfg.loading);
  normalize_w(state);
  sig = compute_signals(x, u, state, cfg.score_model);
  refresh_statistics(state, sig.e, cfg.loading);

  RunResult result;
  for (int it = 0; it < cfg.iterations; ++it) {
    const DemixState before = state;
    UpdateReport aec;
    if (mode == AecMode::kNewton) {
      aec = update_aec(state, u, sig, cfg);
    } else if (mode == AecMode::kBnlms) {
      aec = update_aec_bnlms(state, u, sig.e);
    }
    if (mode != AecMode::kFrozen) {
      sig = compute_signals(x, u, state, cfg.score_model);
      refresh_statistics(state, sig.e, cfg.loading);
    }
    const UpdateReport bse = update_bse(state, sig, cfg);
    const std::size_t unnormalized = normalize_w(state);
    sig = compute_signals(x, u, state, cfg.score_model);
    refresh_statistics(state, sig.e, cfg.loading);

    IterationRecord rec = make_record(it + 1, state, sig, cfg);
    rec.delta_h = filter_distance(state, before, false);
    rec.delta_w = filter_distance(state, before, true);
    rec.skipped_aec = aec.skipped;
    rec.skipped_bse = bse.skipped + unnormalized;
    result.diagnostics.skipped_bins += rec.skipped_aec + rec.skipped_bse;
    result.diagnostics.iterations.push_back(rec);
  }

  Backprojection bp = backproject(sig.s_hat, sig.e, cfg.reference);
  result.s_hat = std::move(bp.s_hat);
  result.backprojection = std::move(bp.scale);
  result.e = std::move(sig.e);
  result.state = std::move(state);
  return result;
}

}  // namespace

std::string_view algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kJoint: return "joint";
    case Algorithm::kBnlmsIve: return "bnlms_ive";
    case Algorithm::kLsAec: return "ls_aec";
    case Algorithm::kIveOnly: return "ive_only";
    case Algorithm::kNone: return "none";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "joint") return Algorithm::kJoint;
  if (name == "bnlms_ive") return Algorithm::kBnlmsIve;
  if (name == "ls_aec") return Algorithm::kLsAec;
  if (name == "ive_only" || name == "ive") return Algorithm::kIveOnly;
  if (name == "none" || name == "unprocessed") return Algorithm::kNone;
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

void RunConfig::Validate(std::size_t mics) const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (reference >= mics)
    throw ConfigError("reference channel " + std::to_string(reference + 1) +
                      " exceeds microphone count " + std::to_string(mics));
  if (!(loading >= 0.0)) throw ConfigError("loading must be non-negative");
}

Signals compute_signals(const Spectrogram& x, const Spectrogram& u,
                        const DemixState& state, ScoreModel model) {
  check_inputs(x, u);
  if (state.mics != x.channels() || state.num_bins() != x.bins())
    throw ConfigError("demixing state does not match the microphone signal");
  Signals sig;
  sig.e = Spectrogram(x.bins(), x.frames(), x.channels());
  sig.s_hat = Spectrogram(x.bins(), x.frames(), 1);
  for (auto* s : {&sig.e, &sig.s_hat}) {
    s->spec = x.spec;
    s->signal_length = x.signal_length;
  }
  for (std::size_t f = 0; f < x.bins(); ++f) {
    const BinState& bin = state.bins[f];
    auto e = sig.e.bin(f);
    e = x.bin(f) - u.bin(f) * bin.h.transpose();
    sig.s_hat.bin(f) = e * bin.w.conjugate();
  }
  sig.stats = score_stats(sig.s_hat, model);
  return sig;
}

std::vector<CVector> grad_h(const Spectrogram& e, const Spectrogram& u,
                            const Spectrogram& s_hat, const DemixState& state,
                            const ScoreStats& stats, bool normalized,
                            ScoreModel model) {
  const Spectrogram phi = score_values(s_hat, model);
  const double inv_t = 1.0 / static_cast<double>(e.frames());
  std::vector<CVector> grads(e.bins());
  for (std::size_t f = 0; f < e.bins(); ++f) {
    const BinState& bin = state.bins[f];
    const auto uf = u.bin(f).col(0);
    // E[phi^* u^*] and E[e u^*]
    const Complex phi_u =
        std::conj((phi.bin(f).col(0).array() * uf.array()).sum()) * inv_t;
    const CVector e_u = e.bin(f).transpose() * uf.conjugate() * inv_t;
    const CMatrix r = precision_or_zero(bin, state.mics);
    Complex weight = phi_u;
    if (normalized) {
      if (std::abs(stats.nu[f]) < kDeadBinThreshold) {
        grads[f] = CVector::Zero(state.mics);
        continue;
      }
      weight /= std::conj(stats.nu[f]);
    }
    grads[f] = -(bin.w * weight + r * e_u);
  }
  return grads;
}

std::vector<CVector> grad_w(const Spectrogram& e, const Spectrogram& s_hat,
                            const DemixState& state, const ScoreStats& stats,
                            bool normalized, ScoreModel model) {
  const Spectrogram phi = score_values(s_hat, model);
  const double inv_t = 1.0 / static_cast<double>(e.frames());
  std::vector<CVector> grads(e.bins());
  for (std::size_t f = 0; f < e.bins(); ++f) {
    CVector e_phi = e.bin(f).transpose() * phi.bin(f).col(0) * inv_t;
    if (normalized) {
      if (std::abs(stats.nu[f]) < kDeadBinThreshold) {
        grads[f] = CVector::Zero(state.mics);
        continue;
      }
      e_phi /= stats.nu[f];
    }
    grads[f] = e_phi - state.bins[f].a;
  }
  return grads;
}

std::vector<CMatrix> hessian_h(const Spectrogram& u, const DemixState& state,
                               const ScoreStats& stats) {
  std::vector<CMatrix> out(state.num_bins());
  for (std::size_t f = 0; f < state.num_bins(); ++f) {
    const BinState& bin = state.bins[f];
    const double pu = mean_power(u.bin(f));
    CMatrix hess = precision_or_zero(bin, state.mics);
    if (std::abs(stats.nu[f]) >= kDeadBinThreshold)
      hess += (std::conj(stats.rho[f]) / std::conj(stats.nu[f])) * bin.w *
              bin.w.adjoint();
    out[f] = hess * pu;
  }
  return out;
}

std::vector<double> circularity_check(const Spectrogram& u) {
  if (u.channels() != 1) throw ConfigError("circularity_check expects 1 channel");
  if (u.frames() < 2) throw ConfigError("circularity_check needs T >= 2");
  std::vector<double> out(u.bins(), 0.0);
  for (std::size_t f = 0; f < u.bins(); ++f) {
    const auto uf = u.bin(f).col(0);
    const double power = uf.squaredNorm();
    if (power > 0.0) out[f] = std::abs((uf.array() * uf.array()).sum()) / power;
  }
  return out;
}

UpdateReport update_aec(DemixState& state, const Spectrogram& u,
                        const Signals& signals, const RunConfig& cfg) {
  const std::vector<CVector> grads =
      grad_h(signals.e, u, signals.s_hat, state, signals.stats, true,
             cfg.score_model);
  const std::vector<CMatrix> hessians = hessian_h(u, state, signals.stats);
  UpdateReport report;
  double step2 = 0.0;
  for (std::size_t f = 0; f < state.num_bins(); ++f) {
    const CMatrix& hess = hessians[f];
    if (std::abs(signals.stats.nu[f]) < kDeadBinThreshold ||
        !(hess.diagonal().real().sum() > 0.0)) {
      ++report.skipped;
      continue;
    }
    Eigen::FullPivLU<CMatrix> lu(hess);
    if (!lu.isInvertible()) lu.compute(diagonally_loaded(hess, cfg.loading));
    if (!lu.isInvertible()) {
      ++report.skipped;
      continue;
    }
    const CVector step = -lu.solve(grads[f]);
    if (!step.allFinite()) {
      ++report.skipped;
      continue;
    }
    state.bins[f].h += step;
    step2 += step.squaredNorm();
  }
  report.step_norm = std::sqrt(step2);
  return report;
}

UpdateReport update_aec_bnlms(DemixState& state, const Spectrogram& u,
                              const Spectrogram& e) {
  UpdateReport report;
  double step2 = 0.0;
  const double inv_t = 1.0 / static_cast<double>(e.frames());
  for (std::size_t f = 0; f < state.num_bins(); ++f) {
    const auto uf = u.bin(f).col(0);
    const double pu = uf.squaredNorm() * inv_t;
    if (!(pu > 0.0)) {
      ++report.skipped;
      continue;
    }
    // E[e_m u^*] / E[|u|^2] for every channel m.
    const CVector step = e.bin(f).transpose() * uf.conjugate() * (inv_t / pu);
    state.bins[f].h += step;
    step2 += step.squaredNorm();
  }
  report.step_norm = std::sqrt(step2);
  return report;
}

UpdateReport update_bse(DemixState& state, const Signals& signals,
                        const RunConfig& cfg) {
  const std::vector<CVector> grads = grad_w(
      signals.e, signals.s_hat, state, signals.stats, true, cfg.score_model);
  UpdateReport report;
  double step2 = 0.0;
  for (std::size_t f = 0; f < state.num_bins(); ++f) {
    BinState& bin = state.bins[f];
    const Complex nu = signals.stats.nu[f];
    const Complex curvature = std::conj(signals.stats.rho[f]) - std::conj(nu);
    if (std::abs(nu) < kDeadBinThreshold ||
        std::abs(curvature) < kDeadBinThreshold ||
        !(bin.c_ee.diagonal().real().sum() > 0.0)) {
      ++report.skipped;
      continue;
    }
    const CMatrix loaded = diagonally_loaded(bin.c_ee, cfg.loading);
    Eigen::LDLT<CMatrix> ldlt(loaded);
    if (ldlt.info() != Eigen::Success) {
      ++report.skipped;
      continue;
    }
    // Newton step of the extraction contrast; the fixed point coincides
    // with the one-unit FastIVA iteration w ~ rho w - C_ee^{-1} E[e phi].
    const CVector step = -(std::conj(nu) / curvature) * ldlt.solve(grads[f]);
    if (!step.allFinite()) {
      ++report.skipped;
      continue;
    }
    bin.w += step;
    step2 += step.squaredNorm();
  }
  report.step_norm = std::sqrt(step2);
  return report;
}

std::size_t normalize_w(DemixState& state) {
  std::size_t skipped = 0;
  for (BinState& bin : state.bins) {
    const double quad = bin.w.dot(bin.c_ee * bin.w).real();
    if (!(quad > 0.0) || !std::isfinite(quad)) {
      ++skipped;
      continue;
    }
    bin.w /= std::sqrt(quad);
    bin.a = orthogonal_constraint_atf(bin.c_ee, bin.w);
  }
  return skipped;
}

Backprojection backproject(const Spectrogram& s_hat, const Spectrogram& e,
                           std::size_t reference) {
  if (s_hat.channels() != 1) throw ConfigError("backproject expects 1 channel");
  if (reference >= e.channels())
    throw ConfigError("backprojection reference out of range");
  if (e.bins() != s_hat.bins() || e.frames() != s_hat.frames())
    throw ConfigError("backproject: shape mismatch");

  Backprojection out;
  out.s_hat = s_hat;
  out.scale.assign(s_hat.bins(), 0.0);
  double total = 0.0;
  for (std::size_t f = 0; f < s_hat.bins(); ++f) {
    const auto s = s_hat.bin(f).col(0);
    const double power = s.squaredNorm();
    total += power;
    // E[s^* e_r] / E[|s|^2]
    const Complex alpha =
        power > 0.0 ? s.dot(e.bin(f).col(reference)) / power : Complex(0.0);
    out.scale[f] = alpha;
    out.s_hat.bin(f) *= alpha;
  }
  if (!(total > 0.0))
    throw NumericalError("backprojection of an all-zero estimate");
  return out;
}

RunResult run_joint(const Spectrogram& x, const Spectrogram& u,
                    const RunConfig& cfg) {
  return run_extraction(x, u, cfg, AecMode::kNewton);
}

RunResult run_bnlms_ive(const Spectrogram& x, const Spectrogram& u,
                        const RunConfig& cfg) {
  return run_extraction(x, u, cfg, AecMode::kBnlms);
}

RunResult run_ive_only(const Spectrogram& x, const RunConfig& cfg) {
  Spectrogram silent(x.bins(), x.frames(), 1);
  silent.spec = x.spec;
  silent.signal_length = x.signal_length;
  return run_extraction(x, silent, cfg, AecMode::kFrozen);
}

RunResult run_ls_aec(const Spectrogram& x, const Spectrogram& u,
                     const RunConfig& cfg) {
  check_inputs(x, u);
  cfg.Validate(x.channels());
  RunResult result;
  result.state = DemixState::Initial(x.bins(), x.channels(), cfg.reference);
  double total = 0.0;
  const double inv_t = 1.0 / static_cast<double>(x.frames());
  for (std::size_t f = 0; f < x.bins(); ++f) {
    const auto uf = u.bin(f).col(0);
    const double pu = uf.squaredNorm() * inv_t;
    total += pu;
    if (pu > 0.0)
      result.state.bins[f].h =
          x.bin(f).transpose() * uf.conjugate() * (inv_t / pu);
  }
  if (!(total > 0.0))
    throw NumericalError("LS echo canceller: loudspeaker has no excitation");

  Signals sig = compute_signals(x, u, result.state, cfg.score_model);
  refresh_statistics(result.state, sig.e, cfg.loading);
  result.s_hat = sig.e.channel(cfg.reference);
  result.backprojection.assign(x.bins(), 1.0);
  result.e = std::move(sig.e);
  return result;
}

RunResult run_none(const Spectrogram& x, const RunConfig& cfg) {
  cfg.Validate(x.channels());
  RunResult result;
  result.state = DemixState::Initial(x.bins(), x.channels(), cfg.reference);
  result.s_hat = x.channel(cfg.reference);
  result.backprojection.assign(x.bins(), 1.0);
  result.e = x;
  return result;
}

RunResult run_algorithm(const Spectrogram& x, const Spectrogram& u,
                        const RunConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::kJoint: return run_joint(x, u, cfg);
    case Algorithm::kBnlmsIve: return run_bnlms_ive(x, u, cfg);
    case Algorithm::kLsAec: return run_ls_aec(x, u, cfg);
    case Algorithm::kIveOnly: return run_ive_only(x, cfg);
    case Algorithm::kNone: return run_none(x, cfg);
  }
  throw ConfigError("unhandled algorithm");
}

}  // namespace aecbse
