#include "aecbse/model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "aecbse/error.h"

namespace aecbse {

DemixState DemixState::Initial(std::size_t num_bins, std::size_t mics,
                               std::size_t reference) {
  if (mics == 0) throw ConfigError("need at least one microphone");
  if (reference >= mics) throw ConfigError("reference channel out of range");
  DemixState state;
  state.mics = mics;
  state.bins.resize(num_bins);
  for (auto& bin : state.bins) {
    bin.h = CVector::Zero(mics);
    bin.w = CVector::Unit(mics, reference);
    bin.a = CVector::Unit(mics, reference);
    bin.c_ee = CMatrix::Zero(mics, mics);
    bin.c_zz = CMatrix::Zero(mics - 1, mics - 1);
    bin.r = CMatrix::Zero(mics, mics);
  }
  return state;
}

CMatrix blocking_matrix(const CVector& a) {
  const Eigen::Index m = a.size();
  if (m < 2)
    throw ConfigError("blocking matrix needs M >= 2, got " + std::to_string(m));
  CMatrix b = CMatrix::Zero(m - 1, m);
  b.col(0) = a.tail(m - 1);
  b.rightCols(m - 1).diagonal().setConstant(-a(0));
  return b;
}

DemixOutput apply_demixer(const Spectrogram& x, const Spectrogram& u,
                          const DemixState& state) {
  const std::size_t mics = x.channels();
  if (u.channels() != 1) throw ConfigError("loudspeaker must be single-channel");
  if (u.bins() != x.bins() || u.frames() != x.frames())
    throw ConfigError("loudspeaker and microphone spectrograms differ in shape");
  if (state.mics != mics || state.num_bins() != x.bins())
    throw ConfigError("demixing state does not match the microphone signal");

  DemixOutput out;
  out.e = Spectrogram(x.bins(), x.frames(), mics);
  out.s_hat = Spectrogram(x.bins(), x.frames(), 1);
  if (mics > 1) out.z_hat = Spectrogram(x.bins(), x.frames(), mics - 1);
  for (auto* s : {&out.e, &out.s_hat, &out.z_hat}) {
    s->spec = x.spec;
    s->signal_length = x.signal_length;
  }

  for (std::size_t f = 0; f < x.bins(); ++f) {
    const BinState& bin = state.bins[f];
    auto e = out.e.bin(f);
    e = x.bin(f) - u.bin(f) * bin.h.transpose();
    out.s_hat.bin(f) = e * bin.w.conjugate();
    if (mics > 1) out.z_hat.bin(f) = e * blocking_matrix(bin.a).transpose();
  }
  return out;
}

CVector orthogonal_constraint_atf(const CMatrix& c_ee, const CVector& w) {
  const CVector cw = c_ee * w;
  const Complex quad = w.dot(cw);
  if (!(std::abs(quad) > 0.0) || !std::isfinite(std::abs(quad)))
    throw NumericalError("w^H C_ee w vanishes; dead frequency bin");
  return cw / quad;
}

ScoreFrame score(std::span<const Complex> frame, ScoreModel model) {
  const std::size_t n = frame.size();
  ScoreFrame out;
  out.phi.resize(n);
  out.dphi_dconj.resize(n);
  out.dphi.resize(n);

  double power = 0.0;
  for (const Complex& s : frame) power += std::norm(s);
  out.radius = std::sqrt(power);

  if (model == ScoreModel::kGaussian) {
    for (std::size_t f = 0; f < n; ++f) {
      out.phi[f] = std::conj(frame[f]);
      out.dphi_dconj[f] = 1.0;
      out.dphi[f] = 0.0;
    }
    return out;
  }

  const double r = std::max(out.radius, kRadiusFloor);
  const double r3 = r * r * r;
  for (std::size_t f = 0; f < n; ++f) {
    const Complex sc = std::conj(frame[f]);
    out.phi[f] = sc / r;
    out.dphi_dconj[f] = 1.0 / r - std::norm(frame[f]) / (2.0 * r3);
    out.dphi[f] = -(sc * sc) / (2.0 * r3);
  }
  return out;
}

double neg_log_density(std::span<const Complex> frame, ScoreModel model) {
  double power = 0.0;
  for (const Complex& s : frame) power += std::norm(s);
  return model == ScoreModel::kGaussian ? power : 2.0 * std::sqrt(power);
}

ScoreStats score_stats(const Spectrogram& s_hat, ScoreModel model) {
  if (s_hat.channels() != 1) throw ConfigError("score_stats expects 1 channel");
  const std::size_t bins = s_hat.bins();
  const std::size_t frames = s_hat.frames();
  if (frames < 2) throw ConfigError("score_stats needs at least two frames");

  ScoreStats stats;
  stats.nu.assign(bins, 0.0);
  stats.rho.assign(bins, 0.0);
  stats.xi.assign(bins, 0.0);
  std::vector<Complex> frame(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < bins; ++f) frame[f] = s_hat(f, t, 0);
    const ScoreFrame sf = score(frame, model);
    for (std::size_t f = 0; f < bins; ++f) {
      stats.nu[f] += frame[f] * sf.phi[f];
      stats.rho[f] += sf.dphi_dconj[f];
      stats.xi[f] += sf.dphi[f];
    }
  }
  const double inv_t = 1.0 / static_cast<double>(frames);
  for (std::size_t f = 0; f < bins; ++f) {
    stats.nu[f] *= inv_t;
    stats.rho[f] *= inv_t;
    stats.xi[f] *= inv_t;
  }
  return stats;
}

CMatrix diagonally_loaded(const CMatrix& c, double loading) {
  if (loading <= 0.0 || c.rows() == 0) return c;
  const double trace = c.diagonal().real().sum();
  CMatrix out = c;
  out.diagonal().array() += loading * trace / static_cast<double>(c.rows());
  return out;
}

CMatrix covariance(const CMatrix& frames, double loading) {
  if (frames.rows() == 0) throw ConfigError("covariance of an empty frame set");
  CMatrix c = frames.transpose() * frames.conjugate();
  c /= static_cast<double>(frames.rows());
  // Exact Hermitian symmetry regardless of summation order.
  c = (0.5 * (c + c.adjoint())).eval();
  return diagonally_loaded(c, loading);
}

CMatrix covariance(const Spectrogram::ConstBinMap& frames, double loading) {
  return covariance(CMatrix(frames), loading);
}

void refresh_statistics(DemixState& state, const Spectrogram& e,
                        double loading) {
  const std::size_t mics = state.mics;
  for (std::size_t f = 0; f < state.num_bins(); ++f) {
    BinState& bin = state.bins[f];
    bin.c_ee = covariance(e.bin(f), 0.0);
    const Complex quad = bin.w.dot(bin.c_ee * bin.w);
    if (quad.real() > 0.0 && std::isfinite(quad.real()))
      bin.a = bin.c_ee * bin.w / quad;
    if (mics < 2) {
      bin.c_zz.resize(0, 0);
      bin.r.resize(0, 0);
      continue;
    }
    const CMatrix b = blocking_matrix(bin.a);
    bin.c_zz = b * bin.c_ee * b.adjoint();
    // Load relative to the scale C_zz would have for a generic C_ee, so that
    // a background that vanishes (echo or SOI only) does not blow up R.
    const double dim = static_cast<double>(mics - 1);
    const double own = bin.c_zz.diagonal().real().sum() / dim;
    const double generic = bin.c_ee.diagonal().real().sum() /
                           static_cast<double>(mics) * b.squaredNorm() / dim;
    CMatrix loaded = bin.c_zz;
    loaded.diagonal().array() += loading * std::max(own, generic);
    if (!(loaded.diagonal().real().sum() > 0.0)) {
      bin.r = CMatrix::Zero(mics, mics);
      continue;
    }
    bin.r = b.adjoint() * loaded.ldlt().solve(b);
    bin.r = (0.5 * (bin.r + bin.r.adjoint())).eval();
  }
}

double cost(const DemixState& state, const Spectrogram& e,
            const Spectrogram& s_hat, ScoreModel model) {
  const std::size_t bins = s_hat.bins();
  const std::size_t frames = s_hat.frames();
  if (e.bins() != bins || e.frames() != frames || e.channels() != state.mics)
    throw ConfigError("cost: inconsistent shapes");

  double source_term = 0.0;
  std::vector<Complex> frame(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < bins; ++f) frame[f] = s_hat(f, t, 0);
    source_term += neg_log_density(frame, model);
  }
  source_term /= static_cast<double>(frames);

  double background_term = 0.0;
  double log_term = 0.0;
  for (std::size_t f = 0; f < bins; ++f) {
    const BinState& bin = state.bins[f];
    if (bin.r.size() > 0) {
      const auto ef = e.bin(f);
      for (std::size_t t = 0; t < frames; ++t) {
        const CVector v = ef.row(t).transpose();
        background_term += v.dot(bin.r * v).real();
      }
    }
    const double gamma2 = std::norm(bin.a(0));
    if (!(gamma2 > 0.0))
      throw NumericalError("degenerate ATF estimate: gamma is zero in bin " +
                           std::to_string(f));
    log_term += std::log(gamma2);
  }
  background_term /= static_cast<double>(frames);
  const double mics = static_cast<double>(state.mics);
  return source_term + background_term - (mics - 2.0) * log_term;
}

std::vector<CMatrix> transmission_matrix(const DemixState& state,
                                         const MixingTruth& truth) {
  const std::size_t m = state.mics;
  if (m < 2) throw ConfigError("transmission matrix needs M >= 2");
  if (truth.a_soi.size() != state.num_bins() ||
      truth.echo.size() != state.num_bins() ||
      truth.a_bg.size() != state.num_bins())
    throw ConfigError("ground truth unavailable for every bin");

  std::vector<CMatrix> out(state.num_bins());
  const auto n = static_cast<Eigen::Index>(m);
  for (std::size_t f = 0; f < state.num_bins(); ++f) {
    const BinState& bin = state.bins[f];
    const CMatrix b = blocking_matrix(bin.a);
    const CVector echo_residual = truth.echo[f] - bin.h;
    CMatrix v = CMatrix::Zero(n + 1, n + 1);
    v(0, 0) = bin.w.dot(truth.a_soi[f]);
    v.block(0, 1, 1, n - 1) = bin.w.adjoint() * truth.a_bg[f];
    v(0, n) = bin.w.dot(echo_residual);
    v.block(1, 0, n - 1, 1) = b * truth.a_soi[f];
    v.block(1, 1, n - 1, n - 1) = b * truth.a_bg[f];
    v.block(1, n, n - 1, 1) = b * echo_residual;
    v(n, n) = 1.0;
    out[f] = std::move(v);
  }
  return out;
}

double off_block_energy(const std::vector<CMatrix>& transmission) {
  double off = 0.0;
  double total = 0.0;
  for (const CMatrix& v : transmission) {
    const Eigen::Index n = v.rows() - 1;
    const CMatrix upper = v.topRows(n);
    total += upper.squaredNorm();
    off += std::norm(upper(0, n));
    off += upper.block(0, 1, 1, n - 1).squaredNorm();
    off += upper.block(1, 0, n - 1, 1).squaredNorm();
    off += upper.block(1, n, n - 1, 1).squaredNorm();
  }
  return total > 0.0 ? off / total : 0.0;
}

}  // namespace aecbse
