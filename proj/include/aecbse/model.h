#ifndef AECBSE_MODEL_H_
#define AECBSE_MODEL_H_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aecbse/stft.h"

namespace aecbse {

using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// Relative diagonal loading applied to covariances before inversion.
inline constexpr double kDefaultLoading = 1e-6;
// Floor on the broadband frame norm used by the spherical score.
inline constexpr double kRadiusFloor = 1e-12;

// Per-frequency parameters of the echo canceller and extraction beamformer,
// plus the statistics derived from the current error signal.
struct BinState {
  CVector h;      // AEC filter, one tap per microphone.
  CVector w;      // extraction beamformer, s_hat = w^H e.
  CVector a;      // SOI transfer function estimate (gamma, g^T)^T.
  CMatrix c_ee;   // sample error covariance, unloaded.
  CMatrix c_zz;   // background covariance B C_ee B^H, unloaded.
  CMatrix r;      // B^H C_zz^{-1} B, with C_zz loaded before inversion.
};

struct DemixState {
  std::size_t mics = 0;
  std::vector<BinState> bins;

  // h = 0, w = a = unit vector on `reference`, zero statistics.
  static DemixState Initial(std::size_t num_bins, std::size_t mics,
                            std::size_t reference = 0);
  std::size_t num_bins() const { return bins.size(); }
};

// Ground-truth narrowband mixing parameters, one entry per bin.
struct MixingTruth {
  std::vector<CVector> a_soi;  // M
  std::vector<CVector> echo;   // M, the echo transfer function
  std::vector<CMatrix> a_bg;   // M x (M-1)
};

enum class ScoreModel {
  kSpherical,  // phi_f = s_f^* / ||s||, joint broadband activity
  kGaussian,   // phi_f = s_f^*
};

// Score function and its Wirtinger derivatives for one frame.
struct ScoreFrame {
  std::vector<Complex> phi;
  std::vector<Complex> dphi_dconj;  // d phi_f / d s_f^*
  std::vector<Complex> dphi;        // d phi_f / d s_f
  double radius = 0.0;
};

// Time averages over frames, per bin.
struct ScoreStats {
  std::vector<Complex> nu;   // E[s phi]
  std::vector<Complex> rho;  // E[d phi / d s^*]
  std::vector<Complex> xi;   // E[d phi / d s]
};

// B = (g, -gamma I) for a = (gamma, g^T)^T. Requires M >= 2.
CMatrix blocking_matrix(const CVector& a);

struct DemixOutput {
  Spectrogram e;      // M channels, x - h u
  Spectrogram s_hat;  // 1 channel, w^H e
  Spectrogram z_hat;  // M-1 channels, B(a) e; empty when M == 1
};

DemixOutput apply_demixer(const Spectrogram& x, const Spectrogram& u,
                          const DemixState& state);

// a = C_ee w / (w^H C_ee w). Throws NumericalError when the quadratic form
// vanishes.
CVector orthogonal_constraint_atf(const CMatrix& c_ee, const CVector& w);

ScoreFrame score(std::span<const Complex> frame,
                 ScoreModel model = ScoreModel::kSpherical);

// Negative log density of one frame up to a constant: 2 ||s|| for the
// spherical model, ||s||^2 for the Gaussian one.
double neg_log_density(std::span<const Complex> frame,
                       ScoreModel model = ScoreModel::kSpherical);

ScoreStats score_stats(const Spectrogram& s_hat,
                       ScoreModel model = ScoreModel::kSpherical);

// (1/T) sum_t v_t v_t^H + loading * tr/dim * I. Rows of `frames` are v_t^T.
CMatrix covariance(const Spectrogram::ConstBinMap& frames, double loading);
CMatrix covariance(const CMatrix& frames, double loading);

// Adds loading * tr(C)/dim to the diagonal.
CMatrix diagonally_loaded(const CMatrix& c, double loading);

// Recomputes C_ee, a (orthogonal constraint), C_zz and R for every bin from
// the error signal `e`. Bins whose covariance vanishes keep their previous
// a and get R = 0. C_zz is loaded before inversion by at least
// loading * ||B||_F^2 tr(C_ee) / (M (M-1)), so R stays bounded when the
// background vanishes.
void refresh_statistics(DemixState& state, const Spectrogram& e,
                        double loading = kDefaultLoading);

// Negative normalized log-likelihood with the constant dropped:
// E[-log p(s)] + sum_f E[e^H R e] - (M-2) sum_f log|gamma_f|^2.
// Throws NumericalError when some gamma_f is zero.
double cost(const DemixState& state, const Spectrogram& e,
            const Spectrogram& s_hat,
            ScoreModel model = ScoreModel::kSpherical);

// Overall transmission from (s, q, u) to (s_hat, z_hat, u) for every bin.
std::vector<CMatrix> transmission_matrix(const DemixState& state,
                                         const MixingTruth& truth);

// Fraction of transmission energy outside the (1, M-1, 1) diagonal blocks,
// summed over bins. The loudspeaker row is constant and left out.
double off_block_energy(const std::vector<CMatrix>& transmission);

}  // namespace aecbse

#endif  // AECBSE_MODEL_H_
