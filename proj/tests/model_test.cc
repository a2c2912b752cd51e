#include "aecbse/model.h"

#include <cmath>
#include <random>
#include <vector>

#include "gtest/gtest.h"

#include "aecbse/error.h"
#include "aecbse/optimizer.h"
#include "test_util.h"

namespace aecbse {
namespace {

using test::RandomComplex;
using test::RandomCovariance;
using test::RandomMatrix;
using test::RandomSpectrogram;
using test::RandomVector;

TEST(BlockingMatrixTest, AnnihilatesAtf) {
  std::mt19937_64 rng(1);
  for (Eigen::Index m : {2, 3, 4, 8}) {
    for (int trial = 0; trial < 50; ++trial) {
      const CVector a = RandomVector(rng, m);
      const CMatrix b = blocking_matrix(a);
      ASSERT_EQ(b.rows(), m - 1);
      ASSERT_EQ(b.cols(), m);
      EXPECT_LE((b * a).norm(), 1e-12 * a.squaredNorm());
    }
  }
}

TEST(BlockingMatrixTest, TwoChannelExample) {
  CVector a(2);
  a << Complex(2, 1), Complex(-1, 3);
  const CMatrix b = blocking_matrix(a);
  EXPECT_EQ(b(0, 0), a(1));
  EXPECT_EQ(b(0, 1), -a(0));
}

TEST(BlockingMatrixTest, RejectsSingleChannel) {
  EXPECT_THROW(blocking_matrix(CVector::Ones(1)), ConfigError);
}

TEST(OrthogonalConstraintTest, DistortionlessAndWhitening) {
  std::mt19937_64 rng(2);
  for (Eigen::Index m : {2, 3, 4, 8}) {
    const CMatrix c = RandomCovariance(rng, m);
    const CVector w = RandomVector(rng, m);
    const CVector a = orthogonal_constraint_atf(c, w);
    EXPECT_LE(std::abs(w.dot(a) - 1.0), 1e-10);
    // w^H e and B e are uncorrelated.
    const CMatrix b = blocking_matrix(a);
    EXPECT_LE((b * c * w).norm(), 1e-10 * c.norm() * w.norm());
  }
}

TEST(OrthogonalConstraintTest, ThrowsOnVanishingForm) {
  EXPECT_THROW(orthogonal_constraint_atf(CMatrix::Zero(3, 3), CVector::Ones(3)),
               NumericalError);
}

// With a from the orthogonal constraint, C^{-1} = w w^H / (w^H C w) + R.
TEST(RefreshStatisticsTest, PrecisionDecomposition) {
  std::mt19937_64 rng(3);
  const std::size_t m = 4;
  const Spectrogram e = RandomSpectrogram(rng, 1, 200, m);
  DemixState state = DemixState::Initial(1, m);
  state.bins[0].w = RandomVector(rng, m);
  refresh_statistics(state, e, 0.0);
  const BinState& bin = state.bins[0];
  const CMatrix c = covariance(e.bin(0), 0.0);
  EXPECT_LE((bin.c_ee - c).norm(), 1e-14 * c.norm());
  const double quad = bin.w.dot(c * bin.w).real();
  const CMatrix expected = c.inverse();
  const CMatrix got = bin.w * bin.w.adjoint() / quad + bin.r;
  EXPECT_LE((got - expected).norm(), 1e-9 * expected.norm());
  EXPECT_LE(std::abs(bin.w.dot(bin.a) - 1.0), 1e-10);
}

TEST(CovarianceTest, MatchesOuterProductSumAndLoading) {
  std::mt19937_64 rng(4);
  const CMatrix v = RandomMatrix(rng, 10, 3);
  CMatrix expected = CMatrix::Zero(3, 3);
  for (Eigen::Index t = 0; t < 10; ++t) {
    const CVector x = v.row(t).transpose();
    expected += x * x.adjoint();
  }
  expected /= 10.0;
  const CMatrix c = covariance(v, 0.0);
  EXPECT_LE((c - expected).norm(), 1e-14);
  EXPECT_EQ(c, c.adjoint());
  const CMatrix loaded = covariance(v, 1e-2);
  const double tr = expected.diagonal().real().sum();
  EXPECT_LE((loaded - expected - 1e-2 * tr / 3.0 * CMatrix::Identity(3, 3))
                .norm(),
            1e-14);
  EXPECT_THROW(covariance(CMatrix(0, 3), 0.0), ConfigError);
}

TEST(ScoreTest, SphericalExample) {
  const std::vector<Complex> frame = {Complex(3, 4)};
  const ScoreFrame s = score(frame);
  EXPECT_DOUBLE_EQ(s.radius, 5.0);
  EXPECT_NEAR(std::abs(s.phi[0] - Complex(0.6, -0.8)), 0.0, 1e-15);
  // 1/r - |s|^2 / (2 r^3) = 1/5 - 1/10
  EXPECT_NEAR(std::abs(s.dphi_dconj[0] - 0.1), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(neg_log_density(frame), 10.0);
}

TEST(ScoreTest, GaussianExample) {
  const std::vector<Complex> frame = {Complex(1, 2), Complex(0, -1)};
  const ScoreFrame s = score(frame, ScoreModel::kGaussian);
  EXPECT_EQ(s.phi[0], Complex(1, -2));
  EXPECT_EQ(s.dphi_dconj[1], Complex(1, 0));
  EXPECT_EQ(s.dphi[1], Complex(0, 0));
  EXPECT_DOUBLE_EQ(neg_log_density(frame, ScoreModel::kGaussian), 6.0);
}

TEST(ScoreTest, ZeroFrameStaysFinite) {
  const std::vector<Complex> frame(5, Complex(0, 0));
  const ScoreFrame s = score(frame);
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(s.phi[f], Complex(0, 0));
    EXPECT_TRUE(std::isfinite(s.dphi_dconj[f].real()));
  }
}

// Central-difference Wirtinger derivatives of the score and of the
// negative log density.
TEST(ScoreTest, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  const double d = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Complex> frame(6);
    for (auto& v : frame) v = RandomComplex(rng);
    const ScoreFrame s = score(frame);
    for (std::size_t f = 0; f < frame.size(); ++f) {
      auto phi_at = [&](Complex delta) {
        std::vector<Complex> p = frame;
        p[f] += delta;
        return score(p).phi[f];
      };
      auto nll_at = [&](Complex delta) {
        std::vector<Complex> p = frame;
        p[f] += delta;
        return neg_log_density(p);
      };
      const Complex dx = (phi_at(d) - phi_at(-d)) / (2 * d);
      const Complex dy =
          (phi_at(Complex(0, d)) - phi_at(Complex(0, -d))) / (2 * d);
      const Complex dconj = 0.5 * (dx + Complex(0, 1) * dy);
      const Complex dplain = 0.5 * (dx - Complex(0, 1) * dy);
      EXPECT_LE(std::abs(dconj - s.dphi_dconj[f]), 1e-6 * std::abs(s.dphi_dconj[f]) + 1e-9);
      EXPECT_LE(std::abs(dplain - s.dphi[f]), 1e-6 * std::abs(s.dphi[f]) + 1e-9);
      // phi = d(-log p)/ds
      const double gx = (nll_at(d) - nll_at(-d)) / (2 * d);
      const double gy = (nll_at(Complex(0, d)) - nll_at(Complex(0, -d))) / (2 * d);
      const Complex grad = 0.5 * Complex(gx, -gy);
      EXPECT_LE(std::abs(grad - s.phi[f]), 1e-6 * std::abs(s.phi[f]));
    }
  }
}

TEST(ScoreStatsTest, SingleBinClosedForm) {
  Spectrogram s(1, 3, 1);
  s(0, 0, 0) = Complex(1, 0);
  s(0, 1, 0) = Complex(0, 2);
  s(0, 2, 0) = Complex(-3, 0);
  const ScoreStats st = score_stats(s);
  // nu = E|s|, rho = E[1/(2|s|)]
  EXPECT_NEAR(st.nu[0].real(), 2.0, 1e-15);
  EXPECT_NEAR(st.nu[0].imag(), 0.0, 1e-15);
  EXPECT_NEAR(st.rho[0].real(), (0.5 + 0.25 + 1.0 / 6.0) / 3.0, 1e-15);
  // xi = E[-s^{*2} / (2|s|^3)]
  const Complex xi = (Complex(-0.5, 0) + Complex(0.25, 0) +
                      Complex(-9.0 / 54.0, 0)) / 3.0;
  EXPECT_NEAR(std::abs(st.xi[0] - xi), 0.0, 1e-15);
}

TEST(ScoreStatsTest, Homogeneity) {
  std::mt19937_64 rng(6);
  const Spectrogram s = RandomSpectrogram(rng, 5, 40, 1);
  const double c = 3.7;
  const ScoreStats a = score_stats(s);
  const ScoreStats b = score_stats(c * s);
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_NEAR(std::abs(b.nu[f] - c * a.nu[f]), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(b.rho[f] - a.rho[f] / c), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(b.xi[f] - a.xi[f] / c), 0.0, 1e-12);
  }
  const ScoreStats g = score_stats(s, ScoreModel::kGaussian);
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_NEAR(g.nu[f].real(), s.bin(f).squaredNorm() / 40.0, 1e-12);
    EXPECT_EQ(g.rho[f], Complex(1, 0));
  }
  EXPECT_THROW(score_stats(Spectrogram(2, 1, 1)), ConfigError);
}

TEST(CostTest, InitialStateExample) {
  std::mt19937_64 rng(7);
  const std::size_t bins = 3, frames = 20;
  const Spectrogram e = RandomSpectrogram(rng, bins, frames, 2);
  DemixState state = DemixState::Initial(bins, 2);
  refresh_statistics(state, e, 0.0);
  const DemixOutput out = apply_demixer(e, Spectrogram(bins, frames, 1), state);
  // w = a = e1: s = e_1, R = diag(0, 1/E|e_2|^2), so E[e^H R e] = 1 per bin.
  double expected = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double p = 0.0;
    for (std::size_t f = 0; f < bins; ++f) p += std::norm(e(f, t, 0));
    expected += 2.0 * std::sqrt(p) / frames;
  }
  expected += bins;
  EXPECT_NEAR(cost(state, out.e, out.s_hat), expected, 1e-12);
}

TEST(CostTest, LogTermAndDegenerateGamma) {
  std::mt19937_64 rng(8);
  const Spectrogram e = RandomSpectrogram(rng, 1, 10, 4);
  DemixState state = DemixState::Initial(1, 4);
  state.bins[0].r = CMatrix::Zero(4, 4);
  state.bins[0].a = CVector::Unit(4, 0) * 2.0;
  const DemixOutput out = apply_demixer(e, Spectrogram(1, 10, 1), state);
  double src = 0.0;
  for (std::size_t t = 0; t < 10; ++t) src += 2.0 * std::abs(e(0, t, 0)) / 10;
  EXPECT_NEAR(cost(state, out.e, out.s_hat), src - 2.0 * std::log(4.0), 1e-12);
  state.bins[0].a(0) = 0.0;
  EXPECT_THROW(cost(state, out.e, out.s_hat), NumericalError);
}

struct GradientFixture {
  Spectrogram x, u;
  DemixState state;
};

GradientFixture RandomProblem(std::mt19937_64& rng) {
  GradientFixture p;
  const std::size_t m = 3, bins = 4, frames = 16;
  p.x = RandomSpectrogram(rng, bins, frames, m);
  p.u = RandomSpectrogram(rng, bins, frames, 1);
  p.state = DemixState::Initial(bins, m);
  for (auto& bin : p.state.bins) {
    bin.h = 0.3 * RandomVector(rng, m);
    bin.w = RandomVector(rng, m);
  }
  const Signals sig = compute_signals(p.x, p.u, p.state, ScoreModel::kSpherical);
  refresh_statistics(p.state, sig.e);
  return p;
}

double CostAt(const GradientFixture& p, const DemixState& state) {
  const Signals sig = compute_signals(p.x, p.u, state, ScoreModel::kSpherical);
  return cost(state, sig.e, sig.s_hat);
}

// dJ/dz^* = (dJ/dRe z + i dJ/dIm z) / 2 by central differences.
template <typename Perturb>
Complex WirtingerDifference(const GradientFixture& p, Perturb perturb) {
  const double d = 1e-6;
  auto at = [&](Complex delta) {
    DemixState s = p.state;
    perturb(s, delta);
    return CostAt(p, s);
  };
  const double gx = (at(d) - at(-d)) / (2 * d);
  const double gy = (at(Complex(0, d)) - at(Complex(0, -d))) / (2 * d);
  return 0.5 * Complex(gx, gy);
}

TEST(GradientTest, AecGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const GradientFixture p = RandomProblem(rng);
    const Signals sig = compute_signals(p.x, p.u, p.state, ScoreModel::kSpherical);
    const auto g = grad_h(sig.e, p.u, sig.s_hat, p.state, sig.stats, false);
    for (std::size_t f = 0; f < 4; ++f) {
      CVector fd(3);
      for (Eigen::Index i = 0; i < 3; ++i)
        fd(i) = WirtingerDifference(
            p, [&](DemixState& s, Complex d) { s.bins[f].h(i) += d; });
      EXPECT_LE(test::RelativeError(g[f], fd), 1e-5) << "bin " << f;
    }
  }
}

TEST(GradientTest, BeamformerScoreTermMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const GradientFixture p = RandomProblem(rng);
    const Signals sig = compute_signals(p.x, p.u, p.state, ScoreModel::kSpherical);
    const auto g = grad_w(sig.e, sig.s_hat, p.state, sig.stats, false);
    for (std::size_t f = 0; f < 4; ++f) {
      const CVector e_phi = g[f] + p.state.bins[f].a;
      CVector fd(3);
      for (Eigen::Index i = 0; i < 3; ++i)
        fd(i) = WirtingerDifference(
            p, [&](DemixState& s, Complex d) { s.bins[f].w(i) += d; });
      EXPECT_LE(test::RelativeError(e_phi, fd), 1e-5) << "bin " << f;
    }
  }
}

TEST(TransmissionTest, PerfectDemixingHasNoOffBlockEnergy) {
  std::mt19937_64 rng(11);
  const Eigen::Index m = 4;
  MixingTruth truth;
  DemixState state = DemixState::Initial(2, m);
  for (std::size_t f = 0; f < 2; ++f) {
    truth.a_soi.push_back(RandomVector(rng, m));
    truth.echo.push_back(RandomVector(rng, m));
    truth.a_bg.push_back(RandomMatrix(rng, m, m - 1));
    CMatrix a(m, m);
    a << truth.a_soi[f], truth.a_bg[f];
    // First row of A^{-1} extracts the SOI and nulls the background.
    const CVector w = a.inverse().row(0).adjoint();
    state.bins[f].w = w;
    state.bins[f].a = truth.a_soi[f];
    state.bins[f].h = truth.echo[f];
  }
  const auto v = transmission_matrix(state, truth);
  ASSERT_EQ(v[0].rows(), m + 1);
  EXPECT_NEAR(std::abs(v[0](0, 0)), 1.0, 1e-10);
  EXPECT_EQ(v[0](m, m), Complex(1, 0));
  EXPECT_LE(off_block_energy(v), 1e-20);

  state.bins[0].h.setZero();
  EXPECT_GT(off_block_energy(transmission_matrix(state, truth)), 1e-3);
}

TEST(ApplyDemixerTest, MatchesDefinition) {
  std::mt19937_64 rng(12);
  const Spectrogram x = RandomSpectrogram(rng, 2, 5, 3);
  const Spectrogram u = RandomSpectrogram(rng, 2, 5, 1);
  DemixState state = DemixState::Initial(2, 3);
  for (auto& bin : state.bins) {
    bin.h = RandomVector(rng, 3);
    bin.w = RandomVector(rng, 3);
    bin.a = RandomVector(rng, 3);
  }
  const DemixOutput out = apply_demixer(x, u, state);
  for (std::size_t f = 0; f < 2; ++f) {
    const CMatrix b = blocking_matrix(state.bins[f].a);
    for (std::size_t t = 0; t < 5; ++t) {
      const CVector xt = x.bin(f).row(t).transpose();
      const CVector e = xt - state.bins[f].h * u(f, t, 0);
      EXPECT_LE((out.e.bin(f).row(t).transpose() - e).norm(), 1e-14);
      EXPECT_LE(std::abs(out.s_hat(f, t, 0) - state.bins[f].w.dot(e)), 1e-14);
      EXPECT_LE((out.z_hat.bin(f).row(t).transpose() - b * e).norm(), 1e-13);
    }
  }
}

}  // namespace
}  // namespace aecbse
