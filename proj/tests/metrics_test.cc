#include "aecbse/metrics.h"

#include <cmath>
#include <limits>
#include <sstream>

#include "gtest/gtest.h"

#include "aecbse/optimizer.h"
#include "aecbse/scenegen.h"

namespace aecbse {
namespace {

std::vector<double> Noise(std::uint64_t seed, std::size_t n, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

std::vector<double> Scaled(std::vector<double> x, double a) {
  for (double& v : x) v *= a;
  return x;
}

TEST(CappedDbTest, Examples) {
  EXPECT_DOUBLE_EQ(capped_db(10.0, 1.0), 10.0);
  EXPECT_DOUBLE_EQ(capped_db(1.0, 0.0), kRatioCapDb);
  EXPECT_DOUBLE_EQ(capped_db(0.0, 1.0), -kRatioCapDb);
  EXPECT_DOUBLE_EQ(capped_db(1e30, 1e-30), kRatioCapDb);
  EXPECT_DOUBLE_EQ(capped_db(0.0, 0.0), 0.0);
}

TEST(ErleTest, Examples) {
  const auto echo = Noise(1, 1000, 1.0);
  EXPECT_DOUBLE_EQ(erle(echo, echo), 0.0);
  EXPECT_NEAR(erle(echo, Scaled(echo, std::pow(10.0, -0.5))), 10.0, 1e-12);
  EXPECT_DOUBLE_EQ(erle(echo, std::vector<double>(1000, 0.0)), kRatioCapDb);
}

TEST(RatiosTest, Examples) {
  const auto s = Noise(2, 4000, 1.0);
  const std::vector<double> zero(4000, 0.0);
  Ratios r = ratios(s, zero, s, zero);
  EXPECT_NEAR(r.sir_db, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.ser_db, kRatioCapDb);
  // Halving the interference power gains 3.01 dB of SIR.
  const Ratios halved = ratios(s, zero, Scaled(s, std::sqrt(0.5)), zero);
  EXPECT_NEAR(halved.sir_db - r.sir_db, 3.0103, 1e-4);
  EXPECT_NEAR(halved.sier_db, halved.sir_db, 1e-12);
}

TEST(RatiosTest, ScaleInvariance) {
  const auto s = Noise(3, 3000, 1.0), e = Noise(4, 3000, 0.5),
             i = Noise(5, 3000, 0.7), n = Noise(6, 3000, 0.1);
  const Ratios a = ratios(s, e, i, n, 100);
  const Ratios b = ratios(Scaled(s, -3.3), Scaled(e, -3.3), Scaled(i, -3.3),
                          Scaled(n, -3.3), 100);
  EXPECT_NEAR(a.sir_db, b.sir_db, 1e-10);
  EXPECT_NEAR(a.ser_db, b.ser_db, 1e-10);
  EXPECT_NEAR(a.sier_db, b.sier_db, 1e-10);
}

TEST(InteriorPowerTest, ExcludesEdges) {
  std::vector<double> x(100, 1.0);
  x[0] = 100.0;
  x[99] = 100.0;
  EXPECT_DOUBLE_EQ(interior_power(x, 10), 80.0);
  EXPECT_DOUBLE_EQ(interior_power(std::vector<double>(30, 1.0), 10), 30.0);
}

Scene TestScene(std::uint64_t seed, double enr = 30.0) {
  ScenarioConfig cfg = sample_scenario(seed, ScenarioRanges{});
  cfg.enr_db = enr;
  return make_narrowband_scene(cfg, FrameSpec::SqrtHann(256, 128), 150);
}

TEST(ComponentPassTest, ComponentsSumToOutput) {
  const Scene scene = TestScene(1);
  RunConfig cfg;
  cfg.iterations = 5;
  const RunResult r = run_joint(scene.x, scene.u, cfg);
  const ComponentPass pass =
      component_pass(r.state, r.backprojection, scene.images, scene.u, 0);
  const Spectrogram bse = pass.bse.sum();
  double err = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < bse.data().size(); ++i) {
    err += std::norm(bse.data()[i] - r.s_hat.data()[i]);
    norm += std::norm(r.s_hat.data()[i]);
  }
  EXPECT_LE(std::sqrt(err / norm), 1e-8);
  const Spectrogram aec = pass.aec.sum();
  for (std::size_t f = 0; f < aec.bins(); ++f)
    EXPECT_LE((aec.bin(f).col(0) - r.e.bin(f).col(0)).norm(),
              1e-8 * r.e.bin(f).col(0).norm());
}

TEST(EvaluateTest, UnprocessedHasZeroErleAndConsistentSier) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const Scene scene = TestScene(seed, 60.0);
    const MetricsReport m = evaluate_unprocessed(scene, 0);
    EXPECT_EQ(m.algorithm, "none");
    EXPECT_EQ(m.erle_aec_db, 0.0);
    EXPECT_EQ(m.erle_bf_db, 0.0);
    const double combined = -10.0 * std::log10(std::pow(10.0, -m.sir_db / 10) +
                                               std::pow(10.0, -m.ser_db / 10));
    EXPECT_NEAR(m.sier_db, combined, 0.5);
    // Pass-through through evaluate() gives the same ratios.
    const MetricsReport p = evaluate(
        scene, DemixState::Initial(scene.x.bins(), scene.x.channels()),
        std::vector<Complex>(scene.x.bins(), 1.0), 0);
    EXPECT_NEAR(p.sir_db, m.sir_db, 1e-9);
    EXPECT_NEAR(p.sier_db, m.sier_db, 1e-9);
    EXPECT_NEAR(p.erle_aec_db, 0.0, 1e-9);
  }
}

TEST(EvaluateTest, OutputScaleDoesNotChangeRatios) {
  const Scene scene = TestScene(6);
  RunConfig cfg;
  cfg.iterations = 5;
  const RunResult r = run_joint(scene.x, scene.u, cfg);
  std::vector<Complex> scaled = r.backprojection;
  for (Complex& c : scaled) c *= -2.5;
  const MetricsReport a = evaluate(scene, r.state, r.backprojection, 0);
  const MetricsReport b = evaluate(scene, r.state, scaled, 0);
  EXPECT_NEAR(a.sir_db, b.sir_db, 1e-9);
  EXPECT_NEAR(a.ser_db, b.ser_db, 1e-9);
  EXPECT_NEAR(a.sier_db, b.sier_db, 1e-9);
  EXPECT_NEAR(a.erle_aec_db, b.erle_aec_db, 1e-9);
}

TEST(CsvTest, RowsAndMeans) {
  MetricsReport a{"joint", 1, 50, 10.0, 20.0, 5.0, 12.0, 15.0};
  MetricsReport b{"joint", 2, 50, 12.0, 22.0, 7.0, 14.0, 17.0};
  MetricsReport c{"none", 1, 50, 1.0, 2.0, 0.5, 0.0, 0.0};
  std::ostringstream out;
  write_metrics_csv(out, {a, b, c});
  EXPECT_EQ(out.str(),
            "algorithm,seed,SIR,SER,SIER,ERLE_aec,ERLE_bf\n"
            "joint,1,10.0000,20.0000,5.0000,12.0000,15.0000\n"
            "joint,2,12.0000,22.0000,7.0000,14.0000,17.0000\n"
            "none,1,1.0000,2.0000,0.5000,0.0000,0.0000\n"
            "joint,mean,11.0000,21.0000,6.0000,13.0000,16.0000\n"
            "none,mean,1.0000,2.0000,0.5000,0.0000,0.0000\n");
}

}  // namespace
}  // namespace aecbse
