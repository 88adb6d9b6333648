#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "accsim/calib.hpp"
#include "accsim/presets.hpp"
#include "oracles.hpp"

using namespace accsim;

namespace {

const AccParams kAmin = FindPreset("A/min")->params;

const Trajectory& AminRecord() {
  static const Trajectory t = oracle::SyntheticRecord(kAmin, oracle::OscillatoryProfile());
  return t;
}

/// Parameters drawn from the middle 80% of every bound.
AccParams InteriorDraw(std::mt19937_64& rng, const ParamBounds& b) {
  std::uniform_real_distribution<double> u(0.1, 0.9);
  ParamVector x;
  for (std::size_t i = 0; i < kNumParams; ++i) x[i] = b[i].lower + u(rng) * b[i].width();
  return FromArray(x);
}

double MaxRelativeError(const AccParams& got, const AccParams& want) {
  const ParamVector a = ToArray(got);
  const ParamVector b = ToArray(want);
  double worst = 0.0;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::abs(b[i]));
  }
  return worst;
}

}  // namespace

TEST(ErrorMetrics, SpeedExamples) {
  const std::vector<double> a = {20.0, 21.0, 22.0, 21.5};
  EXPECT_DOUBLE_EQ(MseSpeed(a, a, 0.1), 0.0);
  std::vector<double> b = a;
  for (double& x : b) x += 0.5;
  EXPECT_DOUBLE_EQ(MseSpeed(a, b, 0.1), 0.25);

  const int n = 10000;
  const double dt = 2.0 * std::numbers::pi / n;
  std::vector<double> s(n + 1), zero(n + 1, 0.0);
  for (int k = 0; k <= n; ++k) s[static_cast<std::size_t>(k)] = std::sin(k * dt);
  EXPECT_NEAR(MseSpeed(s, zero, dt), 0.5, 1e-9);
}

TEST(ErrorMetrics, SpacingExamples) {
  const std::vector<double> a = {30.0, 31.0, 29.0, 30.5, 30.0};
  EXPECT_DOUBLE_EQ(RmseSpacing(a, a, 0.1), 0.0);
  std::vector<double> b = a, c = a;
  for (std::size_t k = 0; k < a.size(); ++k) {
    b[k] += 2.0;
    c[k] += k % 2 == 0 ? 1.0 : -1.0;
  }
  EXPECT_DOUBLE_EQ(RmseSpacing(a, b, 0.1), 2.0);
  EXPECT_DOUBLE_EQ(RmseSpacing(a, c, 0.1), 1.0);
}

TEST(ErrorMetrics, LengthMismatch) {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  const std::vector<double> b = {1.0, 2.0};
  EXPECT_THROW(MseSpeed(a, b, 0.1), LengthMismatch);
  EXPECT_THROW(RmseSpacing(b, a, 0.1), LengthMismatch);
  EXPECT_THROW(MseSpeed(std::vector<double>{1.0}, std::vector<double>{1.0}, 0.1), LengthMismatch);
}

TEST(Objective, TrueParametersScoreZero) {
  EXPECT_LT(Objective(kAmin, AminRecord()), 1e-8);
  std::mt19937_64 rng(31);
  const SampledSeries lead = oracle::OscillatoryProfile();
  for (int i = 0; i < 10; ++i) {
    const AccParams p = InteriorDraw(rng, ParamBounds{});
    EXPECT_LT(Objective(p, oracle::SyntheticRecord(p, lead)), 1e-8);
  }
}

TEST(Objective, Totality) {
  AccParams edge = kAmin;
  edge.k1 = 1.0;
  const double f = Objective(edge, AminRecord());
  EXPECT_TRUE(std::isfinite(f));
  EXPECT_GT(f, 0.0);

  AccParams bad = kAmin;
  bad.k1 = 0.0;
  EXPECT_EQ(Objective(bad, AminRecord()), std::numeric_limits<double>::infinity());
  bad = kAmin;
  bad.th = std::nan("");
  EXPECT_EQ(Objective(bad, AminRecord()), std::numeric_limits<double>::infinity());

  // Delay longer than the record: nothing to simulate.
  const Trajectory tiny = AminRecord().Slice(0, 5);
  EXPECT_EQ(Objective(kAmin, tiny), std::numeric_limits<double>::infinity());
}

TEST(Objective, BlowUpIsRejected) {
  // A record whose measured gap explodes drives the replay to overflow.
  Trajectory t = AminRecord().Slice(0, 400);
  for (double& s : t.space_gap) s = 1e308;
  EXPECT_EQ(Objective(kAmin, t), std::numeric_limits<double>::infinity());
}

TEST(Calibrate, RecoversAmin) {
  const CalibrationResult r = Calibrate(AminRecord(), CalibrationConfig{});
  EXPECT_LT(r.train_mse_speed, 1e-6);
  EXPECT_LT(MaxRelativeError(r.params, kAmin), 0.02);
  EXPECT_TRUE(ParamBounds{}.contains(r.params));
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.degenerate);
  EXPECT_LE(r.evals_used, 4 * CalibrationConfig{}.max_evals);

  const auto errs = EvaluateTestErrors(r.params, {{"train", AminRecord()}});
  ASSERT_EQ(errs.size(), 1u);
  ASSERT_TRUE(errs[0].ok);
  EXPECT_LT(errs[0].speed_rmse, 1e-3);
  EXPECT_LT(errs[0].spacing_rmse, 1e-3);
}

TEST(Calibrate, RecoversRandomInteriorParameters) {
  std::mt19937_64 rng(8);
  const SampledSeries lead = oracle::OscillatoryProfile();
  for (int i = 0; i < 10; ++i) {
    const AccParams truth = InteriorDraw(rng, ParamBounds{});
    CalibrationConfig cfg;
    cfg.rng_seed = 100 + static_cast<std::uint64_t>(i);
    const CalibrationResult r = Calibrate(oracle::SyntheticRecord(truth, lead), cfg);
    EXPECT_LT(r.train_mse_speed, 1e-6) << "draw " << i;
  }
}

TEST(Calibrate, NoiseFloor) {
  const double sigma = 0.1;
  Trajectory noisy = AminRecord();
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : noisy.follower_speed) v += noise(rng);
  const CalibrationResult r = Calibrate(noisy, CalibrationConfig{});
  EXPECT_GE(r.train_mse_speed, 0.5 * sigma * sigma);
  EXPECT_LE(r.train_mse_speed, 2.0 * sigma * sigma);
}

TEST(Calibrate, ConstantDataIsFlagged) {
  const SampledSeries lead{0.0, 0.1, std::vector<double>(3000, 22.4)};
  const Trajectory flat = oracle::SyntheticRecord(kAmin, lead);
  const CalibrationResult r = Calibrate(flat, CalibrationConfig{});
  EXPECT_TRUE(!r.converged || r.degenerate);
  EXPECT_GT(r.param_scatter, 0.05);
}

TEST(Calibrate, DeterministicUnderSeed) {
  const Trajectory train = AminRecord().Slice(0, 2500);
  CalibrationConfig cfg;
  cfg.max_evals = 400;
  const CalibrationResult a = Calibrate(train, cfg);
  const CalibrationResult b = Calibrate(train, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.train_mse_speed, b.train_mse_speed);
  EXPECT_EQ(a.evals_used, b.evals_used);
  EXPECT_EQ(a.best_start, b.best_start);
  ASSERT_EQ(a.starts.size(), b.starts.size());
  for (std::size_t s = 0; s < a.starts.size(); ++s) {
    EXPECT_EQ(a.starts[s].incumbent, b.starts[s].incumbent);
  }
  cfg.rng_seed = 2;
  const CalibrationResult c = Calibrate(train, cfg);
  EXPECT_NE(a.starts[0].start, c.starts[0].start);
}

TEST(Calibrate, IncumbentNeverIncreasesAndStaysInBounds) {
  CalibrationConfig cfg;
  cfg.max_evals = 500;
  cfg.n_multistarts = 3;
  // A box that excludes the true k2 and tau: the optimum sits on the boundary.
  cfg.bounds.k2 = {0.1, 0.3};
  cfg.bounds.tau = {0.2, 0.6};
  const CalibrationResult r = Calibrate(AminRecord().Slice(0, 2500), cfg);
  EXPECT_TRUE(cfg.bounds.contains(r.params));
  ASSERT_EQ(r.starts.size(), 3u);
  for (const StartDiagnostics& s : r.starts) {
    EXPECT_TRUE(cfg.bounds.contains(s.params));
    EXPECT_EQ(static_cast<int>(s.incumbent.size()), s.evals);
    EXPECT_LE(s.evals, cfg.max_evals);
    for (std::size_t k = 1; k < s.incumbent.size(); ++k) {
      ASSERT_LE(s.incumbent[k], s.incumbent[k - 1]);
    }
  }
  int sum = 0;
  for (const StartDiagnostics& s : r.starts) sum += s.evals;
  EXPECT_EQ(sum, r.evals_used);
}

TEST(Calibrate, NoFeasibleCandidate) {
  CalibrationConfig cfg;
  cfg.max_evals = 100;
  cfg.n_multistarts = 2;
  cfg.bounds.tau = {0.8, 1.0};
  EXPECT_THROW(Calibrate(AminRecord().Slice(0, 6), cfg), NoFeasibleCandidate);
}

TEST(Calibrate, RejectsBadConfig) {
  CalibrationConfig cfg;
  cfg.n_multistarts = 0;
  EXPECT_THROW(Calibrate(AminRecord(), cfg), Error);
  cfg = {};
  cfg.max_evals = 99;
  EXPECT_THROW(Calibrate(AminRecord(), cfg), Error);
  cfg = {};
  cfg.bounds.th = {2.0, 1.0};
  EXPECT_THROW(Calibrate(AminRecord(), cfg), InvalidParams);
}

TEST(LatinHypercube, OnePointPerStratum) {
  const auto pts = detail::LatinHypercube(8, 3);
  ASSERT_EQ(pts.size(), 8u);
  for (std::size_t d = 0; d < kNumParams; ++d) {
    std::vector<int> seen(8, 0);
    for (const auto& p : pts) {
      ASSERT_GE(p[d], 0.0);
      ASSERT_LT(p[d], 1.0);
      ++seen[static_cast<std::size_t>(p[d] * 8)];
    }
    for (int c : seen) EXPECT_EQ(c, 1);
  }
}

TEST(EvaluateTestErrors, EmptyAndFailingScenarios) {
  EXPECT_TRUE(EvaluateTestErrors(kAmin, {}).empty());
  const auto errs = EvaluateTestErrors(kAmin, {{"short", AminRecord().Slice(0, 3)},
                                               {"full", AminRecord()}});
  ASSERT_EQ(errs.size(), 2u);
  EXPECT_FALSE(errs[0].ok);
  EXPECT_FALSE(errs[0].error.empty());
  EXPECT_TRUE(errs[1].ok);
  EXPECT_EQ(errs[1].name, "full");
}

TEST(TrainingSplit, LeadingShare) {
  const Trajectory& t = AminRecord();
  const Trajectory half = TrainingSplit(t, 0.5);
  EXPECT_EQ(half.size(), t.size() / 2);
  EXPECT_EQ(half.t0, t.t0);
  EXPECT_EQ(half.follower_speed.back(), t.follower_speed[half.size() - 1]);
  EXPECT_EQ(TrainingSplit(t, 1e-9).size(), 2u);
}
