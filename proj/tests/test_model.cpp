#include <gtest/gtest.h>

#include <random>

#include "accsim/model.hpp"
#include "accsim/presets.hpp"

using namespace accsim;

namespace {

AccParams RandomParams(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {0.01 + u(rng), u(rng), 0.1 + 3.0 * u(rng), u(rng), 5.0 + 10.0 * u(rng)};
}

}  // namespace

TEST(SpacingPolicy, Examples) {
  const AccParams p{0.2, 0.2, 1.5, 0.0, 10.0};
  EXPECT_DOUBLE_EQ(SpacingPolicySpeed(40.0, p), 20.0);
  EXPECT_DOUBLE_EQ(SpacingPolicySpeed(10.0, p), 0.0);
  const AccParams a = FindPreset("A/min")->params;
  EXPECT_DOUBLE_EQ(SpacingPolicySpeed(8.03, a), 0.0);
}

TEST(SpacingPolicy, NotClamped) {
  const AccParams p{0.2, 0.2, 1.5, 0.0, 10.0};
  EXPECT_LT(SpacingPolicySpeed(4.0, p), 0.0);
}

TEST(Acceleration, Examples) {
  const AccParams p{0.2, 0.2, 1.5, 0.0, 10.0};
  EXPECT_DOUBLE_EQ(Acceleration(10.0 + 1.5 * 18.0, 18.0, 18.0, p), 0.0);
  EXPECT_NEAR(Acceleration(40.0, 18.0, 18.0, p), 0.6, 1e-12);

  // 0.052 * (20 - 8.03 - 0.819 * 15) + 0.338 * (14 - 15) = -0.01638 - 0.338
  const AccParams a = FindPreset("A/min")->params;
  EXPECT_NEAR(Acceleration(20.0, 15.0, 14.0, a), -0.35438, 1e-9);
}

TEST(Acceleration, AffineInEachArgument) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 200; ++i) {
    const AccParams p = RandomParams(rng);
    const double s = u(rng), v = u(rng), vl = u(rng), h = u(rng);
    const double a0 = Acceleration(s, v, vl, p);
    EXPECT_NEAR(Acceleration(s + h, v, vl, p) - a0, p.k1 * h, 1e-10);
    EXPECT_NEAR(Acceleration(s, v + h, vl, p) - a0, -(p.k1 * p.th + p.k2) * h, 1e-10);
    EXPECT_NEAR(Acceleration(s, v, vl + h, p) - a0, p.k2 * h, 1e-10);
  }
}

TEST(Equilibrium, Examples) {
  const AccParams p{0.2, 0.2, 1.5, 0.0, 10.0};
  const State e = Equilibrium(400.0, 10, p);
  EXPECT_DOUBLE_EQ(e.s, 40.0);
  EXPECT_DOUBLE_EQ(e.v, 20.0);

  const State jam = Equilibrium(100.0, 10, p);
  EXPECT_DOUBLE_EQ(jam.s, 10.0);
  EXPECT_DOUBLE_EQ(jam.v, 0.0);

  EXPECT_THROW(Equilibrium(50.0, 10, p), InfeasibleEquilibrium);
}

TEST(Equilibrium, AnnihilatesAcceleration) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> len(0.0, 2000.0);
  for (int i = 0; i < 1000; ++i) {
    const AccParams p = RandomParams(rng);
    const int n = 1 + static_cast<int>(rng() % 40);
    const double ring = n * p.eta + len(rng);
    const State e = Equilibrium(ring, n, p);
    EXPECT_NEAR(Acceleration(e.s, e.v, e.v, p), 0.0, 1e-12 * (1.0 + e.s));
  }
}

TEST(SpacingPolicy, RoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> speed(0.0, 40.0);
  for (int i = 0; i < 1000; ++i) {
    const AccParams p = RandomParams(rng);
    const double v = speed(rng);
    EXPECT_NEAR(SpacingPolicySpeed(EquilibriumGap(v, p), p), v, 1e-12 * (1.0 + v));
  }
}

TEST(AccParams, Validation) {
  EXPECT_TRUE((AccParams{0.2, 0.0, 1.5, 0.0, 0.0}).IsValid());
  EXPECT_FALSE((AccParams{0.0, 0.2, 1.5, 0.1, 10.0}).IsValid());
  EXPECT_FALSE((AccParams{0.2, -0.1, 1.5, 0.1, 10.0}).IsValid());
  EXPECT_FALSE((AccParams{0.2, 0.2, 0.0, 0.1, 10.0}).IsValid());
  EXPECT_FALSE((AccParams{0.2, 0.2, 1.5, -0.1, 10.0}).IsValid());
  EXPECT_FALSE((AccParams{0.2, 0.2, 1.5, 0.1, -1.0}).IsValid());
  EXPECT_FALSE((AccParams{0.2, 0.2, 1.5, std::nan(""), 10.0}).IsValid());
  EXPECT_THROW((AccParams{0.0, 0.2, 1.5, 0.1, 10.0}).Validate(), InvalidParams);
}

TEST(ParamBounds, DefaultsAndChecks) {
  ParamBounds b;
  EXPECT_NO_THROW(b.Validate());
  EXPECT_DOUBLE_EQ(b.eta.lower, 5.0);
  EXPECT_DOUBLE_EQ(b.eta.upper, 15.0);
  EXPECT_DOUBLE_EQ(b.th.upper, 3.0);
  EXPECT_TRUE(b.contains(FindPreset("A/min")->params));
  EXPECT_FALSE(b.contains(AccParams{0.2, 0.2, 1.5, 0.1, 20.0}));

  b.k2 = {0.5, 0.4};
  EXPECT_THROW(b.Validate(), InvalidParams);
  b.k2 = {-0.1, 0.4};
  EXPECT_THROW(b.Validate(), InvalidParams);
}

TEST(Presets, TableRows) {
  ASSERT_EQ(kPresets.size(), 14u);
  const auto a = FindPreset("A/min");
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(a->params, (AccParams{0.052, 0.338, 0.819, 0.948, 8.030}));
  EXPECT_DOUBLE_EQ(a->min_acc_speed, 11.176);
  EXPECT_DOUBLE_EQ(FindPreset("G/max")->min_acc_speed, 0.0);
  EXPECT_FALSE(FindPreset("Z/min").has_value());
  for (const Preset& p : kPresets) {
    EXPECT_TRUE(p.params.IsValid()) << p.label;
    EXPECT_TRUE(ParamBounds{}.contains(p.params)) << p.label;
  }
}
