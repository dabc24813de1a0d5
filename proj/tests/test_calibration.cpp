#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "hetdqcd/calibration.hpp"

using namespace hetdqcd;

namespace {

Network fig2_network() {
  std::vector<Network::GroupSpec> specs;
  for (int l = 1; l <= 3; ++l) specs.push_back({3, Gaussian(0, 1), Gaussian(2.0 * l / 3.0, l)});
  return Network::from_specs(specs);
}

Network single() { return Network::from_specs({{1, Gaussian(0, 1), Gaussian(1, 1)}}); }

Estimate exact(double mean) {
  Estimate e;
  e.mean = mean;
  e.std_dev = 0.01 * mean;
  e.ci_halfwidth = 1.96 * e.std_dev / 100.0;
  e.trials = 10000;
  return e;
}

}  // namespace

TEST(FirstOrderGuess, FrozenValues) {
  const auto net = fig2_network();
  const auto c = net.klds();
  const double g = std::exp(10.0);
  // M = 7 lands in the most informative group.
  EXPECT_NEAR(first_order_guess(net, FusionRuleSpec::mth_alarm(7), c, g), 4.080477035873065, 1e-12);
  EXPECT_NEAR(first_order_guess(net, FusionRuleSpec::mth_alarm(9), c, g), 4.080477035873065, 1e-12);
  EXPECT_NEAR(first_order_guess(net, FusionRuleSpec::mth_alarm(1), c, g), 10.0 / c[0], 1e-12);
  EXPECT_NEAR(first_order_guess(net, FusionRuleSpec::m_voting(9), c, g), 0.8972074671904277, 1e-12);
  EXPECT_NEAR(first_order_guess(net, FusionRuleSpec::centralized_cusum(), c, g), 10.0, 1e-12);
  EXPECT_NEAR(first_order_guess(net, FusionRuleSpec::mth_alarm_within(1, group_selection(net, 3)), c, g),
              10.0 / c[2], 1e-12);
}

TEST(FirstOrderGuess, IndicatorWeightsMatchWithinVoting) {
  const auto net = fig2_network();
  const auto c = net.klds();
  const auto d = group_selection(net, 2);
  EXPECT_NEAR(first_order_guess(net, FusionRuleSpec::weighted_voting(2, indicator_weights(d)), c, 500.0),
              first_order_guess(net, FusionRuleSpec::m_voting_within(2, d), c, 500.0), 1e-12);
}

TEST(CalibrateMonotone, SolvesSmoothCurve) {
  const auto r = calibrate_monotone([](double h) { return exact(std::exp(h) + 1.0); }, 3.0, 1000.0, {});
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.h_star, std::log(999.0), 0.05);
  EXPECT_LE(std::abs(r.achieved_log_arl - std::log(1000.0)), 0.05);
  EXPECT_FALSE(r.history.empty());
}

TEST(CalibrateMonotone, RootFarBelowGuess) {
  const auto r = calibrate_monotone([](double h) { return exact(std::exp(h) + 1.0); }, 40.0, 50.0, {});
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.h_star, std::log(49.0), 0.05);
}

TEST(CalibrateMonotone, FloorWhenTargetUnreachable) {
  const auto r = calibrate_monotone([](double h) { return exact(20.0 + h); }, 1.0, 5.0, {});
  EXPECT_TRUE(r.at_floor);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.h_star, 0.0);
  EXPECT_NEAR(r.arl.mean, 20.0, 1e-12);
}

TEST(CalibrateMonotone, RejectsBadArguments) {
  auto f = [](double h) { return exact(std::exp(h)); };
  EXPECT_THROW(calibrate_monotone(f, 1.0, 1.0, {}), std::invalid_argument);
  EXPECT_THROW(calibrate_monotone(f, 0.0, 10.0, {}), std::invalid_argument);
  CalibrationOptions o;
  o.tolerance = 0.0;
  EXPECT_THROW(calibrate_monotone(f, 1.0, 10.0, o), std::invalid_argument);
}

TEST(Calibrate, SingleSensorHitsTargetOnFreshStreams) {
  const auto net = single();
  CalibrationOptions o;
  o.trials = 20000;
  o.seed = 31;
  const auto r = calibrate(net, FusionRuleSpec::mth_alarm(1), {1.0}, 500.0, o);
  ASSERT_TRUE(r.converged) << r.diagnostics;
  const auto check =
      estimate_arl_direct(net, FusionRuleSpec::mth_alarm(1), ThresholdVector::uniform(1, r.h_star), {20000, 10'000'000, 32, 0});
  EXPECT_LE(std::abs(std::log(check.mean) - std::log(500.0)), 0.05 + 3.0 * check.log_std_error());
}

TEST(Calibrate, ThresholdIncreasesWithTarget) {
  const auto net = fig2_network();
  CalibrationOptions o;
  o.trials = 2000;
  double prev = -1.0;
  for (double g : {50.0, 200.0, 800.0}) {
    const auto r = calibrate(net, FusionRuleSpec::m_voting(3), net.klds(), g, o);
    ASSERT_TRUE(r.converged) << r.diagnostics;
    EXPECT_GT(r.h_star, prev);
    prev = r.h_star;
  }
}

TEST(Calibrate, FirstOrderGuessIsTheRightScale) {
  const auto net = fig2_network();
  CalibrationOptions o;
  o.trials = 2000;
  const auto rule = FusionRuleSpec::mth_alarm(7);
  const auto r = calibrate(net, rule, net.klds(), 1e4, o);
  ASSERT_TRUE(r.converged) << r.diagnostics;
  const double ratio = r.h_star / first_order_guess(net, rule, net.klds(), 1e4);
  EXPECT_GT(ratio, 0.7);
  EXPECT_LT(ratio, 1.3);
}

TEST(Calibrate, ComposedMethodForMthAlarm) {
  const auto net = Network::from_specs({{4, Gaussian(0, 1), Gaussian(1, 1)}});
  CalibrationOptions o;
  o.trials = 8000;
  o.arl_method = ArlMethod::Composed;
  const auto r = calibrate(net, FusionRuleSpec::mth_alarm(2), net.klds(), 300.0, o);
  EXPECT_TRUE(r.converged) << r.diagnostics;
  const auto check = estimate_arl_direct(net, FusionRuleSpec::mth_alarm(2), ThresholdVector{r.h_star, net.klds()},
                                         {8000, 10'000'000, 33, 0});
  EXPECT_LE(std::abs(std::log(check.mean) - std::log(300.0)), 0.05 + 3.0 * check.log_std_error());
  EXPECT_THROW(calibrate(net, FusionRuleSpec::m_voting(2), net.klds(), 300.0, o), std::invalid_argument);
}

TEST(Calibrate, UnreachableTargetStaysAtFloor) {
  const auto net = Network::from_specs({{3, Gaussian(0, 1), Gaussian(1, 1)}});
  CalibrationOptions o;
  o.trials = 1000;
  const auto r = calibrate(net, FusionRuleSpec::m_voting(3), net.klds(), 2.0, o);
  EXPECT_TRUE(r.at_floor);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.h_star, 0.0);
}

TEST(Calibrate, HeavyCensoringIsAnError) {
  const auto net = single();
  CalibrationOptions o;
  o.trials = 500;
  o.run_cap = 5;
  EXPECT_THROW(calibrate(net, FusionRuleSpec::mth_alarm(1), {1.0}, 1e4, o), CalibrationError);
}
