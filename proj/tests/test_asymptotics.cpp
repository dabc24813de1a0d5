#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "hetdqcd/asymptotics.hpp"
#include "support/oracles.hpp"

using namespace hetdqcd;

namespace {

Network fig2_network() {
  std::vector<Network::GroupSpec> specs;
  for (int l = 1; l <= 3; ++l) specs.push_back({3, Gaussian(0, 1), Gaussian(2.0 * l / 3.0, l)});
  return Network::from_specs(specs);
}

Network fig3_network() {
  std::vector<Network::GroupSpec> specs;
  for (int l = 1; l <= 3; ++l) specs.push_back({3, Gaussian(0, 1), Gaussian(l / 3.0, 1)});
  return Network::from_specs(specs);
}

Network two_groups(int n1, int n2) {
  return Network::from_specs({{n1, Gaussian(0, 1), Gaussian(0.35, 1)}, {n2, Gaussian(0, 1), Gaussian(2, 4)}});
}

}  // namespace

TEST(LambdaMap, Fig2Blocks) {
  const auto lam = lambda_map(fig2_network());
  for (int m = 1; m <= 9; ++m) EXPECT_EQ(lam(m), (m - 1) / 3 + 1) << m;
  EXPECT_THROW(lam(0), std::out_of_range);
  EXPECT_THROW(lam(10), std::out_of_range);
}

TEST(LambdaMap, EightAndOne) {
  const auto lam = lambda_map(two_groups(8, 1));
  for (int m = 1; m <= 8; ++m) EXPECT_EQ(lam(m), 1);
  EXPECT_EQ(lam(9), 2);
  EXPECT_EQ(lam.group(9), 2);
}

TEST(LambdaMap, SingleGroup) {
  const auto lam = lambda_map(Network::from_specs({{5, Gaussian(0, 1), Gaussian(1, 1)}}));
  for (int m = 1; m <= 5; ++m) EXPECT_EQ(lam(m), 1);
}

TEST(LambdaMap, FollowsScalingNotGroupIndex) {
  const auto net = fig2_network();
  const std::vector<double> c{3.0, 1.0, 2.0};
  const auto lam = lambda_map(net, c);
  EXPECT_EQ(lam.group(1), 2);
  EXPECT_EQ(lam.group(4), 3);
  EXPECT_EQ(lam.group(9), 1);
  EXPECT_EQ(lam.scale(9), 3.0);
  EXPECT_THROW(lambda_map(net, std::vector<double>{1.0, 0.0, 2.0}), std::invalid_argument);
}

// Property over random group layouts: lambda is a non-decreasing partition
// of [1, N] with block sizes N^(l), respecting ascending c.
TEST(LambdaMap, PartitionProperty) {
  auto e = make_engine({41, StreamDomain::User, 0, 0});
  for (int rep = 0; rep < 200; ++rep) {
    const int groups = 1 + static_cast<int>(e.uniform() * 5);
    std::vector<Network::GroupSpec> specs;
    std::vector<double> c;
    for (int l = 0; l < groups; ++l) {
      specs.push_back({1 + static_cast<int>(e.uniform() * 6), Gaussian(0, 1), Gaussian(0.2 + e.uniform(), 1)});
      c.push_back(0.1 + e.uniform());
    }
    const auto net = Network::from_specs(specs);
    const auto lam = lambda_map(net, c);
    std::vector<int> size(static_cast<std::size_t>(groups) + 1, 0);
    int prev = 1;
    double prev_c = 0.0;
    ASSERT_EQ(lam(1), 1);
    ASSERT_EQ(lam(net.sensor_count()), groups);
    for (int m = 1; m <= net.sensor_count(); ++m) {
      ASSERT_GE(lam(m), prev);
      ASSERT_GE(lam.scale(m), prev_c);
      prev = lam(m);
      prev_c = lam.scale(m);
      ++size[static_cast<std::size_t>(lam(m))];
    }
    for (int l = 1; l <= groups; ++l) ASSERT_EQ(size[static_cast<std::size_t>(l)], lam.count_sorted(l));
  }
}

TEST(Xi, IidThreeMatchesQuadrature) {
  const std::vector<double> sd{1.0, 1.0, 1.0};
  const auto t = xi_table(std::span<const double>(sd), 1'000'000, 42);
  EXPECT_NEAR(oracle::normal_order_statistic(3, 3), 3.0 / (2.0 * std::sqrt(std::numbers::pi)), 1e-9);
  EXPECT_NEAR(oracle::normal_order_statistic(3, 3), 0.8462843753216344, 1e-9);
  EXPECT_NEAR(t[2].xi, 0.0, 3.0 * t[2].std_error);
  EXPECT_NEAR(t[3].xi, 0.8462843753216344, 3.0 * t[3].std_error);
  EXPECT_NEAR(t[1].xi, -0.8462843753216344, 3.0 * t[1].std_error);
  EXPECT_EQ(t[3].samples, 1'000'000);
}

TEST(Xi, MonotoneAndAntisymmetricOnFig2) {
  const auto net = fig2_network();
  const auto t = xi_table(net, 1'000'000, 43);
  const int n = net.sensor_count();
  ASSERT_EQ(t.size(), n);
  for (int m = 1; m < n; ++m) EXPECT_GT(t.step_mean[static_cast<std::size_t>(m - 1)], 0.0);
  for (int m = 1; m <= n; ++m) {
    EXPECT_NEAR(t.mirror_mean[static_cast<std::size_t>(m - 1)], 0.0, 3.0 * t.mirror_std_error[static_cast<std::size_t>(m - 1)]);
    if (2 * m < n + 1) EXPECT_LT(t[m].xi, 0.0);
    if (2 * m > n + 1) EXPECT_GT(t[m].xi, 0.0);
  }
}

TEST(Xi, StddevsAreSigmaOverKld) {
  const auto sd = xi_stddevs(fig3_network());
  ASSERT_EQ(sd.size(), 9u);
  EXPECT_NEAR(sd[0], 6.0, 1e-12);
  EXPECT_NEAR(sd[3], 3.0, 1e-12);
  EXPECT_NEAR(sd[8], 2.0, 1e-12);
}

TEST(Xi, DeterministicAcrossThreads) {
  const auto net = fig2_network();
  const auto a = xi_table(net, 20000, 44, 1);
  const auto b = xi_table(net, 20000, 44, 4);
  for (int m = 1; m <= 9; ++m) EXPECT_EQ(a[m].xi, b[m].xi);
  EXPECT_EQ(xi_m(net, 5, 20000, 44).xi, a[5].xi);
  EXPECT_THROW(xi_m(net, 10, 100, 1), std::out_of_range);
}

TEST(Predict, FirstOrderFrozen) {
  const double g = std::exp(10.0);
  EXPECT_NEAR(predict_edd_first_order(fig2_network(), RuleFamily::OneShot, 7, g), 4.080477035873065, 1e-12);
  EXPECT_NEAR(predict_edd_first_order(fig3_network(), RuleFamily::Voting, 9, g), 10.0 / (3.0 * (1.0 / 18 + 2.0 / 9 + 0.5)),
              1e-12);
  EXPECT_NEAR(predict_edd_first_order(fig3_network(), RuleFamily::Voting, 9, g), 4.285714285714286, 1e-12);
  EXPECT_EQ(predict_edd_first_order(fig2_network(), RuleFamily::Voting, 1, g),
            predict_edd_first_order(fig2_network(), RuleFamily::OneShot, 1, g));
  EXPECT_THROW(predict_edd_first_order(fig2_network(), RuleFamily::OneShot, 0, g), std::out_of_range);
  EXPECT_THROW(predict_edd_first_order(fig2_network(), RuleFamily::OneShot, 1, 1.0), std::invalid_argument);
}

TEST(Predict, SecondOrderProperties) {
  const auto net = fig2_network();
  const double g = std::exp(10.0);
  const auto xi = xi_table(net, 400000, 45);
  EXPECT_EQ(predict_edd_second_order(net, RuleFamily::OneShot, 7, g, 0.0),
            predict_edd_first_order(net, RuleFamily::OneShot, 7, g));
  // The middle order statistic (M = 5 of 9) has xi = 0 by symmetry.
  EXPECT_NEAR(xi[5].xi, 0.0, 3.0 * xi[5].std_error);
  for (int m = 6; m <= 9; ++m)
    EXPECT_GT(predict_edd_second_order(net, RuleFamily::OneShot, m, g, xi[m].xi),
              predict_edd_first_order(net, RuleFamily::OneShot, m, g));
  EXPECT_LT(predict_edd_second_order(net, RuleFamily::OneShot, 7, g, xi[7].xi),
            predict_edd_second_order(net, RuleFamily::OneShot, 9, g, xi[9].xi));
  // ratio - 1 = xi / sqrt(first order), shrinking like 1/sqrt(log gamma).
  std::vector<double> excess;
  for (double lg : {10.0, 20.0, 40.0, 700.0}) {
    const double ratio = predict_edd_second_order(net, RuleFamily::OneShot, 9, std::exp(lg), xi[9].xi) /
                         predict_edd_first_order(net, RuleFamily::OneShot, 9, std::exp(lg));
    EXPECT_GT(ratio, 1.0);
    excess.push_back(ratio - 1.0);
  }
  EXPECT_NEAR(excess[1] / excess[0], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(excess[2] / excess[0], 0.5, 1e-12);
  EXPECT_NEAR(excess[3] / excess[0], std::sqrt(10.0 / 700.0), 1e-12);
}

TEST(Predict, BoundsCollapseUnderKldScaling) {
  const auto net = fig2_network();
  const auto c = net.klds();
  for (int m : {1, 5, 9})
    for (auto family : {RuleFamily::OneShot, RuleFamily::Voting}) {
      const auto b = predict_edd_bounds(net, c, family, m, 1e4);
      const double first = predict_edd_first_order(net, family, m, 1e4);
      EXPECT_NEAR(b.lower, first, 1e-12);
      EXPECT_NEAR(b.upper, first, 1e-12);
    }
  const auto wide = predict_edd_bounds(net, std::vector<double>{1.0, 1.0, 1.0}, RuleFamily::OneShot, 5, 1e4);
  EXPECT_LT(wide.lower, wide.upper);
}

TEST(Recommend, Fig2OneShot) {
  const auto r = recommend_m(fig2_network(), RuleFamily::OneShot);
  EXPECT_EQ(r.candidates, (std::vector<int>{1, 4, 7}));
  EXPECT_EQ(r.pick, 7);
  EXPECT_FALSE(r.rationale.empty());
}

TEST(Recommend, VotingPicksN) {
  EXPECT_EQ(recommend_m(fig2_network(), RuleFamily::Voting).pick, 9);
  EXPECT_EQ(recommend_m(two_groups(8, 1), RuleFamily::Voting).pick, 9);
}

TEST(Recommend, SingleGroupIsFirstAlarm) {
  const auto r = recommend_m(Network::from_specs({{4, Gaussian(0, 1), Gaussian(1, 1)}}), RuleFamily::OneShot);
  EXPECT_EQ(r.candidates, (std::vector<int>{1}));
  EXPECT_EQ(r.pick, 1);
}

TEST(GroupSelection, StrictHalfCondition) {
  EXPECT_TRUE(group_selection_advantage(two_groups(8, 1)));
  EXPECT_FALSE(group_selection_advantage(two_groups(1, 9)));
  EXPECT_FALSE(group_selection_advantage(two_groups(5, 5)));
}
