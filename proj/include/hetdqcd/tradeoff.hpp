#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hetdqcd/calibration.hpp"
#include "hetdqcd/metrics.hpp"

namespace hetdqcd {

struct NamedRule {
  std::string name;
  FusionRuleSpec rule;
};

struct SweepConfig {
  std::vector<double> scale;  // per-group c; empty means c_l = I_l
  double tolerance = 0.05;
  std::int64_t arl_trials = 20000;
  std::int64_t edd_trials = 20000;
  std::int64_t run_cap = 10'000'000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  int max_iterations = 40;
  ArlMethod arl_method = ArlMethod::Joint;
};

/// One calibrated point of an ARL-vs-EDD curve.
struct TradeoffPoint {
  std::string rule;
  RuleVariant variant = RuleVariant::MthAlarm;
  double m = std::numeric_limits<double>::quiet_NaN();  // NaN for aggregate rules
  double gamma_target = 0.0;
  double h_star = std::numeric_limits<double>::quiet_NaN();
  Estimate arl;
  Estimate edd;
  bool converged = false;
  // Unreachable target: even h = 0 gives ARL above gamma. EDD is then
  // measured at h = 0, a lower bound on the rule's EDD at any admissible
  // threshold.
  bool at_floor = false;
  std::string error;

  std::int64_t trials() const noexcept { return std::min(arl.trials, edd.trials); }
  double censored_fraction() const noexcept {
    return std::max(arl.trials > 0 ? arl.censored_fraction() : 0.0, edd.trials > 0 ? edd.censored_fraction() : 0.0);
  }
  bool valid() const noexcept { return error.empty() && converged && arl.valid() && edd.valid(); }
};

/// Calibrates every rule at every gamma and measures EDD at h_star.
///
/// Every rule and gamma reads the same per-sensor streams: one ARL profile
/// per rule is grown through the gamma grid in ascending order, and EDD
/// trials use the post-change streams of the same seed. A failure at one
/// point is recorded in that row and the sweep continues. Output order is
/// rule-major, gamma in grid order.
template <Distribution D>
std::vector<TradeoffPoint> tradeoff_sweep(const BasicNetwork<D>& network, std::span<const NamedRule> rules,
                                          std::span<const double> gamma_grid, const SweepConfig& cfg,
                                          const std::function<void(const TradeoffPoint&)>& on_point = {}) {
  for (const auto& r : rules) r.rule.validate(network);
  for (double g : gamma_grid)
    if (!(g > 1.0) || !std::isfinite(g)) throw std::invalid_argument("gamma grid entries must be finite and > 1");
  const std::vector<double> scale = cfg.scale.empty() ? network.klds() : cfg.scale;
  ThresholdVector{0.0, scale}.validate(network.group_count());

  std::vector<std::size_t> order(gamma_grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return gamma_grid[a] < gamma_grid[b]; });

  CalibrationOptions copt;
  copt.tolerance = cfg.tolerance;
  copt.trials = cfg.arl_trials;
  copt.run_cap = cfg.run_cap;
  copt.seed = cfg.seed;
  copt.threads = cfg.threads;
  copt.max_iterations = cfg.max_iterations;
  copt.arl_method = cfg.arl_method;
  const MonteCarloOptions edd_opt{cfg.edd_trials, cfg.run_cap, cfg.seed, cfg.threads};

  std::vector<TradeoffPoint> out;
  out.reserve(rules.size() * gamma_grid.size());
  for (const auto& named : rules) {
    const auto& rule = named.rule;
    const bool composed = cfg.arl_method == ArlMethod::Composed && rule.variant() == RuleVariant::MthAlarm;
    std::unique_ptr<ArlProfile<D>> profile;
    if (!composed)
      profile = std::make_unique<ArlProfile<D>>(network, rule, scale,
                                                MonteCarloOptions{cfg.arl_trials, cfg.run_cap, cfg.seed, cfg.threads});
    std::vector<TradeoffPoint> row(gamma_grid.size());
    for (auto gi : order) {
      TradeoffPoint& p = row[gi];
      p.rule = named.name;
      p.variant = rule.variant();
      if (!rule.aggregate()) p.m = rule.quota();
      p.gamma_target = gamma_grid[gi];
      try {
        CalibrationResult cal;
        if (composed) {
          cal = calibrate(network, rule, scale, p.gamma_target, copt);
        } else {
          const double guess = first_order_guess(network, rule, scale, p.gamma_target);
          cal = calibrate(*profile, guess, p.gamma_target, copt);
        }
        p.h_star = cal.h_star;
        p.arl = cal.arl;
        p.converged = cal.converged;
        p.at_floor = cal.at_floor;
        if (!cal.converged) p.error = "calibration did not converge: " + cal.diagnostics;
        p.edd = estimate_edd(network, rule, ThresholdVector{cal.h_star, scale}, edd_opt);
      } catch (const std::exception& e) {
        p.error = e.what();
      }
      if (on_point) on_point(p);
    }
    for (auto& p : row) out.push_back(std::move(p));
  }
  return out;
}

/// n log-spaced values from `from` to `to` inclusive.
inline std::vector<double> log_grid(double from, double to, int n) {
  if (!(from > 0.0) || !(to >= from) || n < 1) throw std::invalid_argument("log_grid: need 0 < from <= to, n >= 1");
  std::vector<double> g;
  if (n == 1) return {from};
  const double a = std::log(from);
  const double b = std::log(to);
  for (int i = 0; i < n; ++i) g.push_back(std::exp(a + (b - a) * i / (n - 1)));
  g.front() = from;
  g.back() = to;
  return g;
}

}  // namespace hetdqcd
