#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetdqcd/fusion.hpp"
#include "hetdqcd/fusion_spec.hpp"
#include "hetdqcd/metrics.hpp"

namespace hetdqcd {

/// Raised when an ARL evaluation is too censored to be trusted.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ArlMethod {
  Joint,     // resumable joint simulation of all sensors (any rule)
  Composed,  // order statistics of local false-alarm pools (M-th alarm only)
};

struct CalibrationOptions {
  double tolerance = 0.05;  // in log-ARL
  std::int64_t trials = 20000;
  std::int64_t run_cap = 10'000'000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  int max_iterations = 40;
  ArlMethod arl_method = ArlMethod::Joint;
};

struct CalibrationStep {
  double h = 0.0;
  double log_arl = 0.0;
  double log_std_error = 0.0;
};

struct CalibrationResult {
  double h_star = 0.0;
  double achieved_log_arl = 0.0;
  double target_log_gamma = 0.0;
  int iterations = 0;
  std::int64_t trials_per_eval = 0;
  bool converged = false;
  bool at_floor = false;  // ARL(0) already above gamma; h_star = 0
  Estimate arl;
  std::vector<CalibrationStep> history;
  std::string diagnostics;
};

/// First-order threshold for target ARL gamma. With participants' scalings
/// sorted ascending: M-th alarm uses the M-th smallest, voting the sum of
/// the M smallest, weighted voting the cheapest set (greedy in c/alpha)
/// whose weights reach M. Aggregate rules use log(gamma) itself.
template <Distribution D>
double first_order_guess(const BasicNetwork<D>& network, const FusionRuleSpec& rule, std::span<const double> scale,
                         double gamma) {
  if (!(gamma > 1.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite and > 1");
  ThresholdVector{0.0, std::vector<double>(scale.begin(), scale.end())}.validate(network.group_count());
  const auto layout = detail::make_layout(network, rule);
  const double lg = std::log(gamma);
  if (layout.aggregate) return lg;
  std::vector<double> c;
  for (int g : layout.group) c.push_back(scale[static_cast<std::size_t>(g - 1)]);
  if (layout.weighted) {
    std::vector<std::size_t> idx(c.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return c[a] / layout.weight[a] < c[b] / layout.weight[b];
    });
    double mass = 0.0;
    double cost = 0.0;
    for (auto i : idx) {
      mass += layout.weight[i];
      cost += c[i];
      if (detail::quota_met(mass, layout.quota)) break;
    }
    return lg / cost;
  }
  std::sort(c.begin(), c.end());
  const auto m = static_cast<std::size_t>(std::llround(layout.quota));
  if (layout.one_shot) return lg / c[m - 1];
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) sum += c[j];
  return lg / sum;
}

/// Solves log ARL(h) = log(gamma) for a non-decreasing ARL(h).
///
/// Evaluations cost roughly ARL(h) steps per trial, so the search starts
/// below the root at half the guess and climbs with at most doubling
/// steps aimed just past the target, then refines the bracket with an
/// Illinois false-position iteration. Common random numbers across h make
/// the estimated curve monotone, which keeps the bracket consistent.
inline CalibrationResult calibrate_monotone(const std::function<Estimate(double)>& arl_at, double guess, double gamma,
                                            const CalibrationOptions& opt) {
  if (!(gamma > 1.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite and > 1");
  if (!(opt.tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  if (opt.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(guess > 0.0) || !std::isfinite(guess)) throw std::invalid_argument("guess must be finite and > 0");

  CalibrationResult res;
  res.target_log_gamma = std::log(gamma);
  const double target = res.target_log_gamma;

  struct Point {
    double h;
    double f;
    Estimate e;
  };
  auto eval = [&](double h) {
    const Estimate e = arl_at(h);
    ++res.iterations;
    if (e.censored_fraction() > kMaxCensoredFraction) {
      throw CalibrationError("calibration: " + std::to_string(e.censored) + " of " + std::to_string(e.trials) +
                             " trials censored at h=" + std::to_string(h) + "; raise run_cap");
    }
    if (!e.valid()) throw CalibrationError("calibration: too few observed trials at h=" + std::to_string(h));
    res.trials_per_eval = e.trials;
    const double la = std::log(e.mean);
    res.history.push_back({h, la, e.log_std_error()});
    return Point{h, la - target, e};
  };

  Point best{0.0, std::numeric_limits<double>::infinity(), {}};
  auto consider = [&](const Point& p) {
    if (std::abs(p.f) < std::abs(best.f)) best = p;
  };
  auto finish = [&](const std::string& why) {
    res.h_star = best.h;
    res.achieved_log_arl = best.f + target;
    res.arl = best.e;
    res.converged = std::abs(best.f) <= opt.tolerance;
    res.diagnostics = why;
    return res;
  };
  const double aim = opt.tolerance / 4.0;

  // Illinois iteration on a bracket with a.f < 0 < b.f.
  auto refine = [&](Point a, Point b) {
    int side = 0;
    while (res.iterations < opt.max_iterations) {
      double h = a.h - a.f * (b.h - a.h) / (b.f - a.f);
      if (!(h > a.h && h < b.h)) h = 0.5 * (a.h + b.h);
      const Point q = eval(h);
      consider(q);
      if (std::abs(q.f) <= aim) return finish("converged");
      if (q.f < 0.0) {
        a = q;
        if (side == -1) b.f *= 0.5;
        side = -1;
      } else {
        b = q;
        if (side == 1) a.f *= 0.5;
        side = 1;
      }
      if (b.h - a.h <= 1e-9 * std::max(1.0, b.h)) return finish("bracket collapsed on a jump of ARL_hat");
    }
    return finish("iteration limit during refinement");
  };

  Point lo = eval(0.5 * guess);
  consider(lo);
  if (std::abs(lo.f) <= aim) return finish("converged");
  if (lo.f > 0.0) {
    // Rare: the root is below half the guess. Halve towards zero.
    Point hi = lo;
    while (true) {
      if (res.iterations >= opt.max_iterations) return finish("iteration limit while bracketing from above");
      if (hi.h == 0.0) {
        // Points just above 0 may tie with h = 0; the floor itself is reported.
        res.at_floor = hi.f > opt.tolerance;
        if (res.at_floor) best = hi;
        return finish("ARL at h=0 already exceeds gamma");
      }
      const Point p = eval(hi.h < 1e-3 * guess ? 0.0 : 0.5 * hi.h);
      consider(p);
      if (std::abs(p.f) <= aim) return finish("converged");
      if (p.f < 0.0) return refine(p, hi);
      hi = p;
    }
  }

  // Climb with at most doubling steps.
  double slope = target / guess;
  Point hi = lo;
  while (hi.f < 0.0) {
    if (res.iterations >= opt.max_iterations) return finish("iteration limit while bracketing from below");
    const double want = (-hi.f + 0.1) / std::max(slope, 1e-12);
    const double step = std::min(want, std::max(hi.h, 0.25 * guess));
    const Point p = eval(hi.h + step);
    consider(p);
    if (std::abs(p.f) <= aim) return finish("converged");
    if (p.f > hi.f) slope = (p.f - hi.f) / (p.h - hi.h);
    lo = hi;
    hi = p;
  }
  return refine(lo, hi);
}

/// Calibrates on an existing profile, reusing every path already simulated.
template <Distribution D>
CalibrationResult calibrate(ArlProfile<D>& profile, double guess, double gamma, const CalibrationOptions& opt) {
  return calibrate_monotone([&](double h) { return profile.estimate(h); }, guess, gamma, opt);
}

/// Scalar h with ARL(rho(c h)) ~= gamma for the given per-group scaling c.
template <Distribution D>
CalibrationResult calibrate(const BasicNetwork<D>& network, const FusionRuleSpec& rule,
                            const std::vector<double>& scale, double gamma, const CalibrationOptions& opt = {}) {
  rule.validate(network);
  const double guess = first_order_guess(network, rule, scale, gamma);
  if (opt.arl_method == ArlMethod::Composed) {
    if (rule.variant() != RuleVariant::MthAlarm)
      throw std::invalid_argument("composed ARL estimation applies to the unrestricted M-th alarm rule only");
    const int m = rule.m();
    return calibrate_monotone(
        [&](double h) {
          const auto c = estimate_arl_oneshot_composed(network, m, ThresholdVector{h, scale}, opt.trials, opt.trials,
                                                       opt.run_cap, opt.seed, opt.threads);
          for (const auto& local : c.local)
            if (local.censored_fraction() > kMaxCensoredFraction)
              throw CalibrationError("calibration: local pool censored beyond 1% at h=" + std::to_string(h) +
                                     "; raise run_cap");
          return c.arl;
        },
        guess, gamma, opt);
  }
  ArlProfile<D> profile(network, rule, scale, {opt.trials, opt.run_cap, opt.seed, opt.threads});
  return calibrate(profile, guess, gamma, opt);
}

}  // namespace hetdqcd
