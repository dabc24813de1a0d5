#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hetdqcd/cusum.hpp"
#include "hetdqcd/fusion.hpp"
#include "hetdqcd/parallel.hpp"
#include "hetdqcd/rng.hpp"

namespace hetdqcd {

/// Largest censored fraction an estimate may carry and still be valid.
inline constexpr double kMaxCensoredFraction = 0.01;

/// Sample mean of stop times with a 95% normal-approximation interval.
/// Censored trials are excluded from the mean and counted separately.
struct Estimate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_dev = std::numeric_limits<double>::quiet_NaN();
  double ci_halfwidth = std::numeric_limits<double>::quiet_NaN();
  std::int64_t trials = 0;
  std::int64_t censored = 0;

  std::int64_t observed() const noexcept { return trials - censored; }
  double censored_fraction() const noexcept {
    return trials > 0 ? static_cast<double>(censored) / static_cast<double>(trials) : 1.0;
  }
  bool valid() const noexcept { return observed() >= 2 && censored_fraction() <= kMaxCensoredFraction; }
  double std_error() const noexcept { return std_dev / std::sqrt(static_cast<double>(observed())); }
  /// Delta-method standard error of log(mean).
  double log_std_error() const noexcept { return std_error() / mean; }
};

/// Fixed summation order (trial index), so results are bit-reproducible.
inline Estimate summarize(std::span<const double> values, std::int64_t censored) {
  Estimate e;
  e.trials = static_cast<std::int64_t>(values.size()) + censored;
  e.censored = censored;
  const auto n = static_cast<double>(values.size());
  if (values.empty()) return e;
  double sum = 0.0;
  for (double v : values) sum += v;
  e.mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - e.mean) * (v - e.mean);
  e.std_dev = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  e.ci_halfwidth = 1.96 * e.std_dev / std::sqrt(n);
  return e;
}

inline Estimate summarize(std::span<const detail::StopOutcome> outcomes) {
  std::vector<double> v;
  v.reserve(outcomes.size());
  std::int64_t censored = 0;
  for (const auto& o : outcomes) {
    if (o.censored) ++censored;
    else v.push_back(static_cast<double>(o.time));
  }
  return summarize(v, censored);
}

struct MonteCarloOptions {
  std::int64_t trials = 20000;
  std::int64_t run_cap = 10'000'000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

/// Stop times of `trials` independent trials; trial i reads the streams of
/// TrialSeed{seed, i}.
template <Distribution D>
std::vector<detail::StopOutcome> simulate_stop_times(const BasicRuleSimulator<D>& sim, const ThresholdVector& th,
                                                     ChangePoint change, const MonteCarloOptions& opt) {
  if (opt.trials < 1) throw std::invalid_argument("trials must be >= 1");
  const auto lv = sim.levels(th);
  std::vector<detail::StopOutcome> out(static_cast<std::size_t>(opt.trials));
  parallel_for(out.size(), opt.threads, [&](std::size_t i) {
    out[i] = sim.run(lv, change, opt.run_cap, {opt.seed, static_cast<std::uint64_t>(i)});
  });
  return out;
}

/// EDD as E_0[rho]: every observation is post-change and all CUSUMs start
/// at zero, which is the worst case for CUSUM-driven rules.
template <Distribution D>
Estimate estimate_edd(const BasicNetwork<D>& network, const FusionRuleSpec& rule, const ThresholdVector& th,
                      const MonteCarloOptions& opt) {
  const BasicRuleSimulator<D> sim(network, rule);
  return summarize(simulate_stop_times(sim, th, ChangePoint::at_start(), opt));
}

/// ARL = E_inf[rho] by direct joint simulation.
template <Distribution D>
Estimate estimate_arl_direct(const BasicNetwork<D>& network, const FusionRuleSpec& rule, const ThresholdVector& th,
                             const MonteCarloOptions& opt) {
  const BasicRuleSimulator<D> sim(network, rule);
  return summarize(simulate_stop_times(sim, th, ChangePoint::never(), opt));
}

/// Mean residual delay E[rho - nu | rho > nu] for a change after time nu.
/// Trials that alarm at or before nu are dropped (not censored).
template <Distribution D>
Estimate estimate_delay_after_change(const BasicNetwork<D>& network, const FusionRuleSpec& rule,
                                     const ThresholdVector& th, std::int64_t nu, const MonteCarloOptions& opt) {
  if (nu < 0) throw std::invalid_argument("change time must be >= 0");
  const BasicRuleSimulator<D> sim(network, rule);
  const auto outcomes = simulate_stop_times(sim, th, ChangePoint::at(nu), opt);
  std::vector<double> v;
  std::int64_t censored = 0;
  for (const auto& o : outcomes) {
    if (o.censored) ++censored;
    else if (o.time > nu) v.push_back(static_cast<double>(o.time - nu));
  }
  return summarize(v, censored);
}

/// ARL of the one-shot M-th alarm rule composed from independent local
/// false-alarm times.
///
/// Sensors in a group are exchangeable, so one pool of local stop times is
/// simulated per group; each composed trial then draws distinct pool
/// entries for the N_l sensors of every group and takes the M-th smallest.
/// Composed trials share pool entries, so the interval adds the pool term
/// of the U-statistic variance, sum_l N_l^2 Var(h_l) / n_l, where h_l(x) is
/// the mean composed time given one group-l sensor drew x. h_l is estimated
/// from the composed trials that used each entry, less the noise from the
/// few trials per entry.
struct ComposedArl {
  Estimate arl;
  std::vector<Estimate> local;  // per-group local ARL pools
  bool valid() const noexcept {
    if (!arl.valid()) return false;
    for (const auto& e : local)
      if (e.censored_fraction() > kMaxCensoredFraction) return false;
    return true;
  }
};

template <Distribution D>
ComposedArl estimate_arl_oneshot_composed(const BasicNetwork<D>& network, int m, const ThresholdVector& th,
                                          std::int64_t trials_per_sensor, std::int64_t trials_compose,
                                          std::int64_t run_cap, std::uint64_t seed, unsigned threads = 0) {
  FusionRuleSpec::mth_alarm(m).validate(network);
  th.validate(network.group_count());
  if (trials_per_sensor < 1 || trials_compose < 1) throw std::invalid_argument("trial counts must be >= 1");
  const int groups = network.group_count();
  constexpr auto kCensored = std::numeric_limits<std::int64_t>::max();

  ComposedArl out;
  std::vector<std::vector<std::int64_t>> pools(static_cast<std::size_t>(groups));
  for (int l = 1; l <= groups; ++l) {
    auto& pool = pools[static_cast<std::size_t>(l - 1)];
    pool.resize(static_cast<std::size_t>(trials_per_sensor));
    const auto& g = network.group(l);
    const double level = th.level(l);
    parallel_for(pool.size(), threads, [&](std::size_t i) {
      auto engine = make_engine({seed, StreamDomain::LocalPool, i, static_cast<std::uint32_t>(l)});
      const auto r = run_local_sensor(g, level, Regime::PreChange, run_cap, engine);
      pool[i] = r.time.value_or(kCensored);
    });
    std::vector<double> v;
    std::int64_t censored = 0;
    for (auto t : pool) {
      if (t == kCensored) ++censored;
      else v.push_back(static_cast<double>(t));
    }
    out.local.push_back(summarize(v, censored));
  }

  const auto n = static_cast<std::size_t>(network.sensor_count());
  std::vector<std::int64_t> composed(static_cast<std::size_t>(trials_compose));
  std::vector<std::size_t> used(composed.size() * n);  // pool entry per (trial, sensor slot)
  parallel_for(composed.size(), threads, [&](std::size_t j) {
    auto engine = make_engine({seed, StreamDomain::Compose, j, 0});
    std::vector<std::int64_t> times;
    times.reserve(n);
    std::size_t slot = j * n;
    for (int l = 1; l <= groups; ++l) {
      const auto& pool = pools[static_cast<std::size_t>(l - 1)];
      const int need = network.group(l).count();
      const bool distinct = pool.size() >= static_cast<std::size_t>(need);
      const std::size_t first = slot;
      while (static_cast<int>(slot - first) < need) {
        const auto idx = static_cast<std::size_t>(engine.uniform() * static_cast<double>(pool.size()));
        if (distinct && std::find(used.begin() + static_cast<std::ptrdiff_t>(first),
                                  used.begin() + static_cast<std::ptrdiff_t>(slot), idx) !=
                            used.begin() + static_cast<std::ptrdiff_t>(slot))
          continue;
        used[slot++] = idx;
        times.push_back(pool[idx]);
      }
    }
    std::nth_element(times.begin(), times.begin() + (m - 1), times.end());
    composed[j] = times[static_cast<std::size_t>(m - 1)];
  });

  std::vector<double> v;
  std::int64_t censored = 0;
  for (auto t : composed) {
    if (t == kCensored) ++censored;
    else v.push_back(static_cast<double>(t));
  }
  out.arl = summarize(v, censored);
  if (censored > 0 || out.arl.observed() < 2) return out;

  const double var_t = out.arl.std_dev * out.arl.std_dev;
  double var_mean = var_t / static_cast<double>(out.arl.observed());
  std::size_t offset = 0;
  for (int l = 1; l <= groups; ++l) {
    const auto pool_size = pools[static_cast<std::size_t>(l - 1)].size();
    const auto need = static_cast<std::size_t>(network.group(l).count());
    std::vector<double> sum(pool_size, 0.0);
    std::vector<std::int64_t> uses(pool_size, 0);
    for (std::size_t j = 0; j < composed.size(); ++j)
      for (std::size_t s = 0; s < need; ++s) {
        const auto idx = used[j * n + offset + s];
        sum[idx] += static_cast<double>(composed[j]);
        ++uses[idx];
      }
    double acc = 0.0, acc2 = 0.0, inv_uses = 0.0;
    std::int64_t entries = 0;
    for (std::size_t i = 0; i < pool_size; ++i) {
      if (uses[i] == 0) continue;
      const double h = sum[i] / static_cast<double>(uses[i]);
      acc += h;
      acc2 += h * h;
      inv_uses += 1.0 / static_cast<double>(uses[i]);
      ++entries;
    }
    if (entries > 1) {
      const double e = static_cast<double>(entries);
      const double var_h = (acc2 - acc * acc / e) / (e - 1.0);
      const double var_proj = std::max(0.0, var_h - var_t * inv_uses / e);
      var_mean += static_cast<double>(need * need) * var_proj / static_cast<double>(pool_size);
    }
    offset += need;
  }
  out.arl.ci_halfwidth = 1.96 * std::sqrt(var_mean);
  return out;
}

/// Pre-change stop times of one rule as a function of the scalar
/// threshold h (per-group thresholds c_l h), backed by resumable trials.
///
/// Each trial records the ladder of its rule score, so ARL_hat(h) is exact
/// for every h the trials have been advanced past, and all h share the
/// same sample paths. Trials are only advanced as far as requested.
template <Distribution D>
class ArlProfile {
 public:
  ArlProfile(const BasicNetwork<D>& network, FusionRuleSpec rule, std::vector<double> scale_per_group,
             MonteCarloOptions opt)
      : sim_(std::make_unique<BasicRuleSimulator<D>>(network, std::move(rule))), opt_(opt) {
    ThresholdVector{0.0, scale_per_group}.validate(network.group_count());
    if (opt.trials < 1) throw std::invalid_argument("trials must be >= 1");
    inv_scale_ = std::make_unique<const std::vector<double>>(sim_->layout().inverse_scale(scale_per_group));
    trials_.reserve(static_cast<std::size_t>(opt.trials));
    for (std::int64_t i = 0; i < opt.trials; ++i) {
      trials_.emplace_back(sim_->layout(), *inv_scale_,
                           detail::RandomSource<D>(sim_->source_model(), {opt.seed, static_cast<std::uint64_t>(i)},
                                                   ChangePoint::never()));
    }
  }

  const FusionRuleSpec& rule() const noexcept { return sim_->rule(); }
  std::int64_t trials() const noexcept { return static_cast<std::int64_t>(trials_.size()); }
  const MonteCarloOptions& options() const noexcept { return opt_; }

  /// Advance every trial until its score passes h or its run cap.
  void ensure(double h) {
    if (h <= covered_) return;
    parallel_for(trials_.size(), opt_.threads, [&](std::size_t i) { trials_[i].extend(h, opt_.run_cap); });
    covered_ = h;
  }

  Estimate estimate(double h) {
    ensure(h);
    std::vector<double> v;
    v.reserve(trials_.size());
    std::int64_t censored = 0;
    for (const auto& t : trials_) {
      if (auto s = t.stop_time(h)) v.push_back(static_cast<double>(*s));
      else ++censored;
    }
    return summarize(v, censored);
  }

  /// Mean of stop-time lower bounds at h from the paths simulated so far.
  double arl_lower_bound(double h) const {
    double sum = 0.0;
    for (const auto& t : trials_) sum += static_cast<double>(t.stop_time_lower_bound(h));
    return sum / static_cast<double>(trials_.size());
  }

  std::int64_t steps_simulated() const noexcept {
    std::int64_t s = 0;
    for (const auto& t : trials_) s += t.time();
    return s;
  }

 private:
  std::unique_ptr<BasicRuleSimulator<D>> sim_;
  MonteCarloOptions opt_;
  std::unique_ptr<const std::vector<double>> inv_scale_;
  std::vector<detail::LadderTrial<detail::RandomSource<D>>> trials_;
  double covered_ = -std::numeric_limits<double>::infinity();
};

}  // namespace hetdqcd
