#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "hetdqcd/detail/rule_engine.hpp"
#include "hetdqcd/fusion_spec.hpp"
#include "hetdqcd/models.hpp"

namespace hetdqcd {

/// A validated rule bound to a network, reusable across many trials.
///
/// run() evaluates the rule's predicate literally against fixed thresholds.
/// Every trial reads the per-sensor streams keyed by (seed, trial, flat
/// sensor index), so different rules evaluated on the same TrialSeed see
/// identical observations.
template <Distribution D>
class BasicRuleSimulator {
 public:
  BasicRuleSimulator(const BasicNetwork<D>& network, FusionRuleSpec rule)
      : network_(&network), rule_(std::move(rule)), layout_(detail::make_layout(network, rule_)),
        model_(network, layout_) {}

  const FusionRuleSpec& rule() const noexcept { return rule_; }
  const BasicNetwork<D>& network() const noexcept { return *network_; }
  const detail::RuleLayout& layout() const noexcept { return layout_; }
  const detail::SourceModel<D>& source_model() const noexcept { return model_; }

  std::vector<double> levels(const ThresholdVector& th) const {
    th.validate(network_->group_count());
    return layout_.levels(th);
  }

  detail::StopOutcome run(std::span<const double> levels, ChangePoint change, std::int64_t run_cap, TrialSeed seed,
                          std::vector<SensorId>* triggering = nullptr) const {
    if (run_cap < 1) throw std::invalid_argument("run_cap must be >= 1");
    detail::RandomSource<D> source(model_, seed, change);
    return detail::run_fixed(layout_, levels, source, run_cap, triggering);
  }

  GlobalStopTime stop(const ThresholdVector& th, ChangePoint change, std::int64_t run_cap, TrialSeed seed) const {
    const auto lv = levels(th);
    GlobalStopTime out;
    const auto r = run(lv, change, run_cap, seed, &out.triggering);
    if (!r.censored) out.time = r.time;
    else out.triggering.clear();
    return out;
  }

 private:
  const BasicNetwork<D>* network_;
  FusionRuleSpec rule_;
  detail::RuleLayout layout_;
  detail::SourceModel<D> model_;
};

using RuleSimulator = BasicRuleSimulator<Gaussian>;

template <Distribution D>
GlobalStopTime stop_time(const BasicNetwork<D>& network, const FusionRuleSpec& rule, const ThresholdVector& th,
                         Regime regime, std::int64_t run_cap, TrialSeed seed) {
  return BasicRuleSimulator<D>(network, rule).stop(th, ChangePoint::of(regime), run_cap, seed);
}

/// One-shot rule: stop once M sensors have ever crossed.
template <Distribution D>
GlobalStopTime stop_m_th_alarm(const BasicNetwork<D>& network, const ThresholdVector& th, int m, Regime regime,
                               std::int64_t run_cap, TrialSeed seed) {
  return stop_time(network, FusionRuleSpec::mth_alarm(m), th, regime, run_cap, seed);
}

/// Stop once M sensors are above threshold at the same instant.
template <Distribution D>
GlobalStopTime stop_m_voting(const BasicNetwork<D>& network, const ThresholdVector& th, int m, Regime regime,
                             std::int64_t run_cap, TrialSeed seed) {
  return stop_time(network, FusionRuleSpec::m_voting(m), th, regime, run_cap, seed);
}

/// M-th alarm or M-voting counted only over the selection D.
template <Distribution D>
GlobalStopTime stop_within(const BasicNetwork<D>& network, const ThresholdVector& th, int m,
                           const std::vector<SensorId>& selection, RuleVariant variant, Regime regime,
                           std::int64_t run_cap, TrialSeed seed) {
  if (variant == RuleVariant::MthAlarmWithin || variant == RuleVariant::MthAlarm)
    return stop_time(network, FusionRuleSpec::mth_alarm_within(m, selection), th, regime, run_cap, seed);
  if (variant == RuleVariant::MVotingWithin || variant == RuleVariant::MVoting)
    return stop_time(network, FusionRuleSpec::m_voting_within(m, selection), th, regime, run_cap, seed);
  throw std::invalid_argument("stop_within: variant must be an M-th alarm or M-voting rule");
}

template <Distribution D>
GlobalStopTime stop_weighted_voting(const BasicNetwork<D>& network, const ThresholdVector& th, double m,
                                    const std::map<SensorId, double>& weights, Regime regime, std::int64_t run_cap,
                                    TrialSeed seed) {
  return stop_time(network, FusionRuleSpec::weighted_voting(m, weights), th, regime, run_cap, seed);
}

/// CUSUM of the summed LLRs of every sensor against one scalar threshold.
template <Distribution D>
GlobalStopTime stop_centralized_cusum(const BasicNetwork<D>& network, double threshold, Regime regime,
                                      std::int64_t run_cap, TrialSeed seed) {
  return stop_time(network, FusionRuleSpec::centralized_cusum(),
                   ThresholdVector::uniform(network.group_count(), threshold), regime, run_cap, seed);
}

/// Interpreted mixture CUSUM baseline (see MixtureLlr).
template <Distribution D>
GlobalStopTime stop_mixture_cusum(const BasicNetwork<D>& network, double threshold, Regime regime,
                                  std::int64_t run_cap, TrialSeed seed) {
  return stop_time(network, FusionRuleSpec::mixture_cusum(),
                   ThresholdVector::uniform(network.group_count(), threshold), regime, run_cap, seed);
}

template <Distribution D>
double mixture_llr(const BasicNetwork<D>& network, double x) {
  return MixtureLlr<D>(network)(x);
}

/// Runs a rule on hand-supplied LLR sequences, one per sensor in flat
/// order. The run cap is the shortest trace length; for aggregate rules
/// the traces are summed.
template <Distribution D>
GlobalStopTime stop_time_on_traces(const BasicNetwork<D>& network, const FusionRuleSpec& rule,
                                   const ThresholdVector& th, std::span<const std::vector<double>> llr_by_sensor) {
  if (static_cast<int>(llr_by_sensor.size()) != network.sensor_count())
    throw std::invalid_argument("stop_time_on_traces: need one trace per sensor");
  const auto layout = detail::make_layout(network, rule);
  th.validate(network.group_count());
  std::size_t cap = llr_by_sensor.front().size();
  for (const auto& tr : llr_by_sensor) cap = std::min(cap, tr.size());
  if (cap == 0) throw std::invalid_argument("stop_time_on_traces: empty trace");
  detail::TraceSource source(layout, llr_by_sensor);
  GlobalStopTime out;
  const auto lv = layout.levels(th);
  const auto r = detail::run_fixed(layout, lv, source, static_cast<std::int64_t>(cap), &out.triggering);
  if (!r.censored) out.time = r.time;
  else out.triggering.clear();
  return out;
}

}  // namespace hetdqcd
