#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hetdqcd/models.hpp"

namespace hetdqcd {

/// Local CUSUM statistic W_t at time t.
///
/// The recursion is reset-then-add, W_t = max{0, W_{t-1}} + Z_t with
/// W_0 = 0, not the textbook max{0, W_{t-1} + Z_t}. W_t can therefore be
/// negative, and W_t >= Z_t always holds.
struct CusumState {
  double w = 0.0;
  std::int64_t t = 0;
  friend bool operator==(const CusumState&, const CusumState&) = default;
};

constexpr CusumState cusum_update(CusumState state, double z) noexcept {
  return {std::max(0.0, state.w) + z, state.t + 1};
}

/// Iterates cusum_update over a whole LLR sequence; element t-1 holds W_t.
inline std::vector<double> cusum_path(std::span<const double> z) {
  std::vector<double> out;
  out.reserve(z.size());
  CusumState s;
  for (double zi : z) {
    s = cusum_update(s, zi);
    out.push_back(s.w);
  }
  return out;
}

/// Prefix-sum form of the same statistic: W_t = S_t - min_{0<=s<=t-1} S_s
/// with S_0 = 0. The minimum stops at t-1; including s = t would clamp W_t
/// at zero, which the reset-then-add recursion does not do.
inline std::vector<double> cusum_decomposition(std::span<const double> z) {
  std::vector<double> out;
  out.reserve(z.size());
  double prefix = 0.0;
  double min_before = 0.0;  // min over S_0..S_{t-1}
  for (double zi : z) {
    const double next = prefix + zi;
    out.push_back(next - min_before);
    min_before = std::min(min_before, next);
    prefix = next;
  }
  return out;
}

/// W at the final time of `z`, computed through the prefix-sum form.
inline double cusum_closed_form_check(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("cusum_closed_form_check: empty sequence");
  return cusum_decomposition(z).back();
}

/// First strict crossing inf{t : W_t > threshold} of one sensor, or
/// nothing when the run cap was reached first.
struct LocalStopTime {
  SensorId sensor;
  std::optional<std::int64_t> time;
  double threshold = 0.0;
  bool censored() const noexcept { return !time.has_value(); }
};

template <Distribution D, class Engine>
LocalStopTime run_local_sensor(const BasicSensorGroup<D>& group, double threshold, Regime regime,
                               std::int64_t run_cap, Engine& engine, SensorId sensor = {}) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("run_local_sensor: threshold must be >= 0");
  if (run_cap < 1) throw std::invalid_argument("run_local_sensor: run_cap must be >= 1");
  const D& source = regime == Regime::PreChange ? group.pre() : group.post();
  const LlrFunction<D> llr_of(group.pre(), group.post());
  CusumState s;
  while (s.t < run_cap) {
    s = cusum_update(s, llr_of(source.sample(engine)));
    if (s.w > threshold) return {sensor, s.t, threshold};
  }
  return {sensor, std::nullopt, threshold};
}

}  // namespace hetdqcd
