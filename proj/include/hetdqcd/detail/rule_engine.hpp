#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hetdqcd/fusion_spec.hpp"
#include "hetdqcd/models.hpp"
#include "hetdqcd/rng.hpp"

namespace hetdqcd {

/// Interpreted mixture LLR for anonymised observations:
/// ln( sum_l (N_l/N) g_l(x) ) - ln( sum_l (N_l/N) f_l(x) ).
/// A stand-in for the mixture CUSUM baseline, whose exact definition is not
/// reproduced here.
template <Distribution D>
class MixtureLlr {
 public:
  explicit MixtureLlr(const BasicNetwork<D>& network) {
    for (const auto& g : network.groups()) {
      log_weight_.push_back(std::log(static_cast<double>(g.count()) / network.sensor_count()));
      pre_.push_back(g.pre());
      post_.push_back(g.post());
    }
  }

  double operator()(double x) const {
    return log_mix(post_, x) - log_mix(pre_, x);
  }

 private:
  double log_mix(const std::vector<D>& parts, double x) const {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < parts.size(); ++i) top = std::max(top, log_weight_[i] + parts[i].log_density(x));
    double acc = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) acc += std::exp(log_weight_[i] + parts[i].log_density(x) - top);
    return top + std::log(acc);
  }

  std::vector<double> log_weight_;
  std::vector<D> pre_;
  std::vector<D> post_;
};

/// Change time nu: samples at t <= nu come from f, later ones from g.
struct ChangePoint {
  std::int64_t nu = std::numeric_limits<std::int64_t>::max();

  static ChangePoint never() noexcept { return {}; }
  static ChangePoint at_start() noexcept { return {0}; }
  static ChangePoint of(Regime r) noexcept { return r == Regime::PreChange ? never() : at_start(); }
  static ChangePoint at(std::int64_t nu) noexcept { return {nu}; }

  bool post_at(std::int64_t t) const noexcept { return t > nu; }
  StreamDomain domain() const noexcept {
    if (nu == never().nu) return StreamDomain::PreChange;
    if (nu == 0) return StreamDomain::PostChange;
    return StreamDomain::ChangeAt;
  }
};

namespace detail {

/// Network-independent view of a rule: which sensors take part and how
/// their alarms are counted.
struct RuleLayout {
  RuleVariant variant = RuleVariant::MthAlarm;
  double quota = 1.0;
  bool one_shot = false;
  bool aggregate = false;
  bool weighted = false;
  std::vector<int> flat;         // participating sensors, ascending flat index
  std::vector<SensorId> ids;
  std::vector<int> group;        // 1-based group of each participant
  std::vector<double> weight;    // alpha (1 unless weighted)

  std::size_t size() const noexcept { return flat.size(); }

  /// Per-participant thresholds c_l h (aggregate rules: the scalar h).
  std::vector<double> levels(const ThresholdVector& th) const {
    if (aggregate) return {th.h};
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = th.level(group[i]);
    return out;
  }
  /// 1/c_l per participant, for the scalar-threshold score.
  std::vector<double> inverse_scale(std::span<const double> scale_per_group) const {
    std::vector<double> out(size(), 1.0);
    if (aggregate) return out;
    for (std::size_t i = 0; i < size(); ++i) out[i] = 1.0 / scale_per_group[static_cast<std::size_t>(group[i] - 1)];
    return out;
  }
};

template <Distribution D>
RuleLayout make_layout(const BasicNetwork<D>& network, const FusionRuleSpec& rule) {
  rule.validate(network);
  RuleLayout out;
  out.variant = rule.variant();
  out.quota = rule.quota();
  out.one_shot = rule.one_shot();
  out.aggregate = rule.aggregate();
  out.weighted = rule.variant() == RuleVariant::WeightedVoting;
  std::vector<std::pair<int, double>> members;
  if (rule.restricted()) {
    for (const auto& id : rule.selection()) members.emplace_back(network.flat_index(id), 1.0);
  } else if (out.weighted) {
    for (const auto& [id, alpha] : rule.weights())
      if (alpha > 0.0) members.emplace_back(network.flat_index(id), alpha);
  } else {
    for (int f = 0; f < network.sensor_count(); ++f) members.emplace_back(f, 1.0);
  }
  std::sort(members.begin(), members.end());
  for (const auto& [f, alpha] : members) {
    out.flat.push_back(f);
    out.ids.push_back(network.sensor_at(f));
    out.group.push_back(network.group_of(f));
    out.weight.push_back(alpha);
  }
  return out;
}

/// Immutable sampling data shared by every trial of one rule.
template <Distribution D>
struct SourceModel {
  std::vector<D> pre;
  std::vector<D> post;
  std::vector<LlrFunction<D>> llr;
  std::optional<MixtureLlr<D>> mixture;
  std::vector<std::uint32_t> stream;  // flat sensor index, keys the rng stream

  SourceModel(const BasicNetwork<D>& network, const RuleLayout& layout) {
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& g = network.group(layout.group[i]);
      pre.push_back(g.pre());
      post.push_back(g.post());
      llr.emplace_back(g.pre(), g.post());
      stream.push_back(static_cast<std::uint32_t>(layout.flat[i]));
    }
    if (layout.variant == RuleVariant::MixtureCusum) mixture.emplace(network);
  }
};

/// Draws observations from per-sensor streams and turns them into LLRs.
template <Distribution D>
class RandomSource {
 public:
  RandomSource(const SourceModel<D>& model, TrialSeed seed, ChangePoint change) : model_(&model), change_(change) {
    engines_.reserve(model.stream.size());
    for (auto s : model.stream) engines_.push_back(make_engine({seed.seed, change.domain(), seed.trial, s}));
  }

  double next(std::size_t i, std::int64_t t) {
    const D& dist = change_.post_at(t) ? model_->post[i] : model_->pre[i];
    const double x = dist.sample(engines_[i]);
    return model_->mixture ? (*model_->mixture)(x) : model_->llr[i](x);
  }

 private:
  const SourceModel<D>* model_;
  ChangePoint change_;
  std::vector<Xoshiro256pp> engines_;
};

/// Replays fixed LLR sequences, indexed by flat sensor.
class TraceSource {
 public:
  TraceSource(const RuleLayout& layout, std::span<const std::vector<double>> traces)
      : layout_(&layout), traces_(traces) {}

  double next(std::size_t i, std::int64_t t) const {
    const auto& tr = traces_[static_cast<std::size_t>(layout_->flat[i])];
    if (t < 1 || static_cast<std::size_t>(t) > tr.size()) throw std::out_of_range("LLR trace exhausted");
    return tr[static_cast<std::size_t>(t - 1)];
  }

 private:
  const RuleLayout* layout_;
  std::span<const std::vector<double>> traces_;
};

struct StopOutcome {
  std::int64_t time = 0;
  bool censored = false;
};

inline bool quota_met(double votes, double quota) noexcept {
  return votes + FusionRuleSpec::kWeightSlack * std::max(1.0, quota) >= quota;
}

/// Literal evaluation of the rule predicates against fixed thresholds.
/// All participants update at time t before the predicate is checked.
template <class Source>
StopOutcome run_fixed(const RuleLayout& layout, std::span<const double> level, Source& source, std::int64_t run_cap,
                      std::vector<SensorId>* triggering = nullptr) {
  const std::size_t n = layout.size();
  if (layout.aggregate) {
    double w = 0.0;
    for (std::int64_t t = 1; t <= run_cap; ++t) {
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += source.next(i, t);
      w = std::max(0.0, w) + z;
      if (w > level[0]) {
        if (triggering) *triggering = layout.ids;
        return {t, false};
      }
    }
    return {run_cap, true};
  }

  std::vector<double> w(n, 0.0);
  if (layout.one_shot) {
    // A latched sensor has nothing left to say; its stream is simply not read.
    std::vector<char> latched(n, 0);
    const auto need = static_cast<std::size_t>(layout.quota);
    std::size_t count = 0;
    for (std::int64_t t = 1; t <= run_cap; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        if (latched[i]) continue;
        w[i] = std::max(0.0, w[i]) + source.next(i, t);
        if (w[i] > level[i]) {
          latched[i] = 1;
          ++count;
        }
      }
      if (count >= need) {
        if (triggering) {
          triggering->clear();
          for (std::size_t i = 0; i < n; ++i)
            if (latched[i]) triggering->push_back(layout.ids[i]);
        }
        return {t, false};
      }
    }
    return {run_cap, true};
  }

  for (std::int64_t t = 1; t <= run_cap; ++t) {
    double votes = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = std::max(0.0, w[i]) + source.next(i, t);
      if (w[i] > level[i]) votes += layout.weight[i];
    }
    if (quota_met(votes, layout.quota)) {
      if (triggering) {
        triggering->clear();
        for (std::size_t i = 0; i < n; ++i)
          if (w[i] > level[i]) triggering->push_back(layout.ids[i]);
      }
      return {t, false};
    }
  }
  return {run_cap, true};
}

/// Record of the running maximum of a rule's score S_t, where the rule
/// fires at scalar threshold h exactly when S_t > h. Because the first
/// passage above any h happens at a record time, the records determine
/// the stop time for every h up to the largest level simulated.
struct LadderRecord {
  std::int64_t time;
  double score;
};

/// One resumable trial tracing the score ladder. Per-sensor streams are the
/// same ones run_fixed reads, so both routes agree trial by trial.
template <class Source>
class LadderTrial {
 public:
  LadderTrial(const RuleLayout& layout, const std::vector<double>& inverse_scale, Source source)
      : layout_(&layout), inv_scale_(&inverse_scale), source_(std::move(source)), w_(layout.size(), 0.0) {
    if (layout.one_shot) peak_.assign(layout.size(), -std::numeric_limits<double>::infinity());
  }

  /// Advances until the score exceeds `level` or the run cap is reached.
  void extend(double level, std::int64_t run_cap) {
    while (best_ <= level && t_ < run_cap) step();
    if (best_ <= level && t_ >= run_cap) capped_ = true;
  }

  bool covers(double h) const noexcept { return best_ > h || capped_; }
  double best() const noexcept { return best_; }
  std::int64_t time() const noexcept { return t_; }
  const std::vector<LadderRecord>& records() const noexcept { return records_; }

  /// Stop time at threshold h; nullopt means censored at the run cap.
  std::optional<std::int64_t> stop_time(double h) const {
    auto it = std::upper_bound(records_.begin(), records_.end(), h,
                               [](double value, const LadderRecord& r) { return value < r.score; });
    if (it != records_.end()) return it->time;
    if (!capped_) throw std::logic_error("LadderTrial::stop_time: threshold beyond the simulated level");
    return std::nullopt;
  }

  /// Lower bound on the stop time at h using only what has been simulated.
  std::int64_t stop_time_lower_bound(double h) const {
    auto it = std::upper_bound(records_.begin(), records_.end(), h,
                               [](double value, const LadderRecord& r) { return value < r.score; });
    return it != records_.end() ? it->time : t_ + 1;
  }

 private:
  void step() {
    const std::size_t n = layout_->size();
    const auto& inv = *inv_scale_;
    ++t_;
    if (layout_->aggregate) {
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += source_.next(i, t_);
      agg_ = std::max(0.0, agg_) + z;
      if (agg_ > best_) record(agg_);
      return;
    }
    if (layout_->one_shot) {
      bool moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        w_[i] = std::max(0.0, w_[i]) + source_.next(i, t_);
        const double v = w_[i] * inv[i];
        if (v > peak_[i]) {
          peak_[i] = v;
          moved = true;
        }
      }
      if (moved && count_above(peak_, best_) >= layout_->quota) record(kth_largest(peak_));
      return;
    }
    scaled_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      w_[i] = std::max(0.0, w_[i]) + source_.next(i, t_);
      scaled_[i] = w_[i] * inv[i];
    }
    if (layout_->weighted) {
      double votes = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (scaled_[i] > best_) votes += layout_->weight[i];
      if (quota_met(votes, layout_->quota)) record(weighted_score());
    } else if (count_above(scaled_, best_) >= layout_->quota) {
      record(kth_largest(scaled_));
    }
  }

  static double count_above(const std::vector<double>& v, double level) noexcept {
    double c = 0.0;
    for (double x : v) c += x > level ? 1.0 : 0.0;
    return c;
  }

  double kth_largest(const std::vector<double>& v) {
    scratch_ = v;
    const auto k = static_cast<std::ptrdiff_t>(layout_->quota) - 1;
    std::nth_element(scratch_.begin(), scratch_.begin() + k, scratch_.end(), std::greater<>{});
    return scratch_[static_cast<std::size_t>(k)];
  }

  // Largest h with sum_i alpha_i 1{v_i > h} >= M: walk values in descending
  // order and stop where the cumulative weight first reaches M.
  double weighted_score() {
    order_.resize(scaled_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return scaled_[a] > scaled_[b]; });
    double cum = 0.0;
    for (std::size_t j : order_) {
      cum += layout_->weight[j];
      if (quota_met(cum, layout_->quota)) return scaled_[j];
    }
    return -std::numeric_limits<double>::infinity();
  }

  void record(double score) {
    best_ = score;
    records_.push_back({t_, score});
  }

  const RuleLayout* layout_;
  const std::vector<double>* inv_scale_;
  Source source_;
  std::vector<double> w_;
  std::vector<double> peak_;
  std::vector<double> scaled_;
  std::vector<double> scratch_;
  std::vector<std::size_t> order_;
  std::vector<LadderRecord> records_;
  double agg_ = 0.0;
  double best_ = -std::numeric_limits<double>::infinity();
  std::int64_t t_ = 0;
  bool capped_ = false;
};

}  // namespace detail
}  // namespace hetdqcd
