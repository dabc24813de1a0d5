#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "hetdqcd/rng.hpp"

namespace hetdqcd {

/// Which measure drives the observations: P_inf (no change ever) or P_0
/// (change before the first sample).
enum class Regime { PreChange, PostChange };

/// Observation family contract. A family needs sampling, a log-density and
/// ADL-visible kld(pre, post) / llr_variance(pre, post) overloads; fusion
/// and metrics code is written against this concept only.
template <class D>
concept Distribution = requires(const D d, double x, Xoshiro256pp& engine) {
  { d.sample(engine) } -> std::convertible_to<double>;
  { d.log_density(x) } -> std::convertible_to<double>;
  { kld(d, d) } -> std::convertible_to<double>;
  { llr_variance(d, d) } -> std::convertible_to<double>;
};

class Gaussian {
 public:
  Gaussian(double mean, double variance) : mean_(mean), variance_(variance) {
    if (!std::isfinite(mean)) throw std::invalid_argument("Gaussian: mean must be finite");
    if (!(variance > 0.0) || !std::isfinite(variance))
      throw std::invalid_argument("Gaussian: variance must be finite and > 0, got " + std::to_string(variance));
    stddev_ = std::sqrt(variance);
    log_norm_ = -0.5 * std::log(2.0 * std::numbers::pi * variance);
  }

  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return variance_; }
  double stddev() const noexcept { return stddev_; }

  double log_density(double x) const noexcept {
    const double d = x - mean_;
    return log_norm_ - d * d / (2.0 * variance_);
  }

  template <class Engine>
  double sample(Engine& engine) const {
    return mean_ + stddev_ * boost::random::normal_distribution<double>{}(engine);
  }

  friend bool operator==(const Gaussian& a, const Gaussian& b) noexcept {
    return a.mean_ == b.mean_ && a.variance_ == b.variance_;
  }

 private:
  double mean_;
  double variance_;
  double stddev_ = 1.0;
  double log_norm_ = 0.0;
};

/// D(post || pre). Direction is fixed: the CUSUM drift under the
/// post-change measure.
inline double kld(const Gaussian& pre, const Gaussian& post) noexcept {
  const double d = post.mean() - pre.mean();
  const double ratio = post.variance() / pre.variance();
  return 0.5 * (ratio + d * d / pre.variance() - 1.0 - std::log(ratio));
}

/// Variance of ln(g(X)/f(X)) for X ~ post. The LLR is quadratic in a
/// standard normal n: Z = const + (d s / v_f) n + (v_g / (2 v_f) - 1/2) n^2.
inline double llr_variance(const Gaussian& pre, const Gaussian& post) noexcept {
  const double d = post.mean() - pre.mean();
  const double vf = pre.variance();
  const double ratio = post.variance() / vf;
  return d * d * post.variance() / (vf * vf) + 0.5 * (ratio - 1.0) * (ratio - 1.0);
}

static_assert(Distribution<Gaussian>);

template <Distribution D>
double llr(double x, const D& pre, const D& post) {
  return post.log_density(x) - pre.log_density(x);
}

/// Gaussian LLR, ln(g/f)(x) = -1/2 ln(v_g/v_f) + (x-m_f)^2/(2v_f) - (x-m_g)^2/(2v_g).
inline double llr(double x, const Gaussian& pre, const Gaussian& post) noexcept {
  const double df = x - pre.mean();
  const double dg = x - post.mean();
  return -0.5 * std::log(post.variance() / pre.variance()) + df * df / (2.0 * pre.variance()) -
         dg * dg / (2.0 * post.variance());
}

/// Precomputed LLR evaluator used in the simulation hot loops.
template <Distribution D>
class LlrFunction {
 public:
  LlrFunction(const D& pre, const D& post) : pre_(pre), post_(post) {}
  double operator()(double x) const { return post_.log_density(x) - pre_.log_density(x); }

 private:
  D pre_;
  D post_;
};

template <>
class LlrFunction<Gaussian> {
 public:
  LlrFunction(const Gaussian& pre, const Gaussian& post) {
    const double vf = pre.variance();
    const double vg = post.variance();
    quad_ = 0.5 / vf - 0.5 / vg;
    lin_ = post.mean() / vg - pre.mean() / vf;
    const0_ = -0.5 * std::log(vg / vf) + pre.mean() * pre.mean() / (2.0 * vf) - post.mean() * post.mean() / (2.0 * vg);
  }
  double operator()(double x) const noexcept { return const0_ + x * (lin_ + quad_ * x); }

 private:
  double const0_ = 0.0;
  double lin_ = 0.0;
  double quad_ = 0.0;
};

template <Distribution D, class Engine>
double sample(const D& dist, Engine& engine) {
  return dist.sample(engine);
}

namespace detail {
// Out-of-class so ADL is not shadowed by the group's kld()/llr_variance() members.
template <Distribution D>
double family_kld(const D& pre, const D& post) {
  return kld(pre, post);
}
template <Distribution D>
double family_llr_variance(const D& pre, const D& post) {
  return llr_variance(pre, post);
}
}  // namespace detail

/// Sensor identity (k, l): sensor k in [1, N_l] of group l in [1, L].
struct SensorId {
  int k = 1;
  int l = 1;
  friend auto operator<=>(const SensorId&, const SensorId&) = default;
};

/// One heterogeneity class. KLD and LLR variance are computed once here.
template <Distribution D>
class BasicSensorGroup {
 public:
  BasicSensorGroup(int index, int count, D pre, D post)
      : index_(index), count_(count), pre_(std::move(pre)), post_(std::move(post)) {
    if (index < 1) throw std::invalid_argument("sensor group index must be >= 1");
    if (count < 1) throw std::invalid_argument("group " + std::to_string(index) + ": sensor count must be >= 1");
    kld_ = detail::family_kld(pre_, post_);
    llr_var_ = detail::family_llr_variance(pre_, post_);
    if (!(kld_ > 0.0) || !std::isfinite(kld_))
      throw std::invalid_argument("group " + std::to_string(index) +
                                  ": pre- and post-change distributions must have positive KLD");
    if (!(llr_var_ > 0.0) || !std::isfinite(llr_var_))
      throw std::invalid_argument("group " + std::to_string(index) + ": LLR variance must be finite and > 0");
  }

  int index() const noexcept { return index_; }
  int count() const noexcept { return count_; }
  const D& pre() const noexcept { return pre_; }
  const D& post() const noexcept { return post_; }
  double kld() const noexcept { return kld_; }
  double llr_variance() const noexcept { return llr_var_; }

 private:
  int index_;
  int count_;
  D pre_;
  D post_;
  double kld_ = 0.0;
  double llr_var_ = 0.0;
};

template <Distribution D>
class BasicNetwork {
 public:
  using Group = BasicSensorGroup<D>;
  using distribution_type = D;

  explicit BasicNetwork(std::vector<Group> groups) : groups_(std::move(groups)) {
    if (groups_.empty()) throw std::invalid_argument("network needs at least one sensor group");
    for (std::size_t i = 0; i < groups_.size(); ++i) {
      if (groups_[i].index() != static_cast<int>(i) + 1)
        throw std::invalid_argument("group indices must be 1..L without gaps");
      offsets_.push_back(total_);
      total_ += groups_[i].count();
      for (int k = 0; k < groups_[i].count(); ++k) group_of_.push_back(static_cast<int>(i) + 1);
    }
  }

  /// Convenience: groups given as (count, pre, post) in order.
  struct GroupSpec {
    int count;
    D pre;
    D post;
  };
  static BasicNetwork from_specs(const std::vector<GroupSpec>& specs) {
    std::vector<Group> groups;
    groups.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
      groups.emplace_back(static_cast<int>(i) + 1, specs[i].count, specs[i].pre, specs[i].post);
    return BasicNetwork(std::move(groups));
  }

  int sensor_count() const noexcept { return total_; }
  int group_count() const noexcept { return static_cast<int>(groups_.size()); }
  const std::vector<Group>& groups() const noexcept { return groups_; }
  /// 1-based group lookup.
  const Group& group(int l) const { return groups_.at(static_cast<std::size_t>(l - 1)); }

  /// Sensors are flattened group-major: all of group 1, then group 2, ...
  int flat_index(SensorId id) const {
    if (id.l < 1 || id.l > group_count() || id.k < 1 || id.k > group(id.l).count())
      throw std::out_of_range("sensor (" + std::to_string(id.k) + "," + std::to_string(id.l) + ") not in network");
    return offsets_[static_cast<std::size_t>(id.l - 1)] + id.k - 1;
  }
  SensorId sensor_at(int flat) const {
    const int l = group_of_.at(static_cast<std::size_t>(flat));
    return {flat - offsets_[static_cast<std::size_t>(l - 1)] + 1, l};
  }
  int group_of(int flat) const { return group_of_.at(static_cast<std::size_t>(flat)); }
  const Group& group_of_sensor(int flat) const { return group(group_of(flat)); }

  std::vector<double> klds() const {
    std::vector<double> out;
    for (const auto& g : groups_) out.push_back(g.kld());
    return out;
  }

 private:
  std::vector<Group> groups_;
  std::vector<int> offsets_;
  std::vector<int> group_of_;
  int total_ = 0;
};

using SensorGroup = BasicSensorGroup<Gaussian>;
using Network = BasicNetwork<Gaussian>;

}  // namespace hetdqcd
