#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "hetdqcd/fusion_spec.hpp"
#include "hetdqcd/models.hpp"
#include "hetdqcd/parallel.hpp"
#include "hetdqcd/rng.hpp"

namespace hetdqcd {

/// lambda: [N] -> [L]. Groups are rearranged by ascending scaling c (stable
/// in group index on ties) and m maps to the first rearranged group whose
/// cumulative sensor count reaches m. Right-closed intervals keep
/// |lambda^{-1}(l)| = N^{(l)}.
class LambdaMap {
 public:
  LambdaMap(std::vector<int> group_order, std::vector<int> counts_sorted, std::vector<double> scale_sorted)
      : order_(std::move(group_order)), counts_(std::move(counts_sorted)), scale_(std::move(scale_sorted)) {
    int acc = 0;
    for (int c : counts_) cumulative_.push_back(acc += c);
  }

  int sensors() const noexcept { return cumulative_.empty() ? 0 : cumulative_.back(); }
  int groups() const noexcept { return static_cast<int>(counts_.size()); }

  /// Rearranged position l = lambda(m) in [1, L].
  int operator()(int m) const {
    if (m < 1 || m > sensors()) throw std::out_of_range("lambda: m outside [1, N]");
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), m);
    return static_cast<int>(it - cumulative_.begin()) + 1;
  }
  /// Original group index behind lambda(m).
  int group(int m) const { return order_[static_cast<std::size_t>((*this)(m) - 1)]; }
  /// c^{(lambda(m))}.
  double scale(int m) const { return scale_[static_cast<std::size_t>((*this)(m) - 1)]; }

  /// N^{(l)}, c^{(l)} and the original index of rearranged group l.
  int count_sorted(int l) const { return counts_.at(static_cast<std::size_t>(l - 1)); }
  double scale_sorted(int l) const { return scale_.at(static_cast<std::size_t>(l - 1)); }
  int group_sorted(int l) const { return order_.at(static_cast<std::size_t>(l - 1)); }
  const std::vector<int>& cumulative() const noexcept { return cumulative_; }

 private:
  std::vector<int> order_;
  std::vector<int> counts_;
  std::vector<double> scale_;
  std::vector<int> cumulative_;
};

template <Distribution D>
LambdaMap lambda_map(const BasicNetwork<D>& network, std::span<const double> scale) {
  if (static_cast<int>(scale.size()) != network.group_count())
    throw std::invalid_argument("lambda_map: need one scaling entry per group");
  for (double c : scale)
    if (!(c > 0.0)) throw std::invalid_argument("lambda_map: scaling entries must be > 0");
  std::vector<int> order(scale.size());
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scale[static_cast<std::size_t>(a - 1)] < scale[static_cast<std::size_t>(b - 1)];
  });
  std::vector<int> counts;
  std::vector<double> sorted;
  for (int l : order) {
    counts.push_back(network.group(l).count());
    sorted.push_back(scale[static_cast<std::size_t>(l - 1)]);
  }
  return LambdaMap(std::move(order), std::move(counts), std::move(sorted));
}

/// lambda under the KLD scaling c_l = I_l.
template <Distribution D>
LambdaMap lambda_map(const BasicNetwork<D>& network) {
  const auto klds = network.klds();
  return lambda_map(network, std::span<const double>(klds));
}

/// Monte Carlo estimate of xi_M, the mean of the M-th smallest of
/// independent G_{k,l} ~ N(0, sigma_l^2 / I_l^2).
struct XiEstimate {
  int m = 0;
  double xi = 0.0;
  double std_error = 0.0;
  std::int64_t samples = 0;
};

/// All xi_M from one shared set of draws, plus standard errors of the
/// paired statistics the invariants are stated in.
struct XiTable {
  std::vector<XiEstimate> entries;           // entries[M-1]
  std::vector<double> step_mean;             // xi_{M+1} - xi_M
  std::vector<double> step_std_error;
  std::vector<double> mirror_mean;           // xi_M + xi_{N+1-M}
  std::vector<double> mirror_std_error;

  const XiEstimate& operator[](int m) const { return entries.at(static_cast<std::size_t>(m - 1)); }
  int size() const noexcept { return static_cast<int>(entries.size()); }
};

/// Order-statistic table for independent N(0, sd_i^2) variables.
inline XiTable xi_table(std::span<const double> stddev, std::int64_t samples, std::uint64_t seed,
                        unsigned threads = 0) {
  const auto n = stddev.size();
  if (n == 0) throw std::invalid_argument("xi_table: no variables");
  if (samples < 2) throw std::invalid_argument("xi_table: need at least 2 samples");
  // Fixed chunking keeps the reduction order independent of thread count.
  constexpr std::size_t kChunks = 64;
  struct Sums {
    std::vector<double> x, x2, step, step2, mirror, mirror2;
  };
  std::vector<Sums> partial(kChunks);
  parallel_for(kChunks, threads, [&](std::size_t c) {
    auto& s = partial[c];
    s.x.assign(n, 0.0);
    s.x2.assign(n, 0.0);
    s.step.assign(n, 0.0);
    s.step2.assign(n, 0.0);
    s.mirror.assign(n, 0.0);
    s.mirror2.assign(n, 0.0);
    const auto begin = static_cast<std::int64_t>(c) * samples / static_cast<std::int64_t>(kChunks);
    const auto end = static_cast<std::int64_t>(c + 1) * samples / static_cast<std::int64_t>(kChunks);
    auto engine = make_engine({seed, StreamDomain::OrderStatistic, c, 0});
    boost::random::normal_distribution<double> normal;
    std::vector<double> g(n);
    for (auto i = begin; i < end; ++i) {
      for (std::size_t k = 0; k < n; ++k) g[k] = stddev[k] * normal(engine);
      std::sort(g.begin(), g.end());
      for (std::size_t k = 0; k < n; ++k) {
        s.x[k] += g[k];
        s.x2[k] += g[k] * g[k];
        const double mir = g[k] + g[n - 1 - k];
        s.mirror[k] += mir;
        s.mirror2[k] += mir * mir;
        if (k + 1 < n) {
          const double d = g[k + 1] - g[k];
          s.step[k] += d;
          s.step2[k] += d * d;
        }
      }
    }
  });
  std::vector<double> x(n), x2(n), st(n), st2(n), mi(n), mi2(n);
  for (const auto& s : partial) {
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += s.x[k];
      x2[k] += s.x2[k];
      st[k] += s.step[k];
      st2[k] += s.step2[k];
      mi[k] += s.mirror[k];
      mi2[k] += s.mirror2[k];
    }
  }
  const auto ns = static_cast<double>(samples);
  auto mean_se = [&](double sum, double sum2) {
    const double mean = sum / ns;
    const double var = std::max(0.0, (sum2 - ns * mean * mean) / (ns - 1.0));
    return std::pair{mean, std::sqrt(var / ns)};
  };
  XiTable out;
  for (std::size_t k = 0; k < n; ++k) {
    const auto [m, se] = mean_se(x[k], x2[k]);
    out.entries.push_back({static_cast<int>(k) + 1, m, se, samples});
    const auto [mm, mse] = mean_se(mi[k], mi2[k]);
    out.mirror_mean.push_back(mm);
    out.mirror_std_error.push_back(mse);
    if (k + 1 < n) {
      const auto [sm, sse] = mean_se(st[k], st2[k]);
      out.step_mean.push_back(sm);
      out.step_std_error.push_back(sse);
    }
  }
  return out;
}

/// Per-sensor standard deviations sigma_l / I_l in flat order.
template <Distribution D>
std::vector<double> xi_stddevs(const BasicNetwork<D>& network) {
  std::vector<double> sd;
  for (const auto& g : network.groups())
    for (int k = 0; k < g.count(); ++k) sd.push_back(std::sqrt(g.llr_variance()) / g.kld());
  return sd;
}

template <Distribution D>
XiTable xi_table(const BasicNetwork<D>& network, std::int64_t samples, std::uint64_t seed, unsigned threads = 0) {
  const auto sd = xi_stddevs(network);
  return xi_table(std::span<const double>(sd), samples, seed, threads);
}

template <Distribution D>
XiEstimate xi_m(const BasicNetwork<D>& network, int m, std::int64_t samples, std::uint64_t seed,
                unsigned threads = 0) {
  if (m < 1 || m > network.sensor_count()) throw std::out_of_range("xi_m: M outside [1, N]");
  return xi_table(network, samples, seed, threads)[m];
}

namespace detail {
inline void check_gamma(double gamma) {
  if (!(gamma > 1.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite and > 1");
}
inline void check_m(int m, int n) {
  if (m < 1 || m > n) throw std::out_of_range("M outside [1, N]");
}
}  // namespace detail

/// First-order EDD under c_l = I_l: log(gamma)/I_{lambda(M)} for the M-th
/// alarm rule, log(gamma)/sum_{m<=M} I_{lambda(m)} for M-voting.
template <Distribution D>
double predict_edd_first_order(const BasicNetwork<D>& network, RuleFamily family, int m, double gamma) {
  detail::check_gamma(gamma);
  detail::check_m(m, network.sensor_count());
  const auto lam = lambda_map(network);
  if (family == RuleFamily::OneShot) return std::log(gamma) / lam.scale(m);
  double denom = 0.0;
  for (int j = 1; j <= m; ++j) denom += lam.scale(j);
  return std::log(gamma) / denom;
}

/// first + xi_M sqrt(first). Exact asymptotics for the M-th alarm rule, an
/// upper bound for voting.
template <Distribution D>
double predict_edd_second_order(const BasicNetwork<D>& network, RuleFamily family, int m, double gamma, double xi) {
  const double first = predict_edd_first_order(network, family, m, gamma);
  return first + xi * std::sqrt(first);
}

/// First-order bracket on E_0[rho] for a general scaling c. Groups enter
/// through min and max of c_l/I_l; the rearranged group lambda(M) supplies
/// I_{lambda(M)}/c_{lambda(M)} in the voting lower bound.
struct EddBounds {
  double lower = 0.0;
  double upper = 0.0;
};

template <Distribution D>
EddBounds predict_edd_bounds(const BasicNetwork<D>& network, std::span<const double> scale, RuleFamily family, int m,
                             double gamma) {
  detail::check_gamma(gamma);
  detail::check_m(m, network.sensor_count());
  const auto lam = lambda_map(network, scale);
  double r_min = std::numeric_limits<double>::infinity();
  double r_max = 0.0;
  for (int l = 1; l <= network.group_count(); ++l) {
    const double r = scale[static_cast<std::size_t>(l - 1)] / network.group(l).kld();
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  const double lg = std::log(gamma);
  if (family == RuleFamily::OneShot) return {r_min * lg / lam.scale(m), r_max * lg / lam.scale(m)};
  double sum_c = 0.0;
  double sum_i = 0.0;
  for (int j = 1; j <= m; ++j) {
    sum_c += lam.scale(j);
    sum_i += network.group(lam.group(j)).kld();
  }
  const double i_over_c = network.group(lam.group(m)).kld() / lam.scale(m);
  return {r_min * i_over_c * lg / sum_i, r_max * lg / sum_c};
}

struct Recommendation {
  RuleFamily family = RuleFamily::OneShot;
  std::vector<int> candidates;
  int pick = 1;
  std::string rationale;
};

/// Choice of M under the KLD scaling. M-th alarm: every M in a lambda block
/// has the same first-order delay and xi_M increases in M, so only block
/// starts M = 1 + sum_{j<l} N^{(j)} are candidates; the last, N - N^{(L)} + 1,
/// has the largest first-order rate. Voting: M = N.
template <Distribution D>
Recommendation recommend_m(const BasicNetwork<D>& network, RuleFamily family) {
  const auto lam = lambda_map(network);
  Recommendation r;
  r.family = family;
  const int n = network.sensor_count();
  if (family == RuleFamily::Voting) {
    r.candidates = {n};
    r.pick = n;
    r.rationale = "voting: M = N maximises sum_{m<=M} I_lambda(m), the first-order rate";
    return r;
  }
  int start = 1;
  for (int l = 1; l <= lam.groups(); ++l) {
    r.candidates.push_back(start);
    start += lam.count_sorted(l);
  }
  r.pick = n - lam.count_sorted(lam.groups()) + 1;
  if (lam.groups() == 1)
    r.rationale = "single group: first alarm (M = 1)";
  else
    r.rationale = "M-th alarm: block starts of lambda; M = N - N^(L) + 1 reaches the most informative group "
                  "with the smallest xi_M";
  return r;
}

/// True when N_L < N/2 for the most informative group (largest KLD; ties go
/// to the later group), i.e. first alarm within that group beats every
/// anonymous M-th alarm rule for large gamma.
template <Distribution D>
bool group_selection_advantage(const BasicNetwork<D>& network) {
  const auto lam = lambda_map(network);
  const int top = lam.count_sorted(lam.groups());
  return 2 * top < network.sensor_count();
}

}  // namespace hetdqcd
