#pragma once

// Independent numeric references for the tests: plain quadrature on the
// densities, sharing no code with the library.

#include <cmath>
#include <functional>
#include <numbers>

namespace oracle {

inline double normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

inline double normal_log_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * d * d / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

struct Pair {
  double pre_mean, pre_var, post_mean, post_var;

  double llr(double x) const {
    return normal_log_pdf(x, post_mean, post_var) - normal_log_pdf(x, pre_mean, pre_var);
  }
  double lo() const { return post_mean - 14.0 * std::sqrt(post_var); }
  double hi() const { return post_mean + 14.0 * std::sqrt(post_var); }

  /// E_g[log g/f].
  double kld() const {
    return simpson([&](double x) { return normal_pdf(x, post_mean, post_var) * llr(x); }, lo(), hi());
  }
  /// Var_g[log g/f].
  double llr_variance() const {
    const double m = kld();
    return simpson(
        [&](double x) {
          const double d = llr(x) - m;
          return normal_pdf(x, post_mean, post_var) * d * d;
        },
        lo(), hi());
  }
};

/// E of the k-th smallest (1-based) of n i.i.d. N(0, 1).
inline double normal_order_statistic(int k, int n) {
  auto binom = [](int a, int b) {
    double r = 1.0;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };
  const double c = k * binom(n, k);
  return simpson(
      [&](double x) {
        const double p = normal_cdf(x);
        return c * x * std::pow(p, k - 1) * std::pow(1.0 - p, n - k) * normal_pdf(x, 0.0, 1.0);
      },
      -12.0, 12.0);
}

}  // namespace oracle
