#pragma once

#include <cmath>
#include <functional>

#include "artemis/numcore/mlp.hpp"

namespace artemis::oracle {

inline double binomial_log_pmf(int n, int k, double p) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
         (n - k) * std::log1p(-p);
}

/// Smallest k with P(X <= k) >= tail for X ~ Binomial(n, p).
inline int binomial_quantile(int n, double p, double tail) {
  double cdf = 0.0;
  for (int k = 0; k <= n; ++k) {
    cdf += std::exp(binomial_log_pmf(n, k, p));
    if (cdf >= tail) return k;
  }
  return n;
}

/// Lower edge of the central 99% band of the empirical rate of Binomial(n, p).
inline double binomial_lower_band(int n, double p, double level = 0.99) {
  return static_cast<double>(binomial_quantile(n, p, 0.5 * (1.0 - level))) / n;
}

/// Exact law of the number of covered test points for split conformal with
/// n calibration points: Binomial(m, F) with F ~ Beta(k, n + 1 - k).
inline double beta_binomial_log_pmf(int m, int x, double a, double b) {
  auto lbeta = [](double p, double q) { return std::lgamma(p) + std::lgamma(q) - std::lgamma(p + q); };
  return std::lgamma(m + 1.0) - std::lgamma(x + 1.0) - std::lgamma(m - x + 1.0) + lbeta(x + a, m - x + b) - lbeta(a, b);
}

/// Lower edge of the central 99% band of split-conformal empirical coverage.
inline double conformal_coverage_lower_band(int n_cal, int n_test, double alpha, double level = 0.99) {
  const double k = std::ceil((1.0 - alpha) * (n_cal + 1) - 1e-9);
  double cdf = 0.0;
  for (int x = 0; x <= n_test; ++x) {
    cdf += std::exp(beta_binomial_log_pmf(n_test, x, k, n_cal + 1 - k));
    if (cdf >= 0.5 * (1.0 - level)) return static_cast<double>(x) / n_test;
  }
  return 1.0;
}

struct GridOptimum {
  numcore::Vec w;
  double value = -1e300;
};

/// Exhaustive search of a function on the 3-simplex with the given step.
inline GridOptimum simplex3_grid_search(const std::function<double(const numcore::Vec&)>& f, double step) {
  GridOptimum best;
  const int n = static_cast<int>(std::lround(1.0 / step));
  numcore::Vec w(3);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; i + j <= n; ++j) {
      w << i * step, j * step, (n - i - j) * step;
      const double v = f(w);
      if (v > best.value) best = {w, v};
    }
  return best;
}

}  // namespace artemis::oracle
