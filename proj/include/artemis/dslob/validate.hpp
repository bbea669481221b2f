#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::dslob {

using numcore::Mat;
using numcore::Vec;

struct ValidationThresholds {
  double ks_p = 0.05;
  int acf_lags = 50;
  double corr_mean_absdiff = 0.03;
  double tail_quantile = 0.995;
  double tail_rel_err = 0.05;
};

struct ValidationReport {
  double ks_stat = 0.0;
  double ks_p = 1.0;
  double acf_max_dev = 0.0;
  double acf_band = 0.0;
  double corr_mean_absdiff = 0.0;
  double tail_rel_err = 0.0;
  bool ks_pass = true, acf_pass = true, corr_pass = true, tail_pass = true;
  bool pass = true;
};

/// Kolmogorov survival function Q(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_q(double x) {
  if (x < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
    sum += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

struct KsResult {
  double stat = 0.0;
  double p = 1.0;
};

/// Two-sample KS statistic with the asymptotic p-value (Stephens correction).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, d == 0.0 ? 1.0 : kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

inline Vec autocorrelation(const Vec& x, int max_lag) {
  const double m = x.mean();
  const Vec c = x.array() - m;
  const double denom = c.squaredNorm();
  Vec acf = Vec::Zero(max_lag + 1);
  for (int k = 0; k <= max_lag && k < x.size(); ++k)
    acf[k] = denom > 0.0 ? c.head(x.size() - k).dot(c.tail(x.size() - k)) / denom : 0.0;
  return acf;
}

/// Pearson correlation matrix; constant columns correlate 0 with everything.
inline Mat correlation_matrix(const Mat& x) {
  const Mat c = x.rowwise() - x.colwise().mean();
  const Vec sd = c.colwise().norm().transpose();
  Mat corr = c.transpose() * c;
  for (Eigen::Index i = 0; i < corr.rows(); ++i)
    for (Eigen::Index j = 0; j < corr.cols(); ++j)
      corr(i, j) = (sd[i] > 0.0 && sd[j] > 0.0) ? corr(i, j) / (sd[i] * sd[j]) : 0.0;
  return corr;
}

/// Linear-interpolation (type 7) sample quantile.
inline double sample_quantile(std::vector<double> x, double q) {
  require(!x.empty(), "sample_quantile: empty sample");
  std::sort(x.begin(), x.end());
  const double h = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// The four gates, comparing a synthetic (rows = time, cols = features) to
/// the seed, with returns taken from `return_col`.
inline ValidationReport validate_synthetic(const Mat& synthetic, const Mat& seed, Eigen::Index return_col = 1,
                                           const ValidationThresholds& th = {}) {
  require(synthetic.rows() > 1 && seed.rows() > 1, "validate_synthetic: empty input");
  require(synthetic.cols() == seed.cols(), "validate_synthetic: feature count mismatch");
  ValidationReport rep;
  const Vec rs = synthetic.col(return_col).tail(synthetic.rows() - 1);
  const Vec rd = seed.col(return_col).tail(seed.rows() - 1);

  const auto ks = ks_two_sample({rs.data(), rs.data() + rs.size()}, {rd.data(), rd.data() + rd.size()});
  rep.ks_stat = ks.stat;
  rep.ks_p = ks.p;
  rep.ks_pass = ks.p > th.ks_p;

  const Vec as = autocorrelation(rs.array().square().matrix(), th.acf_lags);
  const Vec ad = autocorrelation(rd.array().square().matrix(), th.acf_lags);
  rep.acf_max_dev = (as - ad).tail(th.acf_lags).cwiseAbs().maxCoeff();
  rep.acf_band = 2.0 / std::sqrt(static_cast<double>(rs.size()));
  rep.acf_pass = rep.acf_max_dev < rep.acf_band;

  const Mat cs = correlation_matrix(synthetic), cd = correlation_matrix(seed);
  const auto d = cs.rows();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (i != j) sum += std::abs(cs(i, j) - cd(i, j));
  rep.corr_mean_absdiff = d > 1 ? sum / static_cast<double>(d * (d - 1)) : 0.0;
  rep.corr_pass = rep.corr_mean_absdiff < th.corr_mean_absdiff;

  const Vec ns = -rs, nd = -rd;
  const double qs = sample_quantile({ns.data(), ns.data() + ns.size()}, th.tail_quantile);
  const double qd = sample_quantile({nd.data(), nd.data() + nd.size()}, th.tail_quantile);
  rep.tail_rel_err = qd != 0.0 ? std::abs(qs - qd) / std::abs(qd) : (qs == 0.0 ? 0.0 : INFINITY);
  rep.tail_pass = rep.tail_rel_err <= th.tail_rel_err;

  rep.pass = rep.ks_pass && rep.acf_pass && rep.corr_pass && rep.tail_pass;
  return rep;
}

}  // namespace artemis::dslob
