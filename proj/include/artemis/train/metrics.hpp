#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::train {

using numcore::Vec;

struct MetricsReport {
  double rmse = 0.0;
  double rank_ic = 0.0;
  double dir_acc = 0.0;
  double weighted_r2 = 0.0;
  long n_test = 0;
  bool rank_ic_undefined = false;
};

/// Ranks starting at 1, ties get the average of their positions.
inline Vec average_ranks(const Vec& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[static_cast<Eigen::Index>(a)] < x[static_cast<Eigen::Index>(b)]; });
  Vec r(x.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[static_cast<Eigen::Index>(idx[j + 1])] == x[static_cast<Eigen::Index>(idx[i])]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[static_cast<Eigen::Index>(idx[k])] = avg;
    i = j + 1;
  }
  return r;
}

/// Pearson correlation of average ranks. Returns nullopt-like NaN when either
/// side is constant.
inline double spearman(const Vec& a, const Vec& b) {
  const Vec ra = average_ranks(a), rb = average_ranks(b);
  const Vec da = ra.array() - ra.mean(), db = rb.array() - rb.mean();
  const double den = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (!(den > 0.0)) return std::nan("");
  return std::clamp(da.dot(db) / den, -1.0, 1.0);
}

inline int sign0(double v) { return (v > 0.0) - (v < 0.0); }

/// RMSE, RankIC, directional accuracy around `center` and weighted R^2.
inline MetricsReport evaluate(const Vec& pred, const Vec& target, double center = 0.0, const Vec& weights = Vec()) {
  require(pred.size() == target.size(), "evaluate: prediction and target lengths differ");
  require(pred.size() >= 2, "evaluate: need at least two points");
  require(weights.size() == 0 || weights.size() == pred.size(), "evaluate: weight length mismatch");
  require(pred.allFinite() && target.allFinite(), "evaluate: non-finite input");
  MetricsReport m;
  m.n_test = static_cast<long>(pred.size());
  m.rmse = std::sqrt((pred - target).squaredNorm() / static_cast<double>(pred.size()));
  const double rho = spearman(pred, target);
  m.rank_ic_undefined = std::isnan(rho);
  m.rank_ic = m.rank_ic_undefined ? 0.0 : rho;
  long agree = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) agree += sign0(pred[i] - center) == sign0(target[i] - center);
  m.dir_acc = static_cast<double>(agree) / static_cast<double>(pred.size());
  const Vec w = weights.size() ? weights : Vec::Ones(pred.size());
  const double den = w.dot(target.cwiseAbs2());
  m.weighted_r2 = den > 0.0 ? 1.0 - w.dot((target - pred).cwiseAbs2()) / den : 0.0;
  return m;
}

}  // namespace artemis::train
