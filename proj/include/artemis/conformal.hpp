#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::conformal {

using numcore::Mat;
using numcore::Vec;

inline constexpr double kInfiniteWidth = std::numeric_limits<double>::infinity();

struct CalibrationSet {
  std::vector<double> residuals;

  static CalibrationSet from_predictions(const Vec& y, const Vec& y_hat) {
    require(y.size() == y_hat.size(), "CalibrationSet: length mismatch");
    CalibrationSet c;
    for (Eigen::Index i = 0; i < y.size(); ++i) c.residuals.push_back(std::abs(y[i] - y_hat[i]));
    return c;
  }
};

struct PredictionInterval {
  double center = 0.0;
  double half_width = 0.0;
  double alpha = 0.1;

  double lo() const { return center - half_width; }
  double hi() const { return center + half_width; }
  bool contains(double y) const { return std::isinf(half_width) || (y >= lo() && y <= hi()); }
};

inline std::size_t order_index(std::size_t n, double alpha) {
  // ceil((1 - alpha)(n + 1)), guarded against representation error in the product
  const double raw = (1.0 - alpha) * static_cast<double>(n + 1);
  const double r = std::round(raw);
  return static_cast<std::size_t>(std::abs(raw - r) < 1e-9 ? r : std::ceil(raw));
}

/// k-th smallest residual with k = ceil((1 - alpha)(n + 1)); +inf when k > n.
inline double split_quantile(std::vector<double> residuals, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "split_quantile: alpha must lie in (0, 1)");
  require(!residuals.empty(), "split_quantile: empty calibration set");
  for (double r : residuals) require(r >= 0.0 && !std::isnan(r), "split_quantile: residuals must be nonnegative");
  const std::size_t k = order_index(residuals.size(), alpha);
  if (k > residuals.size()) return kInfiniteWidth;
  std::nth_element(residuals.begin(), residuals.begin() + static_cast<std::ptrdiff_t>(k - 1), residuals.end());
  return residuals[k - 1];
}

inline double split_quantile(const CalibrationSet& cal, double alpha) { return split_quantile(cal.residuals, alpha); }

/// Rolling-window quantile over the most recent W residuals.
class AdaptiveQuantile {
 public:
  AdaptiveQuantile(std::size_t window, double alpha) : window_(window), alpha_(alpha) {
    require(window >= 1, "AdaptiveQuantile: window must be at least 1");
    require(alpha > 0.0 && alpha < 1.0, "AdaptiveQuantile: alpha must lie in (0, 1)");
  }

  /// Seeds the window, e.g. with the calibration residuals.
  void prime(const std::vector<double>& residuals) {
    for (double r : residuals) push(r);
  }

  double push(double residual) {
    require(residual >= 0.0, "AdaptiveQuantile: residuals must be nonnegative");
    recent_.push_back(residual);
    if (recent_.size() > window_) recent_.pop_front();
    return quantile();
  }

  double quantile() const {
    if (recent_.empty()) return kInfiniteWidth;
    return split_quantile(std::vector<double>(recent_.begin(), recent_.end()), alpha_);
  }

  std::size_t size() const { return recent_.size(); }

 private:
  std::size_t window_;
  double alpha_;
  std::deque<double> recent_;
};

/// q(t) after each arrival of the stream.
inline std::vector<double> adaptive_quantile(const std::vector<double>& stream, std::size_t window, double alpha) {
  AdaptiveQuantile aq(window, alpha);
  std::vector<double> q;
  q.reserve(stream.size());
  for (double r : stream) q.push_back(aq.push(r));
  return q;
}

inline double coverage_check(const std::vector<PredictionInterval>& intervals, const Vec& y) {
  require(static_cast<Eigen::Index>(intervals.size()) == y.size(), "coverage_check: length mismatch");
  require(!intervals.empty(), "coverage_check: no intervals");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i) hit += intervals[i].contains(y[static_cast<Eigen::Index>(i)]);
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

// ---------------------------------------------------------------------------
// Kelly allocation on the probability simplex

struct AllocationProblem {
  Vec mu_hat;
  Mat sigma_hat;  // P x P
  double gamma = 5.0;

  /// Diagonal covariance with entries q_p^2 from interval half-widths.
  static AllocationProblem from_intervals(const Vec& mu_hat, const Vec& half_widths, double gamma) {
    require(mu_hat.size() == half_widths.size(), "AllocationProblem: length mismatch");
    return {mu_hat, half_widths.array().square().matrix().asDiagonal(), gamma};
  }

  double objective(const Vec& w) const { return w.dot(mu_hat) - 0.5 * gamma * w.dot(sigma_hat * w); }

  void validate() const {
    require(gamma > 0.0, "kelly_allocate: gamma must be positive");
    require(mu_hat.size() >= 1 && sigma_hat.rows() == mu_hat.size() && sigma_hat.cols() == mu_hat.size(),
            "kelly_allocate: shape mismatch");
    require(mu_hat.allFinite() && sigma_hat.allFinite(), "kelly_allocate: non-finite input");
    require((sigma_hat.array() >= 0.0).all(), "kelly_allocate: covariance entries must be nonnegative");
  }
};

/// Euclidean projection onto {w >= 0, sum w = 1} by sort and threshold.
inline Vec project_simplex(const Vec& v) {
  const auto n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  Vec w = (v.array() - theta).max(0.0);
  return w / w.sum();
}

struct KellyOptions {
  double tolerance = 1e-8;
  int max_iter = 10000;
};

struct KellyResult {
  Vec weights;
  int iterations = 0;
  double residual = 0.0;
};

/// Projected gradient ascent with step 1 / (gamma * lambda_max(Sigma)). The
/// stationarity residual is |w - P(w + grad f(w))|_inf.
inline KellyResult kelly_allocate(const AllocationProblem& p, const KellyOptions& opt = {}) {
  p.validate();
  const auto n = p.mu_hat.size();
  const Mat sym = 0.5 * (p.sigma_hat + p.sigma_hat.transpose());
  const double lmax = Eigen::SelfAdjointEigenSolver<Mat>(sym, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double step = lmax > 0.0 ? 1.0 / (p.gamma * lmax) : 1.0;
  auto grad = [&](const Vec& w) -> Vec { return p.mu_hat - p.gamma * (sym * w); };
  auto stationarity = [&](const Vec& w) { return (w - project_simplex(w + grad(w))).lpNorm<Eigen::Infinity>(); };

  // Linear problem: all weight on the maximal expected return, ties split.
  if (lmax <= 0.0) {
    const double best = p.mu_hat.maxCoeff();
    Vec w = (p.mu_hat.array() == best).cast<double>().matrix();
    w /= w.sum();
    return {w, 0, stationarity(w)};
  }

  Vec w = Vec::Constant(n, 1.0 / static_cast<double>(n));
  double res = stationarity(w);
  int it = 0;
  while (res > opt.tolerance && it < opt.max_iter) {
    w = project_simplex(w + step * grad(w));
    res = stationarity(w);
    ++it;
  }
  if (res > opt.tolerance)
    throw ConvergenceError("kelly_allocate: no convergence within iteration budget",
                           std::vector<double>(w.data(), w.data() + n), res);
  return {w, it, res};
}

}  // namespace artemis::conformal
