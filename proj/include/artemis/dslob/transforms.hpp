#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::dslob {

using numcore::Mat;
using numcore::Vec;

inline constexpr double kSecondsPerYear = 31536000.0;
inline constexpr double kRvFloor = 1e-12;
inline constexpr double kMinWarpRate = 0.1;

struct WarpConfig {
  double gp_mean = 1.0;
  double gp_var = 0.1;
  double length_scale = 200.0;  // in steps
};

/// Rate tau(t) at integer times 0..n-1: a squared-exponential GP sampled on
/// knots spaced length_scale / 4 apart, linearly interpolated, clipped.
inline Vec warp_rate(Eigen::Index n, const WarpConfig& cfg, const CounterRng& rng, std::uint64_t stream) {
  require(cfg.gp_var >= 0.0, "time_warp: gp_var must be nonnegative");
  require(cfg.length_scale > 0.0, "time_warp: length_scale must be positive");
  Vec tau = Vec::Constant(n, cfg.gp_mean);
  if (cfg.gp_var == 0.0 || n < 2) return tau.cwiseMax(kMinWarpRate);
  const double h = cfg.length_scale / 4.0;
  const auto knots = static_cast<Eigen::Index>(std::ceil(static_cast<double>(n - 1) / h)) + 1;
  Mat k(knots, knots);
  for (Eigen::Index i = 0; i < knots; ++i)
    for (Eigen::Index j = 0; j < knots; ++j) {
      const double d = static_cast<double>(i - j) * h / cfg.length_scale;
      k(i, j) = cfg.gp_var * std::exp(-0.5 * d * d);
    }
  k.diagonal().array() += 1e-8 * cfg.gp_var;
  const Mat chol = Eigen::LLT<Mat>(k).matrixL();
  Vec z(knots);
  for (Eigen::Index i = 0; i < knots; ++i) z[i] = rng.normal(stream, static_cast<std::uint64_t>(i));
  const Vec g = chol * z;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double x = static_cast<double>(t) / h;
    const auto j = std::min<Eigen::Index>(static_cast<Eigen::Index>(x), knots - 2);
    const double w = x - static_cast<double>(j);
    tau[t] = std::max(kMinWarpRate, cfg.gp_mean + (1.0 - w) * g[j] + w * g[j + 1]);
  }
  return tau;
}

/// u_0 = 0, u_k = u_{k-1} + tau_{k-1}.
inline Vec warped_time(const Vec& tau) {
  Vec u(tau.size());
  if (tau.size() == 0) return u;
  u[0] = 0.0;
  for (Eigen::Index k = 1; k < tau.size(); ++k) u[k] = u[k - 1] + tau[k - 1];
  return u;
}

/// Resamples every column at `out_len` uniform points of u by linear
/// interpolation. Endpoints map to endpoints; row order is preserved.
inline Mat resample_uniform(const Mat& x, const Vec& u, Eigen::Index out_len) {
  require(x.rows() == u.size() && x.rows() >= 2, "time_warp: length mismatch");
  require(out_len >= 2, "time_warp: output length must be at least 2");
  Mat out(out_len, x.cols());
  const double total = u[u.size() - 1];
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < out_len; ++i) {
    const double v = i == out_len - 1 ? total : static_cast<double>(i) * total / static_cast<double>(out_len - 1);
    while (k + 2 < u.size() && u[k + 1] <= v) ++k;
    const double frac = (v - u[k]) / (u[k + 1] - u[k]);
    out.row(i) = x.row(k) + frac * (x.row(k + 1) - x.row(k));
  }
  return out;
}

inline Mat time_warp(const Mat& x, const WarpConfig& cfg, const CounterRng& rng, std::uint64_t stream,
                     Eigen::Index out_len = -1) {
  if (out_len < 0) out_len = x.rows();
  return resample_uniform(x, warped_time(warp_rate(x.rows(), cfg, rng, stream)), out_len);
}

/// log(sqrt(sum r_i^2) * sqrt(31536000 / h) + 1e-12) over the h 1-second
/// log-returns following row `end`.
inline double realized_vol_target(const Vec& mid, Eigen::Index end, Eigen::Index horizon = 20) {
  require(end >= 0 && end + horizon < mid.size(), "realized_vol_target: not enough future prices");
  double ss = 0.0;
  for (Eigen::Index i = 1; i <= horizon; ++i) {
    const double r = std::log(mid[end + i] / mid[end + i - 1]);
    ss += r * r;
  }
  return std::log(std::sqrt(ss) * std::sqrt(kSecondsPerYear / static_cast<double>(horizon)) + kRvFloor);
}

/// Pre-log, pre-annualization realized volatility of a block of returns.
inline double realized_vol(const Vec& returns) { return std::sqrt(returns.squaredNorm()); }

}  // namespace artemis::dslob
