#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::dslob {

using numcore::Mat;
using numcore::Vec;

inline constexpr double kVasicekSpeedFactor = 1.5;
inline constexpr double kVasicekMeanFactor = 1.2;
inline constexpr double kGarchAlphaFactor = 1.2;
inline constexpr double kGarchBetaFactor = 1.1;
inline constexpr double kGarchBetaCap = 0.95;

struct VasicekParams {
  double theta = 1.0;
  double mu = 0.0;
  double sigma = 0.0;

  void validate() const {
    require(theta > 0.0 && std::isfinite(theta), "VasicekParams: theta must be positive");
    require(sigma >= 0.0, "VasicekParams: sigma must be nonnegative");
  }
  VasicekParams amplified() const { return {kVasicekSpeedFactor * theta, kVasicekMeanFactor * mu, sigma}; }
};

struct VasicekFit {
  VasicekParams params;
  bool degenerate_sigma = false;
};

/// Exact discrete MLE through P_{t+1} = a P_t + b + e with a = exp(-theta dt),
/// b = mu (1 - a), Var(e) = sigma^2 (1 - a^2) / (2 theta).
inline VasicekFit fit_vasicek_mle(const Vec& p, double dt) {
  require(p.size() >= 3, "fit_vasicek_mle: need at least 3 observations");
  require(dt > 0.0, "fit_vasicek_mle: dt must be positive");
  const auto n = p.size() - 1;
  const Vec x = p.head(n);
  const Vec y = p.tail(n);
  const double mx = x.mean(), my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  require(sxx > 1e-300, "fit_vasicek_mle: constant series, sigma is degenerate");
  const double a = ((x.array() - mx) * (y.array() - my)).sum() / sxx;
  const double b = my - a * mx;
  if (!(a > 0.0 && a < 1.0))
    throw NumericalError("fit_vasicek_mle: series is not mean-reverting (a = " + std::to_string(a) + ")");
  const double resid_var = (y.array() - a * x.array() - b).square().sum() / static_cast<double>(n);
  VasicekFit fit;
  fit.params.theta = -std::log(a) / dt;
  fit.params.mu = b / (1.0 - a);
  const double scale = std::max(1.0, (p.array() - p.mean()).square().mean());
  if (resid_var <= 1e-24 * scale) {
    fit.degenerate_sigma = true;
    fit.params.sigma = 0.0;
  } else {
    fit.params.sigma = std::sqrt(resid_var * 2.0 * fit.params.theta / (1.0 - a * a));
  }
  return fit;
}

/// Euler scheme for dP = theta (mu - P) dt + sigma dW, with the amplified
/// (1.5 theta, 1.2 mu) when requested. Returns n + 1 prices starting at P0.
inline Vec simulate_vasicek(const VasicekParams& p, bool amplify, double p0, Eigen::Index n, double dt,
                            const CounterRng& rng, std::uint64_t stream) {
  require(n >= 1, "simulate_vasicek: n must be at least 1");
  const VasicekParams q = amplify ? p.amplified() : p;
  q.validate();
  Vec out(n + 1);
  out[0] = p0;
  const double sq = std::sqrt(dt);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double eps = q.sigma > 0.0 ? rng.normal(stream, static_cast<std::uint64_t>(t)) : 0.0;
    out[t + 1] = out[t] + q.theta * (q.mu - out[t]) * dt + q.sigma * sq * eps;
  }
  return out;
}

// ---------------------------------------------------------------------------
// GARCH(1,1)

struct GarchParams {
  double omega = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  double persistence() const { return alpha + beta; }
  GarchParams amplified() const {
    return {omega, kGarchAlphaFactor * alpha, std::min(kGarchBetaCap, kGarchBetaFactor * beta)};
  }
};

inline double sample_variance(const Vec& r) {
  const double m = r.mean();
  return (r.array() - m).square().sum() / static_cast<double>(std::max<Eigen::Index>(1, r.size() - 1));
}

/// Gaussian quasi log-likelihood, sigma_0^2 = sample variance. The constant
/// -n/2 log(2 pi) is included.
inline double garch_loglik(const GarchParams& p, const Vec& r) {
  double s2 = sample_variance(r);
  double ll = 0.0;
  for (Eigen::Index t = 0; t < r.size(); ++t) {
    if (t > 0) s2 = p.omega + p.alpha * r[t - 1] * r[t - 1] + p.beta * s2;
    if (!(s2 > 0.0) || !std::isfinite(s2)) return -std::numeric_limits<double>::infinity();
    ll += -0.5 * (std::log(2.0 * M_PI) + std::log(s2) + r[t] * r[t] / s2);
  }
  return ll;
}

struct GarchFit {
  GarchParams params;
  double loglik = 0.0;
  int iterations = 0;
};

namespace detail {

/// Per-observation score in the scaled coordinates (omega / v, alpha, beta).
inline double garch_scores(const Vec& x, const Vec& r, double v, Mat& scores) {
  const auto n = r.size();
  scores.resize(n, 3);
  double s2 = v;
  Eigen::Vector3d ds2 = Eigen::Vector3d::Zero();
  double ll = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0) {
      const double prev = s2;
      s2 = x[0] * v + x[1] * r[t - 1] * r[t - 1] + x[2] * prev;
      ds2 = Eigen::Vector3d(v, r[t - 1] * r[t - 1], prev) + x[2] * ds2;
    }
    if (!(s2 > 0.0) || !std::isfinite(s2)) return -std::numeric_limits<double>::infinity();
    ll += -0.5 * (std::log(2.0 * M_PI) + std::log(s2) + r[t] * r[t] / s2);
    const double w = -0.5 * (1.0 / s2 - r[t] * r[t] / (s2 * s2));
    scores.row(t) = (w * ds2).transpose();
  }
  return ll;
}

inline Vec garch_project(Vec x) {
  x[0] = std::max(x[0], 1e-8);
  x[1] = std::max(x[1], 0.0);
  x[2] = std::max(x[2], 0.0);
  const double s = x[1] + x[2];
  if (s > 0.999) {
    // Euclidean projection of (alpha, beta) onto alpha + beta <= 0.999 within the orthant
    const double shift = (s - 0.999) / 2.0;
    x[1] -= shift;
    x[2] -= shift;
    if (x[1] < 0.0) x[2] += x[1], x[1] = 0.0;
    if (x[2] < 0.0) x[1] += x[2], x[2] = 0.0;
  }
  return x;
}

}  // namespace detail

struct GarchFitOptions {
  double tolerance = 1e-9;
  int max_iter = 50000;
};

/// Quasi-MLE by projected gradient ascent on (omega, alpha, beta), with the
/// gradient preconditioned by the outer-product (BHHH) matrix and a
/// backtracking line search. Omega is optimized in units of the sample
/// variance. Stops once the log-likelihood gain falls below `tolerance`.
inline GarchFit fit_garch11(const Vec& r, const GarchFitOptions& opt = {}) {
  require(r.size() >= 100, "fit_garch11: need at least 100 returns");
  require(r.allFinite(), "fit_garch11: non-finite returns");
  const double v = sample_variance(r);
  require(v > 0.0, "fit_garch11: returns have zero variance");
  Vec x(3);
  x << 0.1, 0.05, 0.85;  // omega / v, alpha, beta
  Mat scores;
  double ll = detail::garch_scores(x, r, v, scores);
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const Vec g = scores.colwise().sum().transpose();
    const Mat info = scores.transpose() * scores + 1e-12 * Mat::Identity(3, 3);
    Vec dir = info.ldlt().solve(g);
    if (!dir.allFinite()) dir = g;
    double step = 1.0, best_ll = ll;
    Vec best_x = x;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      const Vec cand = detail::garch_project(x + step * dir);
      Mat cand_scores;
      const double cand_ll = detail::garch_scores(cand, r, v, cand_scores);
      if (cand_ll > ll) {
        best_ll = cand_ll;
        best_x = cand;
        scores = std::move(cand_scores);
        break;
      }
    }
    const double gain = best_ll - ll;
    x = best_x;
    ll = best_ll;
    if (gain < opt.tolerance) break;
  }
  GarchFit fit{{x[0] * v, x[1], x[2]}, ll, it};
  if (it >= opt.max_iter)
    throw ConvergenceError("fit_garch11: no convergence within iteration budget", {fit.params.omega, x[1], x[2]},
                           ll);
  return fit;
}

struct GarchPath {
  Vec returns;
  Vec sigma;  // conditional standard deviation
  bool explosive = false;
};

/// r_t = sigma_t eps_t with the (already amplified if desired) parameters.
/// sigma_0^2 is the unconditional variance, or omega / 0.001 when the
/// process is not covariance stationary.
inline GarchPath simulate_garch(const GarchParams& p, Eigen::Index n, const CounterRng& rng, std::uint64_t stream) {
  require(n >= 1, "simulate_garch: n must be at least 1");
  require(p.omega >= 0.0 && p.alpha >= 0.0 && p.beta >= 0.0, "simulate_garch: negative parameter");
  GarchPath out;
  out.explosive = p.persistence() >= 1.0;
  out.returns.resize(n);
  out.sigma.resize(n);
  double s2 = p.omega / std::max(1.0 - p.persistence(), 1e-3);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0) s2 = p.omega + p.alpha * out.returns[t - 1] * out.returns[t - 1] + p.beta * s2;
    out.sigma[t] = std::sqrt(s2);
    out.returns[t] = out.sigma[t] * rng.normal(stream, static_cast<std::uint64_t>(t));
  }
  return out;
}

/// Amplified (alpha', beta') with omega rescaled so the unconditional
/// variance omega / (1 - alpha - beta) is unchanged. Falls back to the
/// plain amplification when either process is not covariance stationary.
inline GarchParams variance_targeted_amplification(const GarchParams& p) {
  GarchParams a = p.amplified();
  if (p.persistence() < 1.0 && a.persistence() < 1.0)
    a.omega = p.omega * (1.0 - a.persistence()) / (1.0 - p.persistence());
  return a;
}

inline GarchPath amplify_and_simulate_garch(const GarchParams& p, Eigen::Index n, const CounterRng& rng,
                                            std::uint64_t stream) {
  return simulate_garch(p.amplified(), n, rng, stream);
}

// ---------------------------------------------------------------------------
// VAR(1) residual covariance and correlated noise

inline constexpr double kEigenFloor = 1e-12;
inline constexpr double kRidge = 1e-8;

inline Mat floor_psd(const Mat& s) {
  const Mat sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  const Vec ev = es.eigenvalues().cwiseMax(kEigenFloor);
  Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

struct VarFit {
  Mat cov;
  bool ridge_fallback = false;
};

/// Least-squares VAR(1) X_t = A X_{t-1} + c + eta_t (rows of `x` are times).
/// Returns the symmetrized, eigenvalue-floored residual covariance.
inline VarFit fit_var1_cov(const Mat& x) {
  const auto T = x.rows(), d = x.cols();
  require(T >= 2 * d && T >= 3, "fit_var1_cov: need at least 2 * d_feat rows");
  Mat reg(T - 1, d + 1);
  reg.leftCols(d) = x.topRows(T - 1);
  reg.col(d).setOnes();
  const Mat y = x.bottomRows(T - 1);
  // Column scaling keeps the rank test meaningful across feature units.
  Vec scale(d + 1);
  for (Eigen::Index j = 0; j <= d; ++j) scale[j] = std::max(reg.col(j).cwiseAbs().maxCoeff(), 1e-300);
  const Mat scaled = reg * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Mat> qr(scaled);
  qr.setThreshold(1e-10);
  VarFit fit;
  Mat coef;
  if (qr.rank() == d + 1) {
    coef = qr.solve(y);
  } else {
    fit.ridge_fallback = true;
    const Mat gram = scaled.transpose() * scaled + kRidge * Mat::Identity(d + 1, d + 1);
    coef = gram.ldlt().solve(scaled.transpose() * y);
  }
  const Mat resid = y - scaled * coef;
  const Mat centered = resid.rowwise() - resid.colwise().mean();
  fit.cov = floor_psd(centered.transpose() * centered / static_cast<double>(T - 2));
  return fit;
}

/// Square root factor F with F F^T = s. Cholesky when it succeeds, symmetric
/// eigen square root otherwise.
inline Mat covariance_factor(const Mat& s) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (s + s.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Noise scale s for which the per-feature noise-to-signal ratio
/// s^2 Sigma_ii / Var(f_i), averaged over features, equals the seed's own
/// residual-to-signal ratio Sigma_ii / Var(f_i) times `snr_ratio`.
inline double snr_noise_scale(const Mat& seed, const Mat& cov, double snr_ratio = 1.0) {
  double seed_ratio = 0.0, unit_ratio = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < seed.cols(); ++i) {
    const double var = sample_variance(seed.col(i));
    if (var <= 0.0) continue;
    seed_ratio += snr_ratio * cov(i, i) / var;
    unit_ratio += cov(i, i) / var;
    ++used;
  }
  if (used == 0 || unit_ratio <= 0.0) return 0.0;
  return std::sqrt(seed_ratio / unit_ratio);
}

/// seed + eta with eta_t ~ N(0, s^2 Sigma), one draw per row.
inline Mat add_correlated_noise(const Mat& seed, const Mat& cov, double s, const CounterRng& rng,
                                std::uint64_t stream) {
  require(cov.rows() == seed.cols() && cov.cols() == seed.cols(), "add_correlated_noise: shape mismatch");
  if (s == 0.0 || cov.isZero(0.0)) return seed;
  const Mat f = s * covariance_factor(cov);
  Mat out = seed;
  Vec eps(seed.cols());
  for (Eigen::Index t = 0; t < seed.rows(); ++t) {
    for (Eigen::Index k = 0; k < eps.size(); ++k)
      eps[k] = rng.normal(stream_id(stream, static_cast<std::uint64_t>(t)), static_cast<std::uint64_t>(k));
    out.row(t) += (f * eps).transpose();
  }
  return out;
}

}  // namespace artemis::dslob
