#pragma once

#include <cmath>
#include <vector>

#include "artemis/sde.hpp"

namespace artemis::oracle {

using numcore::Mat;
using numcore::Vec;

struct StrongOrder {
  std::vector<int> steps;
  std::vector<double> rms_error;
  double exponent = 0.0;  // least-squares slope of log error against log dt
};

inline double fitted_slope(const std::vector<int>& steps, const std::vector<double>& err) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double x = std::log(1.0 / steps[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Sums blocks of fine increments into coarse standard normals.
inline Mat coarsen(const Mat& fine, int steps) {
  const auto r = fine.rows() / steps;
  Mat out(steps, fine.cols());
  for (int j = 0; j < steps; ++j) out.row(j) = fine.middleRows(j * r, r).colwise().sum() / std::sqrt(double(r));
  return out;
}

/// dz = -z dt + dW on [0, 1], z0 = 0. The reference is the exact OU transition
/// driven by the same Brownian path sampled on a 4096-step grid.
inline StrongOrder ou_strong_order(const std::vector<int>& steps, int paths, std::uint64_t seed) {
  const int fine_steps = 4096;
  const double df = 1.0 / fine_steps;
  const double decay = std::exp(-df);
  const double scale = std::sqrt((1.0 - std::exp(-2.0 * df)) / (2.0 * df));
  StrongOrder out{steps, std::vector<double>(steps.size(), 0.0), 0.0};
  for (int p = 0; p < paths; ++p) {
    const Mat fine = sde::sde_noise(seed, static_cast<std::uint64_t>(p), fine_steps, 1);
    double exact = 0.0;
    for (int k = 0; k < fine_steps; ++k) exact = decay * exact + scale * std::sqrt(df) * fine(k, 0);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto tr = sde::euler_maruyama_with_noise([](const Vec& z, double) -> Vec { return -z; },
                                                     [](const Vec&, double) { return Mat::Identity(1, 1); },
                                                     Vec::Zero(1), 0.0, 1.0, coarsen(fine, steps[i]));
      const double e = tr.states(steps[i], 0) - exact;
      out.rms_error[i] += e * e;
    }
  }
  for (auto& e : out.rms_error) e = std::sqrt(e / paths);
  out.exponent = fitted_slope(steps, out.rms_error);
  return out;
}

/// dX = a X dt + b X dW on [0, 1], X0 = 1, against exp((a - b^2/2) + b W_1).
inline StrongOrder gbm_strong_order(const std::vector<int>& steps, int paths, std::uint64_t seed, double a = 0.1,
                                    double b = 1.0) {
  const int fine_steps = steps.back();
  StrongOrder out{steps, std::vector<double>(steps.size(), 0.0), 0.0};
  for (int p = 0; p < paths; ++p) {
    const Mat fine = sde::sde_noise(seed, static_cast<std::uint64_t>(p), fine_steps, 1);
    const double w1 = fine.sum() / std::sqrt(double(fine_steps));
    const double exact = std::exp(a - 0.5 * b * b + b * w1);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto tr = sde::euler_maruyama_with_noise([a](const Vec& z, double) -> Vec { return a * z; },
                                                     [b](const Vec& z, double) -> Mat { return b * z; },
                                                     Vec::Ones(1), 0.0, 1.0, coarsen(fine, steps[i]));
      const double e = tr.states(steps[i], 0) - exact;
      out.rms_error[i] += e * e;
    }
  }
  for (auto& e : out.rms_error) e = std::sqrt(e / paths);
  out.exponent = fitted_slope(steps, out.rms_error);
  return out;
}

}  // namespace artemis::oracle
