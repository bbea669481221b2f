#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/dslob/estimators.hpp"

namespace artemis::dslob {

inline constexpr Eigen::Index kFeatureCount = 85;
inline constexpr Eigen::Index kLevels = 4;
inline constexpr Eigen::Index kMidChannel = 0;
inline constexpr Eigen::Index kReturnChannel = 1;

/// Parameters of the built-in crash seed. Per-second Vasicek drift with
/// GARCH(1,1) innovations; four book levels on a fixed tick ladder around
/// the mid with log-normal AR(1) sizes.
struct SeedModel {
  double p0 = 100.0;
  VasicekParams vasicek{1.0 / 20000.0, 80.0, 0.0};
  GarchParams garch{1.8e-9, 0.05, 0.93};
  double tick = 0.01;
  double spread_log_sd = 0.4;
  double spread_phi = 0.95;
  double size_base = 500.0;
  double size_log_sd = 0.5;
  double size_phi = 0.9;
  double measurement_noise = 1e-3;  // relative to each derived feature's SD
};

/// m_{t+1} = m_t + theta (mu - m_t) dt + m_t r_t.
inline Vec crash_mid_path(const VasicekParams& v, const Vec& returns, double p0, double dt = 1.0) {
  Vec m(returns.size() + 1);
  m[0] = p0;
  for (Eigen::Index t = 0; t < returns.size(); ++t) {
    m[t + 1] = m[t] + v.theta * (v.mu - m[t]) * dt + m[t] * returns[t];
    if (!(m[t + 1] > 0.0) || !std::isfinite(m[t + 1]))
      throw NumericalError("crash_mid_path: mid price left the positive reals", t + 1);
  }
  return m;
}

inline Vec log_returns(const Vec& mid) {
  Vec r = Vec::Zero(mid.size());
  for (Eigen::Index t = 1; t < mid.size(); ++t) r[t] = std::log(mid[t] / mid[t - 1]);
  return r;
}

namespace detail {

inline Vec ar1_path(Eigen::Index n, double phi, double sd, const CounterRng& rng, std::uint64_t stream) {
  Vec x(n);
  const double innov = sd * std::sqrt(1.0 - phi * phi);
  x[0] = sd * rng.normal(stream, 0);
  for (Eigen::Index t = 1; t < n; ++t) x[t] = phi * x[t - 1] + innov * rng.normal(stream, static_cast<std::uint64_t>(t));
  return x;
}

inline double trailing_mean(const Vec& x, Eigen::Index t, Eigen::Index w) {
  const Eigen::Index lo = std::max<Eigen::Index>(0, t - w + 1);
  return x.segment(lo, t - lo + 1).mean();
}

inline double trailing_sd(const Vec& x, Eigen::Index t, Eigen::Index w) {
  const Eigen::Index lo = std::max<Eigen::Index>(0, t - w + 1);
  const auto seg = x.segment(lo, t - lo + 1);
  return std::sqrt((seg.array() - seg.mean()).square().mean());
}

}  // namespace detail

/// Derives the 85 channels from a mid path: 0 mid, 1 log-return, then book
/// prices, sizes and the usual spread / imbalance / depth / rolling features.
inline Mat lob_features_from_mid(const Vec& mid, const SeedModel& sm, const CounterRng& rng) {
  const Eigen::Index n = mid.size();
  const Vec r = log_returns(mid);
  const Vec spread_state = detail::ar1_path(n, sm.spread_phi, sm.spread_log_sd, rng, 101);
  std::vector<Vec> ask_state, bid_state;
  for (Eigen::Index k = 0; k < kLevels; ++k) {
    ask_state.push_back(detail::ar1_path(n, sm.size_phi, sm.size_log_sd, rng, 200 + static_cast<std::uint64_t>(k)));
    bid_state.push_back(detail::ar1_path(n, sm.size_phi, sm.size_log_sd, rng, 300 + static_cast<std::uint64_t>(k)));
  }

  Mat f(n, kFeatureCount);
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::Index c = 0;
    const double m = mid[t];
    f(t, c++) = m;
    f(t, c++) = r[t];
    const double half = 0.5 * sm.tick * (1.0 + std::exp(spread_state[t]));
    double ask[kLevels], bid[kLevels], as[kLevels], bs[kLevels];
    for (Eigen::Index k = 0; k < kLevels; ++k) {
      ask[k] = m + half + sm.tick * static_cast<double>(k);
      bid[k] = m - half - sm.tick * static_cast<double>(k);
      as[k] = sm.size_base * static_cast<double>(k + 1) * std::exp(ask_state[static_cast<std::size_t>(k)][t]);
      bs[k] = sm.size_base * static_cast<double>(k + 1) * std::exp(bid_state[static_cast<std::size_t>(k)][t]);
    }
    for (double v : ask) f(t, c++) = v;
    for (double v : bid) f(t, c++) = v;
    for (double v : as) f(t, c++) = v;
    for (double v : bs) f(t, c++) = v;
    for (Eigen::Index k = 0; k < kLevels; ++k) f(t, c++) = ask[k] - bid[k];
    for (Eigen::Index k = 0; k < kLevels; ++k) f(t, c++) = (bs[k] - as[k]) / (bs[k] + as[k]);
    for (Eigen::Index k = 0; k < kLevels; ++k) f(t, c++) = bs[k] + as[k];
    double cum_a = 0.0, cum_b = 0.0;
    for (Eigen::Index k = 0; k < kLevels; ++k) f(t, c++) = cum_a += as[k];
    for (Eigen::Index k = 0; k < kLevels; ++k) f(t, c++) = cum_b += bs[k];
    for (double v : as) f(t, c++) = std::log(v);
    for (double v : bs) f(t, c++) = std::log(v);
    f(t, c++) = (ask[0] * bs[0] + bid[0] * as[0]) / (as[0] + bs[0]);  // microprice
    for (Eigen::Index w : {5, 10, 20, 60}) f(t, c++) = detail::trailing_sd(r, t, w);
    for (Eigen::Index w : {5, 10, 20, 60}) f(t, c++) = detail::trailing_mean(r, t, w);
    for (Eigen::Index w : {5, 10, 20, 60}) f(t, c++) = detail::trailing_mean(mid, t, w);
    for (Eigen::Index w : {5, 10, 20, 60}) f(t, c++) = m - detail::trailing_mean(mid, t, w);
    // order flow imbalance at the touch, from the previous row's sizes
    f(t, c++) = t > 0 ? (bs[0] - f(t - 1, 2 + 3 * kLevels)) - (as[0] - f(t - 1, 2 + 2 * kLevels)) : 0.0;
    f(t, c++) = t > 0 ? ask[0] - f(t - 1, 2) : 0.0;
    f(t, c++) = t > 0 ? bid[0] - f(t - 1, 2 + kLevels) : 0.0;
    f(t, c++) = cum_a;
    f(t, c++) = cum_b;
    f(t, c++) = (cum_b - cum_a) / (cum_b + cum_a);
    f(t, c++) = std::log(cum_b / cum_a);
    {
      const Eigen::Index lo = std::max<Eigen::Index>(0, t - 19);
      const auto seg = mid.segment(lo, t - lo + 1);
      f(t, c++) = seg.maxCoeff() - seg.minCoeff();
    }
    f(t, c++) = std::abs(r[t]);
    f(t, c++) = r[t] * r[t];
    f(t, c++) = (ask[0] - bid[0]) / m;
    for (Eigen::Index k = 0; k < kLevels; ++k) f(t, c++) = ask[k] - m;
    for (Eigen::Index k = 0; k < kLevels; ++k) f(t, c++) = m - bid[k];
    double va = 0.0, vb = 0.0;
    for (Eigen::Index k = 0; k < kLevels; ++k) va += ask[k] * as[k], vb += bid[k] * bs[k];
    f(t, c++) = va / cum_a;
    f(t, c++) = vb / cum_b;
    f(t, c++) = (va + vb) / (cum_a + cum_b);
    if (t == 0) require(c == kFeatureCount, "lob_features_from_mid: channel count mismatch");
  }

  // Independent measurement noise breaks the exact linear identities between
  // derived channels (spread = ask - bid and so on).
  if (sm.measurement_noise > 0.0) {
    for (Eigen::Index j = 2; j < kFeatureCount; ++j) {
      const double sd = std::sqrt(sample_variance(f.col(j)));
      const double s = sm.measurement_noise * (sd > 0.0 ? sd : 1.0);
      for (Eigen::Index t = 0; t < n; ++t)
        f(t, j) += s * rng.normal(stream_id(400, static_cast<std::uint64_t>(j)), static_cast<std::uint64_t>(t));
    }
  }
  return f;
}

/// Built-in deterministic crash seed with `n` rows.
inline Mat parametric_seed(Eigen::Index n, std::uint64_t seed, const SeedModel& sm = {}) {
  require(n >= 2, "parametric_seed: need at least 2 rows");
  const CounterRng rng = CounterRng(seed).split(0x5eed);
  const GarchPath g = simulate_garch(sm.garch, n - 1, rng, 1);
  const Vec mid = crash_mid_path(sm.vasicek, g.returns, sm.p0);
  return lob_features_from_mid(mid, sm, rng.split(2));
}

/// CUSUM change point of a series: argmax_k |S_k - (k / n) S_n|.
inline Eigen::Index cusum_change_point(const Vec& x) {
  require(x.size() >= 2, "cusum_change_point: need at least 2 observations");
  const double total = x.sum();
  const double n = static_cast<double>(x.size());
  double s = 0.0, best = -1.0;
  Eigen::Index arg = 0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    s += x[k];
    const double dev = std::abs(s - static_cast<double>(k + 1) / n * total);
    if (dev > best) best = dev, arg = k + 1;
  }
  return std::min<Eigen::Index>(arg, x.size() - 1);
}

/// Start row of a crash segment of length `len`: the CUSUM change point of
/// squared returns, pulled back so the segment fits.
inline Eigen::Index locate_crash_window(const Vec& mid, Eigen::Index len) {
  require(mid.size() >= len, "locate_crash_window: series shorter than the requested segment");
  const Vec r2 = log_returns(mid).array().square().matrix();
  return std::min(cusum_change_point(r2), mid.size() - len);
}

/// CSV with one header line and one row per time step. Column 0 is the mid
/// price; column 1 is overwritten with its log-return.
inline Mat load_seed_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_seed_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw ContractViolation("load_seed_csv: ragged row " + std::to_string(rows.size() + 2));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "load_seed_csv: no data rows");
  require(static_cast<Eigen::Index>(rows.front().size()) == kFeatureCount,
          "load_seed_csv: expected " + std::to_string(kFeatureCount) + " columns");
  Mat m(static_cast<Eigen::Index>(rows.size()), kFeatureCount);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < kFeatureCount; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  require(m.allFinite() && (m.col(kMidChannel).array() > 0.0).all(), "load_seed_csv: mid must be positive and finite");
  m.col(kReturnChannel) = log_returns(m.col(kMidChannel));
  return m;
}

}  // namespace artemis::dslob
