#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/dslob/estimators.hpp"
#include "artemis/dslob/seed.hpp"
#include "artemis/dslob/transforms.hpp"
#include "artemis/dslob/validate.hpp"

namespace artemis::dslob {

/// Table 1 sample counts, used as split ratios.
inline constexpr double kPaperTrain = 24891.0;
inline constexpr double kPaperVal = 9891.0;
inline constexpr double kPaperTest = 4891.0;

inline constexpr Eigen::Index kSecondsPerBar = 60;

struct SyntheticDatasetSpec {
  std::uint64_t seed = 7;
  Eigen::Index n_steps = 5000;
  Eigen::Index window_len = 20;
  Eigen::Index horizon = 20;
  WarpConfig warp;
  double snr_ratio = 1.0;
  bool variance_target = true;      // keep the fitted unconditional variance under amplification
  std::string seed_csv;             // empty: built-in parametric seed
  Eigen::Index seed_min_rows = 36000;
  SeedModel seed_model;
  ValidationThresholds thresholds;

  Eigen::Index window_count() const { return n_steps - window_len - horizon + 1; }

  void validate() const {
    require(window_len >= 1 && horizon >= 1, "SyntheticDatasetSpec: window_len and horizon must be positive");
    require(window_count() >= 3, "SyntheticDatasetSpec: n_steps too small for three splits");
    require(warp.gp_var >= 0.0 && warp.length_scale > 0.0, "SyntheticDatasetSpec: invalid warp");
    require(snr_ratio >= 0.0, "SyntheticDatasetSpec: snr_ratio must be nonnegative");
  }
};

/// Windows stored row-major as [window][step][channel].
struct WindowSplit {
  Eigen::Index L = 0, dx = 0;
  std::vector<double> values;
  std::vector<double> targets;
  std::vector<std::int64_t> end_rows;  // series row of each window's last step

  Eigen::Index size() const { return static_cast<Eigen::Index>(targets.size()); }
  Mat window(Eigen::Index i) const {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data() + i * L * dx, L, dx);
  }
  Vec target_vec() const { return Eigen::Map<const Vec>(targets.data(), size()); }
  void push(const Mat& w, double y, std::int64_t end) {
    for (Eigen::Index l = 0; l < w.rows(); ++l)
      for (Eigen::Index c = 0; c < w.cols(); ++c) values.push_back(w(l, c));
    targets.push_back(y);
    end_rows.push_back(end);
  }
};

struct WindowedDataset {
  WindowSplit train, val, test;
};

struct SplitCounts {
  Eigen::Index train = 0, val = 0, test = 0;
};

inline SplitCounts chronological_split_counts(Eigen::Index n) {
  const double total = kPaperTrain + kPaperVal + kPaperTest;
  SplitCounts c;
  c.train = static_cast<Eigen::Index>(std::llround(static_cast<double>(n) * kPaperTrain / total));
  c.val = static_cast<Eigen::Index>(std::llround(static_cast<double>(n) * kPaperVal / total));
  c.test = n - c.train - c.val;
  return c;
}

/// Windows of `len` rows ending at rows len-1 .. n-horizon-1, with the
/// realized-volatility target of the following `horizon` seconds.
inline WindowedDataset make_windows(const Mat& series, Eigen::Index len, Eigen::Index horizon) {
  const Eigen::Index n = series.rows() - len - horizon + 1;
  require(n >= 3, "make_windows: series too short");
  const SplitCounts c = chronological_split_counts(n);
  const Vec mid = series.col(kMidChannel);
  WindowedDataset ds;
  for (auto* s : {&ds.train, &ds.val, &ds.test}) s->L = len, s->dx = series.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index end = i + len - 1;
    WindowSplit& s = i < c.train ? ds.train : (i < c.train + c.val ? ds.val : ds.test);
    s.push(series.middleRows(i, len), realized_vol_target(mid, end, horizon), end);
  }
  return ds;
}

/// Minute-bar log-returns from a 1-second mid path.
inline Vec bar_returns(const Vec& mid, Eigen::Index bar = kSecondsPerBar) {
  const Eigen::Index n = (mid.size() - 1) / bar;
  Vec r(n);
  for (Eigen::Index k = 0; k < n; ++k) r[k] = std::log(mid[(k + 1) * bar] / mid[k * bar]);
  return r;
}

/// 1-second returns whose conditional variance is set per minute bar by the
/// amplified GARCH recursion: r_s = sigma'_{bar(s)} / sqrt(60) * eps_s.
inline Vec per_second_garch_returns(const GarchParams& fitted, Eigen::Index n, const CounterRng& rng,
                                    bool variance_target, bool& explosive) {
  const Eigen::Index bars = (n + kSecondsPerBar - 1) / kSecondsPerBar;
  const GarchParams amp = variance_target ? variance_targeted_amplification(fitted) : fitted.amplified();
  const GarchPath g = simulate_garch(amp, std::max<Eigen::Index>(bars, 1), rng, 11);
  explosive = g.explosive;
  Vec r(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kSecondsPerBar));
  for (Eigen::Index s = 0; s < n; ++s)
    r[s] = g.sigma[s / kSecondsPerBar] * scale * rng.normal(12, static_cast<std::uint64_t>(s));
  return r;
}

struct GenerationResult {
  WindowedDataset data;
  ValidationReport report;
  VasicekFit vasicek;
  GarchFit garch;
  VarFit noise;
  double noise_scale = 0.0;
  Eigen::Index seed_start = 0;
  Eigen::Index warped_rows = 0;
  Mat series;  // final synthetic series, n_steps x 85
  Mat seed_segment;
  std::vector<std::string> warnings;
};

inline GenerationResult generate_dslob(const SyntheticDatasetSpec& spec) {
  spec.validate();
  GenerationResult out;
  const CounterRng rng = CounterRng(spec.seed).split(0xd5106);

  Mat seed_full = spec.seed_csv.empty()
                      ? parametric_seed(std::max(spec.n_steps, spec.seed_min_rows), spec.seed, spec.seed_model)
                      : load_seed_csv(spec.seed_csv);
  require(seed_full.rows() >= spec.n_steps, "generate_dslob: seed shorter than n_steps");
  out.seed_start = spec.seed_csv.empty() ? 0 : locate_crash_window(seed_full.col(kMidChannel), spec.n_steps);
  const Mat fit_rows = seed_full.bottomRows(seed_full.rows() - out.seed_start);
  out.seed_segment = seed_full.middleRows(out.seed_start, spec.n_steps);

  // Price process: Vasicek drift on the mid, GARCH fitted on minute bars.
  out.vasicek = fit_vasicek_mle(fit_rows.col(kMidChannel), 1.0);
  if (out.vasicek.degenerate_sigma) out.warnings.push_back("vasicek: degenerate sigma");
  const Vec bars = bar_returns(fit_rows.col(kMidChannel));
  out.garch = fit_garch11((bars.array() - bars.mean()).matrix());
  bool explosive = false;
  const Vec r =
      per_second_garch_returns(out.garch.params, spec.n_steps - 1, rng.split(1), spec.variance_target, explosive);
  if (explosive) out.warnings.push_back("garch: amplified process is not covariance stationary");
  const Vec mid = crash_mid_path(out.vasicek.params.amplified(), r, out.seed_segment(0, kMidChannel));

  // Remaining channels: seed plus VAR(1)-correlated noise.
  const Eigen::Index d = kFeatureCount - 2;
  out.noise = fit_var1_cov(fit_rows.rightCols(d));
  if (out.noise.ridge_fallback) out.warnings.push_back("var1: rank-deficient regressors, ridge fallback used");
  out.noise_scale = snr_noise_scale(fit_rows.rightCols(d), out.noise.cov, spec.snr_ratio);
  out.series.resize(spec.n_steps, kFeatureCount);
  out.series.col(kMidChannel) = mid;
  out.series.rightCols(d) =
      add_correlated_noise(out.seed_segment.rightCols(d), out.noise.cov, out.noise_scale, rng.split(2), 21);

  // Time-warp every row that feeds a training window or its target.
  const SplitCounts counts = chronological_split_counts(spec.window_count());
  out.warped_rows = std::min(spec.n_steps, counts.train - 1 + spec.window_len - 1 + spec.horizon + 1);
  if (out.warped_rows >= 2) {
    Mat head = out.series.topRows(out.warped_rows);
    head.col(kReturnChannel).setZero();
    out.series.topRows(out.warped_rows) = time_warp(head, spec.warp, rng.split(3), 31);
  }
  out.series.col(kReturnChannel) = log_returns(out.series.col(kMidChannel));
  if (!out.series.allFinite()) throw NumericalError("generate_dslob: non-finite synthetic series");

  out.data = make_windows(out.series, spec.window_len, spec.horizon);
  out.report = validate_synthetic(out.series, out.seed_segment, kReturnChannel, spec.thresholds);
  return out;
}

}  // namespace artemis::dslob
