#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/numcore/mlp.hpp"
#include "artemis/numcore/tape.hpp"

namespace artemis::encoder {

using numcore::Mat;
using numcore::Mlp1h;
using numcore::Vec;

/// Causal sum-of-exponentials kernel kappa(t) = sum_k Re(A_k e^{lambda_k t}).
///
/// Poles come in conjugate pairs plus optional purely real poles. A pair
/// (lambda, conj lambda) with residues (A, conj A) contributes
/// 2 Re(A e^{lambda t}), so the kernel is real by construction. Real parts
/// are -softplus(raw) and therefore always negative.
///
/// Residues are stacked row-wise into one ((2P + Q) dz) x dx matrix:
/// [Re A_1; Im A_1; ...; Re A_P; Im A_P; A_real_1; ...; A_real_Q].
struct LaplaceKernel {
  Eigen::Index dz = 0;
  Eigen::Index dx = 0;
  Vec pair_raw_re;  // P
  Vec pair_im;      // P
  Vec real_raw_re;  // Q
  Mat residues;

  Eigen::Index pairs() const { return pair_raw_re.size(); }
  Eigen::Index reals() const { return real_raw_re.size(); }
  Eigen::Index pole_count() const { return 2 * pairs() + reals(); }

  std::complex<double> pair_pole(Eigen::Index k) const { return {-numcore::softplus(pair_raw_re[k]), pair_im[k]}; }
  double real_pole(Eigen::Index q) const { return -numcore::softplus(real_raw_re[q]); }
  auto pair_re_block(Eigen::Index k) const { return residues.middleRows(2 * k * dz, dz); }
  auto pair_im_block(Eigen::Index k) const { return residues.middleRows((2 * k + 1) * dz, dz); }
  auto real_block(Eigen::Index q) const { return residues.middleRows((2 * pairs() + q) * dz, dz); }

  static LaplaceKernel zeros(Eigen::Index dz, Eigen::Index dx, Eigen::Index pairs, Eigen::Index reals) {
    LaplaceKernel k;
    k.dz = dz;
    k.dx = dx;
    k.pair_raw_re = Vec::Zero(pairs);
    k.pair_im = Vec::Zero(pairs);
    k.real_raw_re = Vec::Zero(reals);
    k.residues = Mat::Zero((2 * pairs + reals) * dz, dx);
    return k;
  }

  /// Sets pair k to pole (-decay + i*freq) with residue re + i*im.
  void set_pair(Eigen::Index k, double decay, double freq, const Mat& re, const Mat& im) {
    require(decay > 0.0, "LaplaceKernel: pole real part must be negative");
    pair_raw_re[k] = numcore::softplus_inv(decay);
    pair_im[k] = freq;
    residues.middleRows(2 * k * dz, dz) = re;
    residues.middleRows((2 * k + 1) * dz, dz) = im;
  }
  void set_real(Eigen::Index q, double decay, const Mat& res) {
    require(decay > 0.0, "LaplaceKernel: pole real part must be negative");
    real_raw_re[q] = numcore::softplus_inv(decay);
    residues.middleRows((2 * pairs() + q) * dz, dz) = res;
  }
};

/// Learnable Fourier features; frequencies are softplus(raw) > 0.
struct TimeEmbedding {
  Vec freq_raw;

  Eigen::Index size() const { return 2 * freq_raw.size(); }
  Vec freqs() const { return freq_raw.unaryExpr([](double x) { return numcore::softplus(x); }); }
  static TimeEmbedding from_freqs(const Vec& f) {
    TimeEmbedding e;
    e.freq_raw = f.unaryExpr([](double x) { return numcore::softplus_inv(x); });
    return e;
  }
};

/// Irregularly sampled multivariate observations on [0, T].
struct ObservationWindow {
  Vec times;   // N, strictly increasing
  Mat values;  // N x dx, zero where masked
  Mat mask;    // N x dx, entries in {0, 1}
  double horizon = 1.0;

  Eigen::Index size() const { return times.size(); }
  Eigen::Index dims() const { return values.cols(); }

  void validate() const {
    require(values.rows() == times.size() && mask.rows() == times.size() && mask.cols() == values.cols(),
            "ObservationWindow: inconsistent shapes");
    for (Eigen::Index i = 0; i < times.size(); ++i) {
      require(times[i] >= 0.0 && times[i] <= horizon, "ObservationWindow: time outside [0, T]");
      if (i > 0) require(times[i] > times[i - 1], "ObservationWindow: times must be strictly increasing");
    }
    for (Eigen::Index k = 0; k < mask.size(); ++k) {
      const double m = mask.data()[k];
      require(m == 0.0 || m == 1.0, "ObservationWindow: mask entries must be 0 or 1");
      require(m == 1.0 || values.data()[k] == 0.0, "ObservationWindow: masked entries must be 0");
    }
  }

  /// Regular window with observations at T/N, 2T/N, ..., T and a full mask.
  static ObservationWindow regular(const Mat& values, double horizon = 1.0) {
    ObservationWindow w;
    const auto n = values.rows();
    w.times = Vec::LinSpaced(n, horizon / static_cast<double>(n), horizon);
    w.values = values;
    w.mask = Mat::Ones(values.rows(), values.cols());
    w.horizon = horizon;
    return w;
  }
};

inline Mat kernel_eval(const LaplaceKernel& k, double t) {
  Mat out = Mat::Zero(k.dz, k.dx);
  if (t < 0.0) return out;
  for (Eigen::Index p = 0; p < k.pairs(); ++p) {
    const std::complex<double> e = std::exp(k.pair_pole(p) * t);
    out += 2.0 * (e.real() * k.pair_re_block(p) - e.imag() * k.pair_im_block(p));
  }
  for (Eigen::Index q = 0; q < k.reals(); ++q) out += std::exp(k.real_pole(q) * t) * k.real_block(q);
  return out;
}

inline Vec time_embed(const TimeEmbedding& e, double t) {
  const Vec f = e.freqs();
  Vec out(2 * f.size());
  for (Eigen::Index k = 0; k < f.size(); ++k) {
    out[2 * k] = std::sin(2.0 * std::numbers::pi * f[k] * t);
    out[2 * k + 1] = std::cos(2.0 * std::numbers::pi * f[k] * t);
  }
  return out;
}

struct EncodeResult {
  Mat path;  // M x dz
  bool empty_window = false;
};

/// Left-Riemann discretization of the kernel integral plus the time bias:
/// z(t) = sum_{t_i <= t} kappa(t - t_i) (mask_i .* x_i) dt_i + b(t), dt_i = t_i - t_{i-1}, t_0 = 0.
inline EncodeResult encode(const LaplaceKernel& k, const Mlp1h& bias, const TimeEmbedding& emb,
                           const ObservationWindow& w, const Vec& grid) {
  require(w.dims() == k.dx, "encode: window feature count differs from kernel input dimension");
  require(bias.din() == emb.size() && bias.dout() == k.dz, "encode: bias network shape mismatch");
  for (Eigen::Index j = 1; j < grid.size(); ++j) require(grid[j] >= grid[j - 1], "encode: grid must be nondecreasing");
  EncodeResult res;
  res.empty_window = w.size() == 0;
  res.path = Mat::Zero(grid.size(), k.dz);
  const Mat x = w.values.cwiseProduct(w.mask);
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    Vec z = numcore::mlp_forward(bias, time_embed(emb, grid[j]));
    for (Eigen::Index i = 0; i < w.size() && w.times[i] <= grid[j]; ++i) {
      const double dt = w.times[i] - (i == 0 ? 0.0 : w.times[i - 1]);
      z += kernel_eval(k, grid[j] - w.times[i]) * x.row(i).transpose() * dt;
    }
    res.path.row(j) = z.transpose();
  }
  return res;
}

/// Tape handles for encoder parameters.
struct EncoderVars {
  numcore::Var pair_raw_re, pair_im, real_raw_re, residues;
  numcore::MlpVars bias;
};

/// Constant quadrature layout for one window against one grid: lag matrix
/// (clamped at 0 so masked-out entries stay finite) and causal weights dt_i.
struct QuadratureLayout {
  Mat lag;     // M x N, max(grid_j - t_i, 0)
  Mat weight;  // M x N, dt_i if t_i <= grid_j else 0

  static QuadratureLayout build(const Vec& obs_times, const Vec& grid) {
    QuadratureLayout q;
    q.lag = Mat::Zero(grid.size(), obs_times.size());
    q.weight = Mat::Zero(grid.size(), obs_times.size());
    for (Eigen::Index j = 0; j < grid.size(); ++j)
      for (Eigen::Index i = 0; i < obs_times.size(); ++i) {
        if (obs_times[i] > grid[j]) continue;
        q.lag(j, i) = grid[j] - obs_times[i];
        q.weight(j, i) = obs_times[i] - (i == 0 ? 0.0 : obs_times[i - 1]);
      }
    return q;
  }
};

/// Same discretization as `encode`, recorded on a tape. `grid_embedding`
/// is the time embedding of the grid (M x 2F). Returns the M x dz path.
///
/// The masked values are projected by all residues first (one N x dx by
/// dx x (K dz) product), then each pole mixes the projected rows in time.
inline numcore::Var encode_on_tape(numcore::Tape& tape, const EncoderVars& v, Eigen::Index dz,
                                   const QuadratureLayout& layout, const Mat& masked_values,
                                   numcore::Var grid_embedding) {
  using numcore::Var;
  const Var x = tape.constant(masked_values);
  const Var projected = tape.matmul_bt(x, v.residues);  // N x (K dz)
  const Var lag = tape.constant(layout.lag);
  const Eigen::Index pairs = tape.value(v.pair_raw_re).cols();
  const Eigen::Index reals = v.real_raw_re.valid() ? tape.value(v.real_raw_re).cols() : 0;
  Var z = numcore::mlp_on_tape(tape, v.bias, grid_embedding);
  if (pairs > 0) {
    const Var neg_decay = tape.scale(tape.softplus(v.pair_raw_re), -1.0);
    const Var pair_weight = tape.constant(2.0 * layout.weight);
    for (Eigen::Index p = 0; p < pairs; ++p) {
      const Var envelope = tape.exp(tape.scale_by(tape.slice_cols(neg_decay, p, 1), lag));
      const Var phase = tape.scale_by(tape.slice_cols(v.pair_im, p, 1), lag);
      const Var wc = tape.mul(tape.mul(envelope, tape.cos(phase)), pair_weight);
      const Var ws = tape.mul(tape.mul(envelope, tape.sin(phase)), pair_weight);
      const Var re = tape.matmul(wc, tape.slice_cols(projected, 2 * p * dz, dz));
      const Var im = tape.matmul(ws, tape.slice_cols(projected, (2 * p + 1) * dz, dz));
      z = tape.add(z, tape.sub(re, im));
    }
  }
  if (reals > 0) {
    const Var neg_decay = tape.scale(tape.softplus(v.real_raw_re), -1.0);
    const Var weight = tape.constant(layout.weight);
    for (Eigen::Index q = 0; q < reals; ++q) {
      const Var wr = tape.mul(tape.exp(tape.scale_by(tape.slice_cols(neg_decay, q, 1), lag)), weight);
      z = tape.add(z, tape.matmul(wr, tape.slice_cols(projected, (2 * pairs + q) * dz, dz)));
    }
  }
  return z;
}

}  // namespace artemis::encoder
