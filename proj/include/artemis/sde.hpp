#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>

#include "artemis/core/error.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/encoder.hpp"
#include "artemis/numcore/mlp.hpp"
#include "artemis/numcore/tape.hpp"

namespace artemis::sde {

using numcore::Mat;
using numcore::Mlp1h;
using numcore::Vec;

/// State norm beyond which a trajectory is treated as diverged.
inline constexpr double kBlowUpNorm = 1e6;

struct DriftNet {
  Mlp1h net;  // din = dz + 2F, dout = dz
};

/// Factored diffusion sigma = L D with L unit lower triangular and D a
/// positive diagonal (softplus of the second network's output).
struct DiffusionNet {
  Mlp1h lnet;  // dout = dz (dz - 1) / 2, row-major strictly-lower entries
  Mlp1h dnet;  // dout = dz
};

inline Vec network_input(const Vec& z, const encoder::TimeEmbedding& emb, double t) {
  Vec u(z.size() + emb.size());
  u << z, encoder::time_embed(emb, t);
  return u;
}

inline Vec drift_eval(const DriftNet& d, const encoder::TimeEmbedding& emb, const Vec& z, double t) {
  return numcore::mlp_forward(d.net, network_input(z, emb, t));
}

inline Mat unit_lower_from_packed(const Vec& packed, Eigen::Index dz) {
  require(packed.size() == dz * (dz - 1) / 2, "unit_lower_from_packed: size mismatch");
  Mat L = Mat::Identity(dz, dz);
  Eigen::Index c = 0;
  for (Eigen::Index i = 1; i < dz; ++i)
    for (Eigen::Index j = 0; j < i; ++j) L(i, j) = packed[c++];
  return L;
}

struct DiffusionFactors {
  Mat L;  // unit lower triangular
  Vec D;  // positive diagonal
  Mat sigma() const { return L * D.asDiagonal(); }
};

inline DiffusionFactors diffusion_factors(const DiffusionNet& s, const encoder::TimeEmbedding& emb, const Vec& z,
                                          double t) {
  const Vec u = network_input(z, emb, t);
  const auto dz = z.size();
  DiffusionFactors f;
  f.L = dz > 1 ? unit_lower_from_packed(numcore::mlp_forward(s.lnet, u), dz) : Mat::Identity(dz, dz);
  f.D = numcore::mlp_forward(s.dnet, u).unaryExpr([](double x) { return numcore::softplus(x); });
  return f;
}

inline Mat diffusion_eval(const DiffusionNet& s, const encoder::TimeEmbedding& emb, const Vec& z, double t) {
  return diffusion_factors(s, emb, z, t).sigma();
}

/// lambda = sigma^{-1} mu by forward substitution against L, then division
/// by D. sigma^{-1} is never formed.
inline Vec market_price_of_risk(const DriftNet& d, const DiffusionNet& s, const encoder::TimeEmbedding& emb,
                                const Vec& z, double t) {
  const Vec mu = drift_eval(d, emb, z, t);
  const DiffusionFactors f = diffusion_factors(s, emb, z, t);
  const Vec y = f.L.triangularView<Eigen::UnitLower>().solve(mu);
  return y.cwiseQuotient(f.D);
}

/// Elementwise mu / diag(sigma), the simplified form. Coincides with the
/// triangular solve only when L = I.
inline Vec market_price_of_risk_elementwise(const DriftNet& d, const DiffusionNet& s,
                                            const encoder::TimeEmbedding& emb, const Vec& z, double t) {
  const Vec mu = drift_eval(d, emb, z, t);
  const Mat sigma = diffusion_eval(s, emb, z, t);
  return mu.cwiseQuotient(sigma.diagonal());
}

struct LatentTrajectory {
  Vec grid;    // t_0 .. t_M
  Mat states;  // (M + 1) x dz
  Mat noise;   // M x dw
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
};

/// Standard-normal draws for one sample, keyed by (seed, sample, step).
inline Mat sde_noise(std::uint64_t seed, std::uint64_t sample, Eigen::Index steps, Eigen::Index dw) {
  const CounterRng rng(seed);
  Mat eps(steps, dw);
  for (Eigen::Index j = 0; j < steps; ++j)
    for (Eigen::Index k = 0; k < dw; ++k)
      eps(j, k) = rng.normal(stream_id(streams::kSdeNoise, sample, static_cast<std::uint64_t>(j)),
                             static_cast<std::uint64_t>(k));
  return eps;
}

/// Euler-Maruyama with caller-supplied noise (replay path).
/// `drift(z, t) -> Vec` and `diffusion(z, t) -> Mat` (dz x dw).
template <class DriftFn, class DiffusionFn>
LatentTrajectory euler_maruyama_with_noise(DriftFn&& drift, DiffusionFn&& diffusion, const Vec& z0, double t0,
                                           double horizon, const Mat& noise) {
  const Eigen::Index steps = noise.rows();
  require(steps >= 1, "euler_maruyama: need at least one step");
  require(horizon > 0.0, "euler_maruyama: horizon must be positive");
  const double dt = horizon / static_cast<double>(steps);
  const double sqdt = std::sqrt(dt);
  LatentTrajectory tr;
  tr.grid.resize(steps + 1);
  for (Eigen::Index j = 0; j <= steps; ++j) tr.grid[j] = t0 + static_cast<double>(j) * dt;
  tr.states.resize(steps + 1, z0.size());
  tr.states.row(0) = z0.transpose();
  tr.noise = noise;
  Vec z = z0;
  for (Eigen::Index j = 0; j < steps; ++j) {
    const double t = tr.grid[j];
    const Vec eps = noise.row(j).transpose();
    z = z + drift(z, t) * dt + diffusion(z, t) * eps * sqdt;
    if (!z.allFinite() || z.norm() > kBlowUpNorm)
      throw NumericalError("euler_maruyama: trajectory diverged at step " + std::to_string(j + 1), j + 1);
    tr.states.row(j + 1) = z.transpose();
  }
  return tr;
}

/// z_{j+1} = z_j + mu(z_j, t_j) dt + sigma(z_j, t_j) sqrt(dt) eps_j on a uniform grid
/// from t0 to t0 + horizon, with eps drawn from the (seed, sample) stream.
template <class DriftFn, class DiffusionFn>
LatentTrajectory euler_maruyama(DriftFn&& drift, DiffusionFn&& diffusion, const Vec& z0, double horizon,
                                Eigen::Index steps, std::uint64_t seed, std::uint64_t sample = 0,
                                Eigen::Index dw = -1, double t0 = 0.0) {
  require(steps >= 1, "euler_maruyama: need at least one step");
  if (dw < 0) dw = z0.size();
  auto tr = euler_maruyama_with_noise(drift, diffusion, z0, t0, horizon, sde_noise(seed, sample, steps, dw));
  tr.seed = seed;
  tr.sample = sample;
  return tr;
}

/// Convenience overload for learned networks.
inline LatentTrajectory simulate(const DriftNet& d, const DiffusionNet& s, const encoder::TimeEmbedding& emb,
                                 const Vec& z0, double t0, double horizon, Eigen::Index steps, std::uint64_t seed,
                                 std::uint64_t sample = 0) {
  return euler_maruyama([&](const Vec& z, double t) { return drift_eval(d, emb, z, t); },
                        [&](const Vec& z, double t) { return diffusion_eval(s, emb, z, t); }, z0, horizon, steps,
                        seed, sample, z0.size(), t0);
}

// ---------------------------------------------------------------------------
// Tape builders

struct SdeVars {
  numcore::MlpVars drift, lnet, dnet;
};

/// Drift, packed L and D at one batch of inputs (rows = points).
struct CoefficientVars {
  numcore::Var mu, packed_lower, diag;
};

inline CoefficientVars coefficients_on_tape(numcore::Tape& tape, const SdeVars& v, numcore::Var input,
                                            Eigen::Index dz) {
  CoefficientVars c;
  c.mu = numcore::mlp_on_tape(tape, v.drift, input);
  if (dz > 1) c.packed_lower = numcore::mlp_on_tape(tape, v.lnet, input);
  c.diag = tape.softplus(numcore::mlp_on_tape(tape, v.dnet, input));
  return c;
}

/// Unrolled Euler-Maruyama for one sample. `z0` is 1 x dz, `embedding`
/// holds one row per grid time t_0 .. t_{M-1} (or more), `noise` is M x dz.
/// Returns the M + 1 states as 1 x dz nodes; throws NumericalError on blow-up.
inline std::vector<numcore::Var> simulate_on_tape(numcore::Tape& tape, const SdeVars& v, numcore::Var z0,
                                                  numcore::Var embedding, const Mat& noise, double dt) {
  using numcore::Var;
  const Eigen::Index dz = tape.value(z0).cols();
  const double sqdt = std::sqrt(dt);
  std::vector<Var> states{z0};
  states.reserve(static_cast<std::size_t>(noise.rows() + 1));
  for (Eigen::Index j = 0; j < noise.rows(); ++j) {
    const Var& z = states.back();
    const Var input = tape.concat_cols(z, tape.slice_rows(embedding, j, 1));
    const CoefficientVars c = coefficients_on_tape(tape, v, input, dz);
    const Var scaled = tape.mul(c.diag, tape.constant(noise.row(j) * sqdt));
    const Var shock = dz > 1 ? tape.unit_lower_mul(c.packed_lower, scaled) : scaled;
    const Var next = tape.add(tape.add(z, tape.scale(c.mu, dt)), shock);
    const Mat& val = tape.value(next);
    if (!val.allFinite() || val.norm() > kBlowUpNorm)
      throw NumericalError("euler_maruyama: trajectory diverged at step " + std::to_string(j + 1), j + 1);
    states.push_back(next);
  }
  return states;
}

}  // namespace artemis::sde
