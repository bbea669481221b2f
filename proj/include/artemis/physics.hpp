#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/numcore/mlp.hpp"
#include "artemis/numcore/tape.hpp"
#include "artemis/sde.hpp"

namespace artemis::physics {

using numcore::Mat;
using numcore::Mlp1h;
using numcore::Vec;

/// Auxiliary pricing network V(z, t); input is [z; t] with raw time.
struct PricingNet {
  Mlp1h net;  // din = dz + 1, dout = 1

  double value(const Vec& u) const { return numcore::mlp_forward(net, u)[0]; }
  Vec grad(const Vec& u) const { return numcore::mlp_input_grad(net, u); }
  Mat hessian(const Vec& u) const { return numcore::mlp_input_hessian(net, u); }
};

struct PhysicsConfig {
  double r = 0.0;
  double kappa = 2.0;
  int n_coll = 64;

  void validate() const {
    require(kappa > 0.0, "PhysicsConfig: kappa must be positive");
    require(n_coll >= 1, "PhysicsConfig: n_coll must be at least 1");
  }
};

/// Point in latent space-time at which a regularizer is evaluated.
struct SpaceTimePoint {
  Vec z;
  double t = 0.0;
};

/// dV/dt + mu . grad_z V + 1/2 tr(sigma sigma^T hess_z V) - r V for any
/// pricing function exposing value/grad/hessian over the stacked input [z; t].
template <class Pricing>
double fk_residual_generic(const Pricing& V, const Vec& mu, const Mat& sigma, const Vec& z, double t, double r) {
  const auto dz = z.size();
  Vec u(dz + 1);
  u << z, t;
  const Vec g = V.grad(u);
  const Mat H = V.hessian(u);
  const Mat hzz = H.topLeftCorner(dz, dz);
  const double diffusion_term = 0.5 * (sigma * sigma.transpose() * hzz).trace();
  return g[dz] + mu.dot(g.head(dz)) + diffusion_term - r * V.value(u);
}

inline double fk_residual(const PricingNet& V, const sde::DriftNet& d, const sde::DiffusionNet& s,
                          const encoder::TimeEmbedding& emb, const Vec& z, double t, double r = 0.0) {
  return fk_residual_generic(V, sde::drift_eval(d, emb, z, t), sde::diffusion_eval(s, emb, z, t), z, t, r);
}

inline double pde_loss(const PricingNet& V, const sde::DriftNet& d, const sde::DiffusionNet& s,
                       const encoder::TimeEmbedding& emb, const std::vector<SpaceTimePoint>& coll, double r = 0.0) {
  require(!coll.empty(), "pde_loss: no collocation points");
  double acc = 0.0;
  for (const auto& p : coll) {
    const double res = fk_residual(V, d, s, emb, p.z, p.t, r);
    acc += res * res;
  }
  return acc / static_cast<double>(coll.size());
}

/// Mean hinge max(0, |lambda|^2 - kappa^2) over the sampled points.
inline double mpr_loss(const sde::DriftNet& d, const sde::DiffusionNet& s, const encoder::TimeEmbedding& emb,
                       const std::vector<SpaceTimePoint>& samples, double kappa) {
  require(!samples.empty(), "mpr_loss: no sample points");
  double acc = 0.0;
  for (const auto& p : samples) {
    const Vec lambda = sde::market_price_of_risk(d, s, emb, p.z, p.t);
    acc += std::max(0.0, lambda.squaredNorm() - kappa * kappa);
  }
  return acc / static_cast<double>(samples.size());
}

/// Hinge on precomputed MPR vectors.
inline double mpr_hinge(const std::vector<Vec>& lambdas, double kappa) {
  require(!lambdas.empty(), "mpr_hinge: no sample points");
  double acc = 0.0;
  for (const auto& l : lambdas) acc += std::max(0.0, l.squaredNorm() - kappa * kappa);
  return acc / static_cast<double>(lambdas.size());
}

/// (1/M) sum_{j=1..M} |z_sde_j - z_enc_j|^2 over grids t_0 .. t_M.
inline double consistency_loss(const Mat& sde_states, const Mat& enc_path) {
  require(sde_states.rows() == enc_path.rows() && sde_states.cols() == enc_path.cols(),
          "consistency_loss: trajectory and encoder path are on different grids");
  require(sde_states.rows() >= 2, "consistency_loss: need at least one step");
  const auto m = sde_states.rows() - 1;
  return (sde_states.bottomRows(m) - enc_path.bottomRows(m)).squaredNorm() / static_cast<double>(m);
}

inline double consistency_loss(const sde::LatentTrajectory& traj, const Mat& enc_path) {
  return consistency_loss(traj.states, enc_path);
}

// ---------------------------------------------------------------------------
// Tape builders

/// Residual at a fixed point (z, t) with drift/diffusion coefficients
/// already on the tape. The second-order term uses
/// tr(sigma sigma^T W^T diag(c) W) = sum_h c_h |(W sigma)_h|^2,
/// where W is the z-block of the first layer and c = w2 .* (-2 h (1 - h^2)).
inline numcore::Var fk_residual_on_tape(numcore::Tape& tape, const numcore::MlpVars& V,
                                        const sde::CoefficientVars& coef, const Vec& z, double t, double r) {
  using numcore::Var;
  const Eigen::Index dz = z.size();
  Mat u(1, dz + 1);
  u << z.transpose(), t;
  const Var h = tape.tanh(tape.add_row_vec(tape.matmul_bt(tape.constant(u), V.W1), V.b1));  // 1 x H
  const Var slope = tape.mul(V.W2, tape.add_scalar(tape.scale(tape.square(h), -1.0), 1.0));  // w2 .* (1 - h^2)
  const Var grad_u = tape.matmul(slope, V.W1);                                               // 1 x (dz + 1)
  const Var dv_dt = tape.slice_cols(grad_u, dz, 1);
  const Var advection = tape.sum(tape.mul(coef.mu, tape.slice_cols(grad_u, 0, dz)));
  const Var curvature = tape.mul(slope, tape.scale(h, -2.0));  // 1 x H
  const Var sigma = dz > 1 ? tape.mul_row_vec(tape.unit_lower_mat(coef.packed_lower, dz), coef.diag)
                           : coef.diag;
  const Var w_sigma = tape.matmul(tape.slice_cols(V.W1, 0, dz), sigma);  // H x dz
  const Var diffusion = tape.scale(tape.matmul(curvature, tape.row_sums(tape.square(w_sigma))), 0.5);
  Var res = tape.add(tape.add(dv_dt, advection), diffusion);
  if (r != 0.0) {
    const Var value = tape.add(tape.matmul_bt(h, V.W2), V.b2);
    res = tape.sub(res, tape.scale(value, r));
  }
  return res;
}

/// |sigma^{-1} mu|^2 from coefficients on the tape.
inline numcore::Var mpr_squared_norm_on_tape(numcore::Tape& tape, const sde::CoefficientVars& coef, Eigen::Index dz) {
  const numcore::Var y = dz > 1 ? tape.unit_lower_solve(coef.packed_lower, coef.mu) : coef.mu;
  return tape.sum(tape.square(tape.div(y, coef.diag)));
}

}  // namespace artemis::physics
