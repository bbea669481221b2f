#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/core/parallel.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/train/model.hpp"

namespace artemis::train {

struct LossWeights {
  double lambda1 = 0.1;  // PDE
  double lambda2 = 0.1;  // MPR
  double lambda3 = 0.1;  // consistency
  double lambda4 = 1e-3; // symbolic l1

  void validate() const {
    for (double l : {lambda1, lambda2, lambda3, lambda4})
      require(std::isfinite(l) && l >= 0.0, "LossWeights: every lambda must be finite and nonnegative");
  }

  /// Weights actually applied for an ablation variant.
  LossWeights for_variant(Variant v) const {
    LossWeights w = *this;
    switch (v) {
      case Variant::A1_NoSDE:
      case Variant::A6_MLP: w.lambda1 = w.lambda2 = w.lambda3 = 0.0; break;
      case Variant::A2_NoPDE: w.lambda1 = 0.0; break;
      case Variant::A3_NoMPR: w.lambda2 = 0.0; break;
      case Variant::A4_NoPhysics: w.lambda1 = w.lambda2 = 0.0; break;
      case Variant::A5_NoConsistency: w.lambda3 = 0.0; break;
      case Variant::A0_Full: break;
    }
    return w;
  }
};

struct LossBreakdown {
  double forecast = 0.0, pde = 0.0, mpr = 0.0, consistency = 0.0, total = 0.0;

  static LossBreakdown assemble(double f, double p, double m, double c, const LossWeights& w) {
    return {f, p, m, c, f + w.lambda1 * p + w.lambda2 * m + w.lambda3 * c};
  }
  void check_finite() const {
    const std::pair<const char*, double> parts[] = {
        {"forecast", forecast}, {"pde", pde}, {"mpr", mpr}, {"consistency", consistency}, {"total", total}};
    for (const auto& [name, v] : parts)
      if (!std::isfinite(v)) throw NumericalError(std::string("composite_loss: non-finite ") + name + " loss");
  }
};

/// One training example, already standardized.
struct Sample {
  Mat window;
  double target = 0.0;
  std::uint64_t key = 0;  // SDE noise and collocation draws
};

/// Collocation / MPR point: a detached SDE state at grid step `step`.
struct CollocationPoint {
  Vec z;
  Eigen::Index step = 0;
};

struct SampleGraph {
  Var y_hat;
  Var enc_path;             // (M + 1) x dz
  Var grid_embedding;       // (M + 1) x 2F
  std::vector<Var> states;  // M + 1 nodes (empty without the SDE)
};

/// Encoder, SDE and head for one window on `tape`.
inline SampleGraph build_sample(Tape& tape, const ParamVars& v, const ArtemisParams& p, const Mat& window,
                                std::uint64_t noise_seed, std::uint64_t key) {
  const ModelConfig& c = p.cfg;
  require(window.rows() == c.L && window.cols() == c.dx, "forward: window shape does not match the model");
  const Vec grid = c.grid();
  SampleGraph g;
  g.grid_embedding = tape.time_embed(tape.softplus(v.freq_raw), tape.constant(grid));
  g.enc_path = encoder::encode_on_tape(tape, v.enc, c.dz, encoder::QuadratureLayout::build(c.obs_times(), grid),
                                       window, g.grid_embedding);
  const Var z0 = tape.slice_rows(g.enc_path, 0, 1);
  Var terminal = z0;
  if (c.sde_enabled) {
    g.states = sde::simulate_on_tape(tape, v.sde, z0, g.grid_embedding, sde::sde_noise(noise_seed, key, c.sde_steps, c.dz),
                                     c.dt());
    terminal = g.states.back();
  }
  g.y_hat = tape.add(tape.matmul_bt(terminal, v.head_w), v.head_b);
  return g;
}

/// Number of collocation points assigned to sample i of a batch of n.
inline Eigen::Index points_for_sample(Eigen::Index i, Eigen::Index n, Eigen::Index n_coll) {
  return n_coll / n + (i < n_coll % n ? 1 : 0);
}

struct SampleResult {
  double forecast = 0.0, pde = 0.0, mpr = 0.0, consistency = 0.0;  // already divided by batch/point counts
  double y_hat = 0.0;
  long physics_evals = 0;
  std::vector<CollocationPoint> points;
  std::vector<Mat> grads;
};

struct LossContext {
  LossWeights weights;
  physics::PhysicsConfig physics;
  std::uint64_t seed = 0;
  bool want_gradients = true;
};

inline SampleResult sample_loss(const ArtemisParams& p, const Sample& s, Eigen::Index index, Eigen::Index batch,
                                const LossContext& ctx, const std::vector<CollocationPoint>* fixed_points) {
  const ModelConfig& c = p.cfg;
  const LossWeights& w = ctx.weights;
  const double inv_b = 1.0 / static_cast<double>(batch);
  Tape tape;
  const ParamVars v = params_on_tape(tape, p);
  const SampleGraph g = build_sample(tape, v, p, s.window, ctx.seed, s.key);

  SampleResult r;
  r.y_hat = tape.scalar(g.y_hat);
  Var loss = tape.scale(tape.square(tape.add_scalar(g.y_hat, -s.target)), inv_b);
  r.forecast = tape.scalar(loss);

  if (c.sde_enabled && w.lambda3 > 0.0) {
    Var acc = tape.scalar_constant(0.0);
    for (Eigen::Index j = 1; j <= c.sde_steps; ++j) {
      const Var gap = tape.sub(g.states[static_cast<std::size_t>(j)], tape.slice_rows(g.enc_path, j, 1));
      acc = tape.add(acc, tape.sum(tape.square(gap)));
    }
    const Var term = tape.scale(acc, inv_b / static_cast<double>(c.sde_steps));
    r.consistency = tape.scalar(term);
    loss = tape.add(loss, tape.scale(term, w.lambda3));
  }

  if (c.sde_enabled && (w.lambda1 > 0.0 || w.lambda2 > 0.0)) {
    if (fixed_points) {
      r.points = *fixed_points;
    } else {
      const CounterRng rng(ctx.seed);
      const Eigen::Index n = points_for_sample(index, batch, ctx.physics.n_coll);
      for (Eigen::Index k = 0; k < n; ++k) {
        const auto j = static_cast<Eigen::Index>(
            rng.below(static_cast<std::uint64_t>(c.sde_steps), stream_id(streams::kCollocation, s.key), static_cast<std::uint64_t>(k)));
        r.points.push_back({tape.value(g.states[static_cast<std::size_t>(j)]).row(0).transpose(), j});
      }
    }
    const double inv_p = 1.0 / static_cast<double>(ctx.physics.n_coll);
    const Vec grid = c.grid();
    const double kappa2 = ctx.physics.kappa * ctx.physics.kappa;
    Var pde = tape.scalar_constant(0.0), mpr = tape.scalar_constant(0.0);
    for (const auto& pt : r.points) {
      const Var input = tape.concat_cols(tape.constant(pt.z.transpose()), tape.slice_rows(g.grid_embedding, pt.step, 1));
      const sde::CoefficientVars coef = sde::coefficients_on_tape(tape, v.sde, input, c.dz);
      ++r.physics_evals;
      if (w.lambda1 > 0.0)
        pde = tape.add(pde, tape.square(physics::fk_residual_on_tape(tape, v.pricing, coef, pt.z, grid[pt.step], ctx.physics.r)));
      if (w.lambda2 > 0.0)
        mpr = tape.add(mpr, tape.max0(tape.add_scalar(physics::mpr_squared_norm_on_tape(tape, coef, c.dz), -kappa2)));
    }
    if (w.lambda1 > 0.0) {
      pde = tape.scale(pde, inv_p);
      r.pde = tape.scalar(pde);
      loss = tape.add(loss, tape.scale(pde, w.lambda1));
    }
    if (w.lambda2 > 0.0) {
      mpr = tape.scale(mpr, inv_p);
      r.mpr = tape.scalar(mpr);
      loss = tape.add(loss, tape.scale(mpr, w.lambda2));
    }
  }

  if (ctx.want_gradients) {
    tape.backward(loss);
    r.grads = gradients(tape, v, p);
  }
  return r;
}

struct CompositeResult {
  LossBreakdown loss;
  std::vector<Mat> grads;  // block order of to_blocks
  Vec y_hat;
  long physics_evals = 0;
  std::vector<std::vector<CollocationPoint>> points;  // per sample
};

/// Composite loss over a batch: forecast MSE plus weighted PDE, MPR and
/// consistency terms. Per-sample tapes run in parallel; gradients and
/// components are reduced in sample order. With `fixed_points` the
/// collocation set is taken as given instead of drawn from the SDE states.
inline CompositeResult composite_loss(const ArtemisParams& p, const std::vector<Sample>& batch, const LossContext& ctx,
                                      unsigned threads = 0,
                                      const std::vector<std::vector<CollocationPoint>>* fixed_points = nullptr) {
  require(!batch.empty(), "composite_loss: empty batch");
  ctx.weights.validate();
  ctx.physics.validate();
  require(!fixed_points || fixed_points->size() == batch.size(), "composite_loss: one point set per sample");
  const auto n = static_cast<Eigen::Index>(batch.size());
  std::vector<SampleResult> parts(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    parts[i] = sample_loss(p, batch[i], static_cast<Eigen::Index>(i), n, ctx, fixed_points ? &(*fixed_points)[i] : nullptr);
  });

  CompositeResult out;
  double f = 0.0, pde = 0.0, mpr = 0.0, con = 0.0;
  out.y_hat.resize(n);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto& s = parts[i];
    f += s.forecast, pde += s.pde, mpr += s.mpr, con += s.consistency;
    out.y_hat[static_cast<Eigen::Index>(i)] = s.y_hat;
    out.physics_evals += s.physics_evals;
    if (ctx.want_gradients) {
      if (out.grads.empty())
        out.grads = std::move(s.grads);
      else
        for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += s.grads[k];
    }
    out.points.push_back(std::move(s.points));
  }
  out.loss = LossBreakdown::assemble(f, pde, mpr, con, ctx.weights);
  out.loss.check_finite();
  return out;
}

/// Standardized predictions for many windows (no gradients). Noise is keyed
/// by window index on the evaluation stream.
inline Vec predict_standardized(const ArtemisParams& p, const std::vector<Mat>& windows, std::uint64_t seed,
                                unsigned threads = 0) {
  Vec out(static_cast<Eigen::Index>(windows.size()));
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    Tape tape;
    const ParamVars v = params_on_tape(tape, p);
    const SampleGraph g = build_sample(tape, v, p, windows[i], seed, stream_id(streams::kEvalNoise, i));
    out[static_cast<Eigen::Index>(i)] = tape.scalar(g.y_hat);
  });
  if (!out.allFinite()) throw NumericalError("predict: non-finite prediction");
  return out;
}

struct ForwardResult {
  double y_hat = 0.0;
  sde::LatentTrajectory trajectory;
  Mat enc_path;
};

/// Single-window forward pass. Without the SDE the trajectory holds only z0.
inline ForwardResult forward_pass(const ArtemisParams& p, const Mat& window, std::uint64_t seed, std::uint64_t sample) {
  Tape tape;
  const ParamVars v = params_on_tape(tape, p);
  const SampleGraph g = build_sample(tape, v, p, window, seed, sample);
  ForwardResult r;
  r.y_hat = tape.scalar(g.y_hat);
  r.enc_path = tape.value(g.enc_path);
  const Vec grid = p.cfg.grid();
  auto& tr = r.trajectory;
  tr.seed = seed, tr.sample = sample;
  if (p.cfg.sde_enabled) {
    tr.grid = grid;
    tr.states.resize(static_cast<Eigen::Index>(g.states.size()), p.cfg.dz);
    for (std::size_t j = 0; j < g.states.size(); ++j) tr.states.row(static_cast<Eigen::Index>(j)) = tape.value(g.states[j]);
    tr.noise = sde::sde_noise(seed, sample, p.cfg.sde_steps, p.cfg.dz);
  } else {
    tr.grid = grid.head(1);
    tr.states = r.enc_path.topRows(1);
  }
  return r;
}

}  // namespace artemis::train
