#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "artemis/conformal.hpp"
#include "artemis/core/error.hpp"
#include "artemis/core/parallel.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/dslob/generate.hpp"
#include "artemis/numcore/adam.hpp"
#include "artemis/symbolic.hpp"
#include "artemis/train/checkpoint.hpp"
#include "artemis/train/loss.hpp"
#include "artemis/train/metrics.hpp"
#include "artemis/train/model.hpp"

namespace artemis::train {

struct TrainConfig {
  Eigen::Index epochs = 10;
  Eigen::Index distill_epochs = 5;
  Eigen::Index batch = 64;
  double lr = 1e-3;
  double distill_lr = 1e-2;
  Eigen::Index sde_steps = 20;
  Eigen::Index dz = 8;
  Eigen::Index hidden = 32;
  Eigen::Index pole_pairs = 4;
  Eigen::Index real_poles = 0;
  Eigen::Index fourier = 4;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  Eigen::Index early_stop_patience = 5;
  double plateau_factor = 0.5;
  Eigen::Index plateau_patience = 2;
  physics::PhysicsConfig physics;
  LossWeights weights;
  bool rebalance = true;
  bool gumbel = false;
  double gumbel_tau = 1.0;
  double expression_threshold = 1e-3;
  double alpha = 0.1;
  Variant variant = Variant::A0_Full;
  unsigned threads = 0;

  void validate() const {
    require(epochs >= 1 && distill_epochs >= 1 && batch >= 1, "TrainConfig: epoch and batch counts must be at least 1");
    require(sde_steps >= 1 && dz >= 1 && hidden >= 1 && fourier >= 1, "TrainConfig: model sizes must be at least 1");
    require(pole_pairs >= 0 && real_poles >= 0 && pole_pairs + real_poles >= 1, "TrainConfig: need at least one pole");
    require(lr > 0.0 && distill_lr > 0.0, "TrainConfig: learning rates must be positive");
    require(early_stop_patience >= 1 && plateau_patience >= 1, "TrainConfig: patience must be at least 1");
    require(plateau_factor > 0.0 && plateau_factor < 1.0, "TrainConfig: plateau factor must lie in (0, 1)");
    require(horizon > 0.0 && gumbel_tau > 0.0, "TrainConfig: horizon and tau must be positive");
    require(alpha > 0.0 && alpha < 1.0, "TrainConfig: alpha must lie in (0, 1)");
    physics.validate();
    weights.validate();
  }

  ModelConfig model(Eigen::Index L, Eigen::Index dx) const {
    ModelConfig m;
    m.L = L, m.dx = dx, m.dz = dz, m.hidden = hidden, m.pole_pairs = pole_pairs, m.real_poles = real_poles;
    m.fourier = fourier, m.sde_steps = sde_steps, m.horizon = horizon;
    m.sde_enabled = variant != Variant::A1_NoSDE;
    return m;
  }
};

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// improvement, then restarts the count.
struct PlateauScheduler {
  double factor = 0.5;
  Eigen::Index patience = 2;
  double best = std::numeric_limits<double>::infinity();
  Eigen::Index bad = 0;

  bool step(double value, double& lr) {
    if (value < best) {
      best = value;
      bad = 0;
      return false;
    }
    if (++bad < patience) return false;
    lr *= factor;
    bad = 0;
    return true;
  }
};

struct HistoryRow {
  Eigen::Index epoch = 0;
  LossBreakdown train;
  double val_forecast = 0.0;
  double lr = 0.0;
  LossWeights weights;
};

inline void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.precision(17);
  os << "epoch,forecast,pde,mpr,consistency,total,val_forecast,lr,lambda1,lambda2,lambda3\r\n";
  for (const auto& r : rows)
    os << r.epoch << ',' << r.train.forecast << ',' << r.train.pde << ',' << r.train.mpr << ',' << r.train.consistency
       << ',' << r.train.total << ',' << r.val_forecast << ',' << r.lr << ',' << r.weights.lambda1 << ','
       << r.weights.lambda2 << ',' << r.weights.lambda3 << "\r\n";
}

/// Standardized windows and targets of one split.
struct PreparedSplit {
  std::vector<Mat> windows;
  Vec targets;      // standardized
  Vec raw_targets;

  Eigen::Index size() const { return static_cast<Eigen::Index>(windows.size()); }
};

inline PreparedSplit prepare(const dslob::WindowSplit& s, const Standardizer& st) {
  PreparedSplit p;
  p.windows.reserve(static_cast<std::size_t>(s.size()));
  p.raw_targets = s.target_vec();
  p.targets.resize(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    p.windows.push_back(st.window(s.window(i)));
    p.targets[i] = st.target(p.raw_targets[i]);
  }
  return p;
}

/// Deterministic permutation of [0, n) for one epoch.
inline std::vector<Eigen::Index> epoch_order(Eigen::Index n, std::uint64_t seed, Eigen::Index epoch) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  const CounterRng rng(seed);
  const auto stream = stream_id(streams::kShuffle, static_cast<std::uint64_t>(epoch));
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1), stream, static_cast<std::uint64_t>(i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

inline double mse(const Vec& a, const Vec& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

struct PretrainResult {
  std::vector<HistoryRow> history;
  Eigen::Index best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  long physics_evals = 0;
  LossWeights weights;  // after rebalancing
};

/// One rescaling of the active physics weights after the first epoch so that
/// lambda_k * L_k = lambda_k(initial) * L_forecast. Multipliers are clamped
/// to [1e-3, 1e3]; components with zero mean keep their weight.
inline LossWeights rebalance(const LossWeights& w, const LossBreakdown& epoch_mean) {
  LossWeights out = w;
  auto scale = [&](double& lambda, double comp) {
    if (lambda <= 0.0 || !(comp > 0.0)) return;
    lambda *= std::clamp(epoch_mean.forecast / comp, 1e-3, 1e3);
  };
  scale(out.lambda1, epoch_mean.pde);
  scale(out.lambda2, epoch_mean.mpr);
  scale(out.lambda3, epoch_mean.consistency);
  return out;
}

/// Pretraining without the symbolic head. Validation uses the forecast loss
/// only; the parameters of the best validation epoch are returned in `p`.
inline PretrainResult pretrain(ArtemisParams& p, const PreparedSplit& train, const PreparedSplit& val,
                               const TrainConfig& cfg) {
  cfg.validate();
  require(train.size() >= 1 && val.size() >= 1, "pretrain: need train and validation windows");
  PretrainResult out;
  LossContext ctx{cfg.weights.for_variant(cfg.variant), cfg.physics, cfg.seed, true};
  Blocks blocks = to_blocks(p);
  numcore::AdamState adam(blocks.values, {cfg.lr});
  PlateauScheduler sched{cfg.plateau_factor, cfg.plateau_patience};
  ArtemisParams best = p;
  Eigen::Index since_best = 0;

  for (Eigen::Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), cfg.seed, epoch);
    double f = 0.0, pde = 0.0, mpr = 0.0, con = 0.0;
    for (Eigen::Index start = 0; start < train.size(); start += cfg.batch) {
      const Eigen::Index nb = std::min(cfg.batch, train.size() - start);
      std::vector<Sample> batch;
      batch.reserve(static_cast<std::size_t>(nb));
      for (Eigen::Index k = 0; k < nb; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(start + k)];
        batch.push_back({train.windows[static_cast<std::size_t>(i)], train.targets[i],
                         stream_id(streams::kSdeNoise, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(i))});
      }
      CompositeResult r = composite_loss(p, batch, ctx, cfg.threads);
      out.physics_evals += r.physics_evals;
      const double share = static_cast<double>(nb) / static_cast<double>(train.size());
      f += share * r.loss.forecast, pde += share * r.loss.pde, mpr += share * r.loss.mpr, con += share * r.loss.consistency;
      numcore::adam_step(adam, blocks.values, r.grads, blocks.names);
      from_blocks(p, blocks.values);
    }
    HistoryRow row;
    row.epoch = epoch + 1;
    row.train = LossBreakdown::assemble(f, pde, mpr, con, ctx.weights);
    row.weights = ctx.weights;
    row.val_forecast = mse(predict_standardized(p, val.windows, cfg.seed, cfg.threads), val.targets);
    if (!std::isfinite(row.val_forecast)) throw NumericalError("pretrain: non-finite validation loss", epoch + 1);
    if (row.val_forecast < out.best_val) {
      out.best_val = row.val_forecast;
      out.best_epoch = epoch + 1;
      best = p;
      since_best = 0;
    } else {
      ++since_best;
    }
    sched.step(row.val_forecast, adam.cfg.lr);
    row.lr = adam.cfg.lr;
    out.history.push_back(row);
    if (epoch == 0 && cfg.rebalance) ctx.weights = rebalance(ctx.weights, row.train);
    if (since_best >= cfg.early_stop_patience) break;
  }
  out.weights = ctx.weights;
  p = best;
  return out;
}

// ---------------------------------------------------------------------------
// Flattened baseline

inline Vec predict_flat(const FlatMlp& m, const std::vector<Mat>& windows) {
  Vec out(static_cast<Eigen::Index>(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i) out[static_cast<Eigen::Index>(i)] = m.predict(windows[i]);
  if (!out.allFinite()) throw NumericalError("predict: non-finite prediction");
  return out;
}

/// Same loop as `pretrain` with MSE only; one tape per batch.
inline PretrainResult pretrain_flat(FlatMlp& m, const PreparedSplit& train, const PreparedSplit& val,
                                    const TrainConfig& cfg) {
  cfg.validate();
  PretrainResult out;
  Blocks blocks = to_blocks(m);
  numcore::AdamState adam(blocks.values, {cfg.lr});
  PlateauScheduler sched{cfg.plateau_factor, cfg.plateau_patience};
  FlatMlp best = m;
  Eigen::Index since_best = 0;
  const Eigen::Index din = m.net.din();
  for (Eigen::Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), cfg.seed, epoch);
    double f = 0.0;
    for (Eigen::Index start = 0; start < train.size(); start += cfg.batch) {
      const Eigen::Index nb = std::min(cfg.batch, train.size() - start);
      Mat x(nb, din), y(nb, 1);
      for (Eigen::Index k = 0; k < nb; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(start + k)];
        x.row(k) = FlatMlp::flatten(train.windows[static_cast<std::size_t>(i)]).transpose();
        y(k, 0) = train.targets[i];
      }
      Tape tape;
      const numcore::MlpVars v = numcore::mlp_leaves(tape, m.net);
      const Var pred = numcore::mlp_on_tape(tape, v, tape.constant(x));
      const Var loss = tape.scale(tape.sum(tape.square(tape.sub(pred, tape.constant(y)))), 1.0 / static_cast<double>(nb));
      const double lv = tape.scalar(loss);
      if (!std::isfinite(lv)) throw NumericalError("composite_loss: non-finite forecast loss", epoch + 1);
      f += lv * static_cast<double>(nb) / static_cast<double>(train.size());
      tape.backward(loss);
      std::vector<Mat> g{tape.grad(v.W1), tape.grad(v.b1).transpose(), tape.grad(v.W2), tape.grad(v.b2).transpose()};
      numcore::adam_step(adam, blocks.values, g, blocks.names);
      from_blocks(m, blocks.values);
    }
    HistoryRow row;
    row.epoch = epoch + 1;
    row.weights = LossWeights{}.for_variant(Variant::A6_MLP);
    row.train = LossBreakdown::assemble(f, 0.0, 0.0, 0.0, row.weights);
    row.val_forecast = mse(predict_flat(m, val.windows), val.targets);
    if (!std::isfinite(row.val_forecast)) throw NumericalError("pretrain: non-finite validation loss", epoch + 1);
    if (row.val_forecast < out.best_val) {
      out.best_val = row.val_forecast, out.best_epoch = epoch + 1, best = m, since_best = 0;
    } else {
      ++since_best;
    }
    sched.step(row.val_forecast, adam.cfg.lr);
    row.lr = adam.cfg.lr;
    out.history.push_back(row);
    if (since_best >= cfg.early_stop_patience) break;
  }
  out.weights = LossWeights{}.for_variant(Variant::A6_MLP);
  m = best;
  return out;
}

// ---------------------------------------------------------------------------
// Symbolic distillation

struct DistillResult {
  symbolic::BasisLibrary lib;
  symbolic::SymbolicHead head;
  std::string expression;
  double mse = 0.0;  // teacher gap without the l1 term
};

inline Mat feature_matrix(const symbolic::BasisLibrary& lib, const std::vector<Mat>& windows, unsigned threads = 0) {
  Mat f(static_cast<Eigen::Index>(windows.size()), lib.size());
  parallel_for(windows.size(), threads,
               [&](std::size_t i) { f.row(static_cast<Eigen::Index>(i)) = symbolic::library_features(lib, windows[i]).transpose(); });
  return f;
}

/// Fits the symbolic head to teacher predictions on fixed library features.
/// The teacher is an input, so nothing upstream can move. Columns are rescaled
/// to unit RMS for the optimizer (same objective, w_k = u_k / s_k), and the
/// L1 term is applied as a proximal step.
inline DistillResult distill_features(const symbolic::BasisLibrary& lib, const Mat& features, const Vec& teacher,
                                      const TrainConfig& cfg) {
  require(features.rows() == teacher.size() && features.cols() == lib.size(), "distill: feature shape mismatch");
  require(teacher.allFinite(), "distill: non-finite teacher predictions");
  require(features.allFinite(), "distill: non-finite library features");
  DistillResult out;
  out.lib = lib;
  out.head = symbolic::SymbolicHead::zeros(lib.size(), cfg.weights.lambda4);
  if (cfg.gumbel) {
    out.head.groups = symbolic::moving_average_groups(lib);
    out.head.tau = cfg.gumbel_tau;
  }
  const Eigen::Index n = teacher.size();
  Vec scale = (features.colwise().squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, n))).cwiseSqrt().transpose();
  scale = scale.unaryExpr([](double v) { return v > 1e-12 ? v : 1.0; });
  for (const auto& g : out.head.groups) {
    double m = 0.0;
    for (auto k : g.members) m = std::max(m, scale[k]);
    for (auto k : g.members) scale[k] = m;
  }
  const Mat scaled = features * scale.cwiseInverse().asDiagonal();

  symbolic::SymbolicHead smooth = out.head;
  smooth.l1_weight = 0.0;
  symbolic::DistillState state(smooth, {cfg.distill_lr});
  const CounterRng rng(cfg.seed);
  PlateauScheduler plateau{cfg.plateau_factor, cfg.plateau_patience};
  std::uint64_t step = 0;
  for (Eigen::Index epoch = 0; epoch < cfg.distill_epochs; ++epoch) {
    double epoch_loss = 0.0;
    // geometric anneal from tau0 down to tau0 / 10
    if (cfg.gumbel)
      smooth.tau = cfg.gumbel_tau *
                   std::pow(0.1, static_cast<double>(epoch) / static_cast<double>(std::max<Eigen::Index>(1, cfg.distill_epochs - 1)));
    const auto order = epoch_order(n, cfg.seed ^ 0x5b1dULL, epoch);
    for (Eigen::Index start = 0; start < n; start += cfg.batch) {
      const Eigen::Index nb = std::min(cfg.batch, n - start);
      Mat fb(nb, lib.size());
      Vec tb(nb);
      for (Eigen::Index k = 0; k < nb; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(start + k)];
        fb.row(k) = scaled.row(i);
        tb[k] = teacher[i];
      }
      const auto g = cfg.gumbel ? symbolic::Gumbels::draw(smooth, rng, static_cast<std::uint64_t>(epoch), step)
                                : std::vector<Vec>{};
      const double loss = symbolic::distill_step(smooth, state, fb, tb, g);
      if (!std::isfinite(loss)) throw NumericalError("distill: non-finite loss", epoch + 1);
      epoch_loss += loss * static_cast<double>(nb) / static_cast<double>(n);
      const double shrink = state.adam.cfg.lr * out.head.l1_weight;
      for (Eigen::Index k = 0; k < smooth.weights.size(); ++k) {
        const double u = smooth.weights[k];
        smooth.weights[k] = std::copysign(std::max(std::abs(u) - shrink / scale[k], 0.0), u);
      }
      ++step;
    }
    plateau.step(epoch_loss + out.head.l1_weight * smooth.weights.cwiseQuotient(scale).lpNorm<1>(), state.adam.cfg.lr);
  }
  smooth.weights = smooth.weights.cwiseQuotient(scale);
  smooth.l1_weight = out.head.l1_weight;
  out.head = smooth;
  out.mse = mse(features * symbolic::effective_weights(out.head), teacher);
  out.expression = symbolic::extract_expression(out.head, lib, cfg.expression_threshold);
  return out;
}

inline DistillResult distill(const std::vector<Mat>& windows, const Vec& teacher, const TrainConfig& cfg) {
  require(!windows.empty(), "distill: no windows");
  const auto lib = symbolic::build_library(windows.front().cols(), windows.front().rows());
  return distill_features(lib, feature_matrix(lib, windows, cfg.threads), teacher, cfg);
}

// ---------------------------------------------------------------------------
// Trained model bundle

struct TrainedModel {
  Variant variant = Variant::A0_Full;
  ArtemisParams params;
  FlatMlp flat;
  Standardizer stats;
  std::uint64_t seed = 0;
  Vec symbolic_weights;  // over the default library of (dx, L)
  std::string expression = "ŷ = 0";

  Eigen::Index L() const { return variant == Variant::A6_MLP ? flat.net.din() / stats.x_mean.size() : params.cfg.L; }
  Eigen::Index dx() const { return stats.x_mean.size(); }
  double center() const { return stats.y_mean; }

  /// Predictions in target units for raw windows.
  Vec predict(const std::vector<Mat>& raw_windows, unsigned threads = 0) const {
    std::vector<Mat> w;
    w.reserve(raw_windows.size());
    for (const auto& x : raw_windows) w.push_back(stats.window(x));
    return predict_prepared(w, threads);
  }
  Vec predict_prepared(const std::vector<Mat>& windows, unsigned threads = 0) const {
    const Vec z = variant == Variant::A6_MLP ? predict_flat(flat, windows) : predict_standardized(params, windows, seed, threads);
    return z.unaryExpr([&](double v) { return stats.untarget(v); });
  }
};

inline Checkpoint to_checkpoint(const TrainedModel& m) {
  Checkpoint c;
  const auto& mc = m.params.cfg;
  c.put_scalar("meta.variant", static_cast<double>(static_cast<int>(m.variant)));
  c.put("meta.seed", (Mat(1, 2) << static_cast<double>(m.seed >> 32), static_cast<double>(m.seed & 0xffffffffULL)).finished());
  c.put("model.config", (Mat(1, 11) << static_cast<double>(mc.L), static_cast<double>(mc.dx), static_cast<double>(mc.dz),
                         static_cast<double>(mc.hidden), static_cast<double>(mc.pole_pairs),
                         static_cast<double>(mc.real_poles), static_cast<double>(mc.fourier),
                         static_cast<double>(mc.sde_steps), mc.window_span, mc.horizon, mc.sde_enabled ? 1.0 : 0.0)
                            .finished());
  c.put("stats.x_mean", m.stats.x_mean.transpose());
  c.put("stats.x_std", m.stats.x_std.transpose());
  c.put("stats.y", (Mat(1, 2) << m.stats.y_mean, m.stats.y_std).finished());
  const Blocks b = m.variant == Variant::A6_MLP ? to_blocks(m.flat) : to_blocks(m.params);
  for (std::size_t i = 0; i < b.values.size(); ++i) c.put("param." + b.names[i], b.values[i]);
  c.put("symbolic.weights", m.symbolic_weights.transpose());
  return c;
}

inline TrainedModel from_checkpoint(const Checkpoint& c, const std::string& expression = "ŷ = 0") {
  TrainedModel m;
  const int v = static_cast<int>(c.scalar("meta.variant"));
  require(v >= 0 && v < 7, "checkpoint: invalid variant");
  m.variant = static_cast<Variant>(v);
  const Mat& s = c.at("meta.seed");
  m.seed = (static_cast<std::uint64_t>(s(0, 0)) << 32) | static_cast<std::uint64_t>(s(0, 1));
  const Mat& mc = c.at("model.config");
  require(mc.cols() == 11, "checkpoint: bad model.config block");
  ModelConfig cfg;
  cfg.L = static_cast<Eigen::Index>(mc(0, 0)), cfg.dx = static_cast<Eigen::Index>(mc(0, 1));
  cfg.dz = static_cast<Eigen::Index>(mc(0, 2)), cfg.hidden = static_cast<Eigen::Index>(mc(0, 3));
  cfg.pole_pairs = static_cast<Eigen::Index>(mc(0, 4)), cfg.real_poles = static_cast<Eigen::Index>(mc(0, 5));
  cfg.fourier = static_cast<Eigen::Index>(mc(0, 6)), cfg.sde_steps = static_cast<Eigen::Index>(mc(0, 7));
  cfg.window_span = mc(0, 8), cfg.horizon = mc(0, 9), cfg.sde_enabled = mc(0, 10) != 0.0;
  m.stats.x_mean = c.at("stats.x_mean").row(0).transpose();
  m.stats.x_std = c.at("stats.x_std").row(0).transpose();
  m.stats.y_mean = c.at("stats.y")(0, 0), m.stats.y_std = c.at("stats.y")(0, 1);
  std::vector<Mat> blocks;
  for (std::size_t i = 0; i < c.names.size(); ++i)
    if (c.names[i].starts_with("param.")) blocks.push_back(c.blocks[i]);
  if (m.variant == Variant::A6_MLP) {
    from_blocks(m.flat, blocks);
    m.params.cfg = cfg;
  } else {
    m.params = init_params(cfg, 0);
    from_blocks(m.params, blocks);
  }
  m.symbolic_weights = c.at("symbolic.weights").row(0).transpose();
  m.expression = expression;
  return m;
}

// ---------------------------------------------------------------------------
// Full run: pretrain, distill, calibrate

struct TrainOutcome {
  TrainedModel model;
  PretrainResult pretrain;
  DistillResult distill;
  std::vector<double> calibration_residuals;  // sorted, target units
  std::vector<double> calibration_chronological;
  double q = 0.0;
};

inline TrainedModel init_model(const dslob::WindowedDataset& ds, const TrainConfig& cfg) {
  TrainedModel m;
  m.variant = cfg.variant;
  m.seed = cfg.seed;
  m.stats = Standardizer::fit(ds.train);
  const auto mc = cfg.model(ds.train.L, ds.train.dx);
  if (cfg.variant == Variant::A6_MLP) {
    m.flat = FlatMlp::init(ds.train.L, ds.train.dx, cfg.hidden, cfg.seed);
    m.params.cfg = mc;
  } else {
    m.params = init_params(mc, cfg.seed);
  }
  return m;
}

/// `stage`, when given, names the step currently running.
inline TrainOutcome train_model(const dslob::WindowedDataset& ds, const TrainConfig& cfg, bool with_distill = true,
                                std::string* stage = nullptr) {
  auto at = [&](const char* name) {
    if (stage) *stage = name;
  };
  at("config");
  cfg.validate();
  require(ds.train.size() >= 2 && ds.val.size() >= 1, "train: dataset needs train and validation windows");
  TrainOutcome out;
  out.model = init_model(ds, cfg);
  const PreparedSplit train = prepare(ds.train, out.model.stats);
  const PreparedSplit val = prepare(ds.val, out.model.stats);
  at("pretrain");
  out.pretrain = cfg.variant == Variant::A6_MLP ? pretrain_flat(out.model.flat, train, val, cfg)
                                                : pretrain(out.model.params, train, val, cfg);
  if (with_distill) {
    at("distill");
    const Vec teacher = out.model.variant == Variant::A6_MLP ? predict_flat(out.model.flat, train.windows)
                                                             : predict_standardized(out.model.params, train.windows, cfg.seed, cfg.threads);
    out.distill = distill(train.windows, teacher, cfg);
    out.model.symbolic_weights = symbolic::effective_weights(out.distill.head);
    out.model.expression = out.distill.expression;
  } else {
    out.model.symbolic_weights = Vec::Zero(0);
  }
  at("calibrate");
  const Vec yhat = out.model.predict_prepared(val.windows, cfg.threads);
  out.calibration_chronological = conformal::CalibrationSet::from_predictions(val.raw_targets, yhat).residuals;
  out.calibration_residuals = out.calibration_chronological;
  std::sort(out.calibration_residuals.begin(), out.calibration_residuals.end());
  out.q = conformal::split_quantile(out.calibration_residuals, cfg.alpha);
  return out;
}

struct AblationRow {
  Variant variant = Variant::A0_Full;
  MetricsReport metrics;
  long physics_evals = 0;
  Eigen::Index best_epoch = 0;
};

/// Trains each variant with identical seeds and epochs and scores it on the
/// test split. DirAcc is centered at the training-target mean.
inline std::vector<AblationRow> run_ablation(const dslob::WindowedDataset& ds, const TrainConfig& cfg,
                                             const std::vector<Variant>& variants = {kAllVariants.begin(), kAllVariants.end()}) {
  require(ds.test.size() >= 2, "run_ablation: test split needs at least two windows");
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    TrainConfig c = cfg;
    c.variant = v;
    const TrainOutcome t = train_model(ds, c, false);
    std::vector<Mat> test;
    for (Eigen::Index i = 0; i < ds.test.size(); ++i) test.push_back(ds.test.window(i));
    AblationRow r;
    r.variant = v;
    r.metrics = evaluate(t.model.predict(test, c.threads), ds.test.target_vec(), t.model.center());
    r.physics_evals = t.pretrain.physics_evals;
    r.best_epoch = t.pretrain.best_epoch;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace artemis::train
