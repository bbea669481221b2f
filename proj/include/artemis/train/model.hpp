#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/core/rng.hpp"
#include "artemis/dslob/generate.hpp"
#include "artemis/encoder.hpp"
#include "artemis/numcore/mlp.hpp"
#include "artemis/numcore/tape.hpp"
#include "artemis/physics.hpp"
#include "artemis/sde.hpp"

namespace artemis::train {

using numcore::Mat;
using numcore::Mlp1h;
using numcore::Tape;
using numcore::Var;
using numcore::Vec;

enum class Variant { A0_Full, A1_NoSDE, A2_NoPDE, A3_NoMPR, A4_NoPhysics, A5_NoConsistency, A6_MLP };

inline constexpr std::array<Variant, 7> kAllVariants{Variant::A0_Full,      Variant::A1_NoSDE,
                                                     Variant::A2_NoPDE,      Variant::A3_NoMPR,
                                                     Variant::A4_NoPhysics,  Variant::A5_NoConsistency,
                                                     Variant::A6_MLP};

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::A0_Full: return "A0_Full";
    case Variant::A1_NoSDE: return "A1_NoSDE";
    case Variant::A2_NoPDE: return "A2_NoPDE";
    case Variant::A3_NoMPR: return "A3_NoMPR";
    case Variant::A4_NoPhysics: return "A4_NoPhysics";
    case Variant::A5_NoConsistency: return "A5_NoConsistency";
    case Variant::A6_MLP: return "A6_MLP";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == s || variant_name(v).substr(0, 2) == s) return v;
  throw ContractViolation("unknown ablation variant '" + s + "'");
}

struct ModelConfig {
  Eigen::Index L = 20;
  Eigen::Index dx = 85;
  Eigen::Index dz = 8;
  Eigen::Index hidden = 32;
  Eigen::Index pole_pairs = 4;  // K = 2 * pairs + reals poles
  Eigen::Index real_poles = 0;
  Eigen::Index fourier = 4;     // F
  Eigen::Index sde_steps = 20;  // M
  double window_span = 1.0;     // T
  double horizon = 1.0;         // H, SDE runs on [T, T + H]
  bool sde_enabled = true;      // false: A1, predict from enc(T)

  void validate() const {
    require(L >= 1 && dx >= 1 && dz >= 1 && hidden >= 1 && fourier >= 1 && sde_steps >= 1,
            "ModelConfig: all sizes must be at least 1");
    require(pole_pairs + real_poles >= 1, "ModelConfig: need at least one pole");
    require(window_span > 0.0 && horizon > 0.0, "ModelConfig: T and H must be positive");
  }
  Vec obs_times() const { return Vec::LinSpaced(L, window_span / static_cast<double>(L), window_span); }
  Vec grid() const { return Vec::LinSpaced(sde_steps + 1, window_span, window_span + horizon); }
  double dt() const { return horizon / static_cast<double>(sde_steps); }
};

struct ArtemisParams {
  ModelConfig cfg;
  encoder::LaplaceKernel kernel;
  Mlp1h enc_bias;
  encoder::TimeEmbedding emb;
  sde::DriftNet drift;
  sde::DiffusionNet diffusion;
  physics::PricingNet pricing;
  Vec head_w;
  double head_b = 0.0;
};

inline ArtemisParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const CounterRng rng = CounterRng(seed).split(streams::kInit);
  ArtemisParams p;
  p.cfg = cfg;
  const auto dz = cfg.dz, dx = cfg.dx, h = cfg.hidden, f = cfg.fourier;
  p.kernel = encoder::LaplaceKernel::zeros(dz, dx, cfg.pole_pairs, cfg.real_poles);
  const double a = std::sqrt(3.0 / static_cast<double>(dx * (2 * cfg.pole_pairs + cfg.real_poles)));
  std::uint64_t c = 0;
  for (Eigen::Index i = 0; i < p.kernel.residues.size(); ++i)
    p.kernel.residues.data()[i] = a * (2.0 * rng.uniform(100, c++) - 1.0);
  for (Eigen::Index k = 0; k < cfg.pole_pairs; ++k) {
    p.kernel.pair_raw_re[k] = numcore::softplus_inv(0.5 * std::pow(3.0, static_cast<double>(k)));
    p.kernel.pair_im[k] = M_PI * static_cast<double>(k);
  }
  for (Eigen::Index q = 0; q < cfg.real_poles; ++q)
    p.kernel.real_raw_re[q] = numcore::softplus_inv(std::pow(2.0, static_cast<double>(q)));
  Vec freqs(f);
  for (Eigen::Index k = 0; k < f; ++k) freqs[k] = 0.5 * std::pow(2.0, static_cast<double>(k));
  p.emb = encoder::TimeEmbedding::from_freqs(freqs);
  p.enc_bias = numcore::mlp_init(2 * f, h, dz, rng, 101);
  p.drift.net = numcore::mlp_init(dz + 2 * f, h, dz, rng, 102, 0.1);
  p.diffusion.lnet = numcore::mlp_init(dz + 2 * f, h, std::max<Eigen::Index>(1, dz * (dz - 1) / 2), rng, 103, 0.1);
  p.diffusion.dnet = numcore::mlp_init(dz + 2 * f, h, dz, rng, 104, 0.1);
  p.diffusion.dnet.b2.setConstant(numcore::softplus_inv(0.1));
  p.pricing.net = numcore::mlp_init(dz + 1, h, 1, rng, 105);
  const double ah = std::sqrt(6.0 / static_cast<double>(dz + 1));
  p.head_w.resize(dz);
  for (Eigen::Index k = 0; k < dz; ++k) p.head_w[k] = ah * (2.0 * rng.uniform(106, static_cast<std::uint64_t>(k)) - 1.0);
  return p;
}

// ---------------------------------------------------------------------------
// Named parameter blocks (optimizer and checkpoint order)

namespace detail {
inline void put_mlp(std::vector<Mat>& b, std::vector<std::string>& n, const Mlp1h& m, const std::string& p) {
  b.push_back(m.W1), n.push_back(p + ".W1");
  b.push_back(m.b1), n.push_back(p + ".b1");
  b.push_back(m.W2), n.push_back(p + ".W2");
  b.push_back(m.b2), n.push_back(p + ".b2");
}
inline void get_mlp(const std::vector<Mat>& b, std::size_t& i, Mlp1h& m) {
  m.W1 = b[i++];
  m.b1 = b[i++].col(0);
  m.W2 = b[i++];
  m.b2 = b[i++].col(0);
}
}  // namespace detail

struct Blocks {
  std::vector<Mat> values;
  std::vector<std::string> names;
};

inline Blocks to_blocks(const ArtemisParams& p) {
  Blocks b;
  auto add = [&](Mat m, const char* name) { b.values.push_back(std::move(m)), b.names.emplace_back(name); };
  add(p.kernel.pair_raw_re.transpose(), "kernel.pair_raw_re");
  add(p.kernel.pair_im.transpose(), "kernel.pair_im");
  add(p.kernel.real_raw_re.transpose(), "kernel.real_raw_re");
  add(p.kernel.residues, "kernel.residues");
  detail::put_mlp(b.values, b.names, p.enc_bias, "enc_bias");
  add(p.emb.freq_raw.transpose(), "emb.freq_raw");
  detail::put_mlp(b.values, b.names, p.drift.net, "drift");
  detail::put_mlp(b.values, b.names, p.diffusion.lnet, "diff_l");
  detail::put_mlp(b.values, b.names, p.diffusion.dnet, "diff_d");
  detail::put_mlp(b.values, b.names, p.pricing.net, "pricing");
  add(p.head_w.transpose(), "head.w");
  add(Mat::Constant(1, 1, p.head_b), "head.b");
  return b;
}

inline void from_blocks(ArtemisParams& p, const std::vector<Mat>& b) {
  require(b.size() == 27, "from_blocks: expected 27 parameter blocks");
  std::size_t i = 0;
  p.kernel.pair_raw_re = b[i++].row(0).transpose();
  p.kernel.pair_im = b[i++].row(0).transpose();
  p.kernel.real_raw_re = b[i].rows() ? Vec(b[i].row(0).transpose()) : Vec(0);
  ++i;
  p.kernel.residues = b[i++];
  detail::get_mlp(b, i, p.enc_bias);
  p.emb.freq_raw = b[i++].row(0).transpose();
  detail::get_mlp(b, i, p.drift.net);
  detail::get_mlp(b, i, p.diffusion.lnet);
  detail::get_mlp(b, i, p.diffusion.dnet);
  detail::get_mlp(b, i, p.pricing.net);
  p.head_w = b[i++].row(0).transpose();
  p.head_b = b[i++](0, 0);
}

inline Eigen::Index parameter_count(const ArtemisParams& p) {
  Eigen::Index n = 0;
  for (const auto& m : to_blocks(p).values) n += m.size();
  return n;
}

/// Leaves for every block, in block order.
struct ParamVars {
  std::vector<Var> leaves;
  encoder::EncoderVars enc;
  sde::SdeVars sde;
  numcore::MlpVars pricing;
  Var freq_raw, head_w, head_b;
};

/// Records every parameter block as a tape leaf. Vectors stored as columns
/// in the blocks become 1 x n rows on the tape.
inline ParamVars params_on_tape(Tape& tape, const ArtemisParams& p) {
  ParamVars v;
  const Blocks b = to_blocks(p);
  for (std::size_t k = 0; k < b.values.size(); ++k) {
    const Mat& m = b.values[k];
    const bool column_vector = b.names[k].ends_with(".b1") || b.names[k].ends_with(".b2");
    v.leaves.push_back(tape.leaf(column_vector ? Mat(m.transpose()) : m));
  }
  auto mlp = [&](std::size_t i) { return numcore::MlpVars{v.leaves[i], v.leaves[i + 1], v.leaves[i + 2], v.leaves[i + 3]}; };
  v.enc.pair_raw_re = v.leaves[0];
  v.enc.pair_im = v.leaves[1];
  if (p.kernel.reals() > 0) v.enc.real_raw_re = v.leaves[2];
  v.enc.residues = v.leaves[3];
  v.enc.bias = mlp(4);
  v.freq_raw = v.leaves[8];
  v.sde.drift = mlp(9);
  v.sde.lnet = mlp(13);
  v.sde.dnet = mlp(17);
  v.pricing = mlp(21);
  v.head_w = v.leaves[25];
  v.head_b = v.leaves[26];
  return v;
}

/// Gradient of every block after `tape.backward`, shaped like `to_blocks`.
inline std::vector<Mat> gradients(const Tape& tape, const ParamVars& v, const ArtemisParams& p) {
  const Blocks b = to_blocks(p);
  std::vector<Mat> g;
  g.reserve(b.values.size());
  for (std::size_t k = 0; k < b.values.size(); ++k) {
    const Mat& gr = tape.grad(v.leaves[k]);
    g.push_back(gr.rows() == b.values[k].rows() ? gr : Mat(gr.transpose()));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Standardization

struct Standardizer {
  Vec x_mean, x_std;
  double y_mean = 0.0, y_std = 1.0;

  static Standardizer fit(const dslob::WindowSplit& s) {
    require(s.size() >= 2, "Standardizer: need at least two training windows");
    Standardizer st;
    const Eigen::Index rows = s.size() * s.L;
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> all(s.values.data(),
                                                                                                        rows, s.dx);
    st.x_mean = all.colwise().mean().transpose();
    st.x_std = ((all.rowwise() - st.x_mean.transpose()).colwise().squaredNorm() / static_cast<double>(rows))
                   .cwiseSqrt()
                   .transpose();
    for (Eigen::Index c = 0; c < st.x_std.size(); ++c)
      if (!(st.x_std[c] > 1e-12)) st.x_std[c] = 1.0;
    const Vec y = s.target_vec();
    st.y_mean = y.mean();
    st.y_std = std::sqrt((y.array() - st.y_mean).square().mean());
    if (!(st.y_std > 1e-12)) st.y_std = 1.0;
    return st;
  }

  static Standardizer identity(Eigen::Index dx) { return {Vec::Zero(dx), Vec::Ones(dx), 0.0, 1.0}; }

  Mat window(const Mat& raw) const {
    return ((raw.rowwise() - x_mean.transpose()).array().rowwise() / x_std.transpose().array()).matrix();
  }
  double target(double y) const { return (y - y_mean) / y_std; }
  double untarget(double z) const { return z * y_std + y_mean; }
};

/// Flattened-window baseline (A6).
struct FlatMlp {
  Mlp1h net;  // din = L * dx, dout = 1

  static FlatMlp init(Eigen::Index L, Eigen::Index dx, Eigen::Index hidden, std::uint64_t seed) {
    return {numcore::mlp_init(L * dx, hidden, 1, CounterRng(seed).split(streams::kInit), 200)};
  }
  static Vec flatten(const Mat& window) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = window;
    return Eigen::Map<const Vec>(rm.data(), rm.size());
  }
  double predict(const Mat& window) const { return numcore::mlp_forward(net, flatten(window))[0]; }
};

inline Blocks to_blocks(const FlatMlp& m) {
  Blocks b;
  detail::put_mlp(b.values, b.names, m.net, "flat");
  return b;
}

inline void from_blocks(FlatMlp& m, const std::vector<Mat>& b) {
  require(b.size() == 4, "from_blocks: expected 4 blocks for the flat model");
  std::size_t i = 0;
  detail::get_mlp(b, i, m.net);
}

}  // namespace artemis::train
