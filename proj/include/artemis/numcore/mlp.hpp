#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "artemis/core/error.hpp"
#include "artemis/core/rng.hpp"

namespace artemis::numcore {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Overflow-free softplus: log1p(exp(-|x|)) + max(x, 0).
inline double softplus(double x) noexcept { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

/// Derivative of softplus, the logistic function.
inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Inverse of softplus for y > 0.
inline double softplus_inv(double y) noexcept { return y > 30.0 ? y : std::log(std::expm1(y)); }

/// Single-hidden-layer tanh network: W2 tanh(W1 u + b1) + b2.
struct Mlp1h {
  Mat W1;  // h x din
  Vec b1;  // h
  Mat W2;  // dout x h
  Vec b2;  // dout

  Eigen::Index din() const { return W1.cols(); }
  Eigen::Index hidden() const { return W1.rows(); }
  Eigen::Index dout() const { return W2.rows(); }

  static Mlp1h zeros(Eigen::Index din, Eigen::Index h, Eigen::Index dout) {
    return {Mat::Zero(h, din), Vec::Zero(h), Mat::Zero(dout, h), Vec::Zero(dout)};
  }

  void validate() const {
    require(din() >= 1 && hidden() >= 1 && dout() >= 1, "Mlp1h: empty layer");
    require(b1.size() == hidden() && W2.cols() == hidden() && b2.size() == dout(),
            "Mlp1h: inconsistent layer shapes");
    require(W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite(), "Mlp1h: non-finite weight");
  }
};

/// Glorot-uniform weights, zero biases; draws keyed by (rng, stream).
inline Mlp1h mlp_init(Eigen::Index din, Eigen::Index h, Eigen::Index dout, const CounterRng& rng,
                      std::uint64_t stream, double out_gain = 1.0) {
  Mlp1h net = Mlp1h::zeros(din, h, dout);
  const double a1 = std::sqrt(6.0 / static_cast<double>(din + h));
  const double a2 = out_gain * std::sqrt(6.0 / static_cast<double>(h + dout));
  std::uint64_t c = 0;
  for (Eigen::Index i = 0; i < net.W1.size(); ++i) net.W1.data()[i] = a1 * (2.0 * rng.uniform(stream, c++) - 1.0);
  for (Eigen::Index i = 0; i < net.W2.size(); ++i) net.W2.data()[i] = a2 * (2.0 * rng.uniform(stream, c++) - 1.0);
  return net;
}

inline Vec mlp_forward(const Mlp1h& net, const Vec& u) {
  if (u.size() != net.din())
    throw ContractViolation("mlp_forward: input has " + std::to_string(u.size()) + " entries, expected " +
                            std::to_string(net.din()));
  const Vec h = (net.W1 * u + net.b1).array().tanh().matrix();
  return net.W2 * h + net.b2;
}

/// Gradient of a scalar-output network with respect to its input:
/// W1^T (w2 .* (1 - h^2)).
inline Vec mlp_input_grad(const Mlp1h& net, const Vec& u) {
  require(net.dout() == 1, "mlp_input_grad: network output must be scalar");
  require(u.size() == net.din(), "mlp_input_grad: input dimension mismatch");
  const Vec h = (net.W1 * u + net.b1).array().tanh().matrix();
  const Vec g = net.W2.row(0).transpose().cwiseProduct((1.0 - h.array().square()).matrix());
  return net.W1.transpose() * g;
}

/// Hessian of a scalar-output network with respect to its input:
/// W1^T diag(w2 .* (-2 h (1 - h^2))) W1. Symmetric by construction.
inline Mat mlp_input_hessian(const Mlp1h& net, const Vec& u) {
  require(net.dout() == 1, "mlp_input_hessian: network output must be scalar");
  require(u.size() == net.din(), "mlp_input_hessian: input dimension mismatch");
  const Vec h = (net.W1 * u + net.b1).array().tanh().matrix();
  const Vec c = (net.W2.row(0).transpose().array() * (-2.0 * h.array() * (1.0 - h.array().square()))).matrix();
  const Mat scaled = c.asDiagonal() * net.W1;
  Mat H = net.W1.transpose() * scaled;
  // Force exact symmetry; the two triangles can differ in the last bit.
  return 0.5 * (H + H.transpose());
}

}  // namespace artemis::numcore
