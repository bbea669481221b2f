#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::numcore {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-block Adam moments with bias correction.
struct AdamState {
  AdamConfig cfg;
  std::vector<Mat> m;
  std::vector<Mat> v;
  long step = 0;

  AdamState() = default;
  AdamState(const std::vector<Mat>& params, AdamConfig c) : cfg(c) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
      m.push_back(Mat::Zero(p.rows(), p.cols()));
      v.push_back(Mat::Zero(p.rows(), p.cols()));
    }
  }
};

/// One Adam update in place. `names` labels blocks for error messages and
/// `trainable` (optional) masks blocks that must not move.
inline void adam_step(AdamState& state, std::vector<Mat>& params, const std::vector<Mat>& grads,
                      const std::vector<std::string>& names = {}, const std::vector<bool>& trainable = {}) {
  require(params.size() == grads.size() && params.size() == state.m.size(), "adam_step: block count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(params[k].rows() == grads[k].rows() && params[k].cols() == grads[k].cols(),
            "adam_step: gradient shape mismatch in block " + (k < names.size() ? names[k] : std::to_string(k)));
    if (!grads[k].allFinite())
      throw NumericalError("adam_step: non-finite gradient in parameter block '" +
                           (k < names.size() ? names[k] : std::to_string(k)) + "'");
  }
  ++state.step;
  const auto& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!trainable.empty() && !trainable[k]) continue;
    state.m[k] = c.beta1 * state.m[k] + (1.0 - c.beta1) * grads[k];
    state.v[k] = c.beta2 * state.v[k] + (1.0 - c.beta2) * grads[k].cwiseAbs2();
    const auto mhat = state.m[k].array() / bc1;
    const auto vhat = state.v[k].array() / bc2;
    params[k].array() -= c.lr * mhat / (vhat.sqrt() + c.eps);
  }
}

}  // namespace artemis::numcore
