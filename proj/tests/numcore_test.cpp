#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "artemis/numcore/adam.hpp"
#include "artemis/numcore/mlp.hpp"
#include "artemis/numcore/tape.hpp"

using namespace artemis;
using namespace artemis::numcore;

namespace {

Mlp1h random_net(int din, int h, int dout, std::uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed);
  Mlp1h net = Mlp1h::zeros(din, h, dout);
  std::uint64_t c = 0;
  for (auto* m : {&net.W1, &net.W2})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = scale * rng.normal(0, c++);
  for (auto* v : {&net.b1, &net.b2})
    for (Eigen::Index i = 0; i < v->size(); ++i) v->data()[i] = scale * rng.normal(0, c++);
  return net;
}

Vec random_vec(int n, std::uint64_t seed) {
  CounterRng rng(seed);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal(1, static_cast<std::uint64_t>(i));
  return v;
}

// Scalar-loop evaluation kept independent of the Eigen expression path.
std::vector<double> scalar_mlp(const Mlp1h& net, const Vec& u) {
  std::vector<double> hidden(static_cast<std::size_t>(net.hidden()));
  for (Eigen::Index i = 0; i < net.hidden(); ++i) {
    double acc = net.b1[i];
    for (Eigen::Index j = 0; j < net.din(); ++j) acc += net.W1(i, j) * u[j];
    hidden[static_cast<std::size_t>(i)] = std::tanh(acc);
  }
  std::vector<double> out(static_cast<std::size_t>(net.dout()));
  for (Eigen::Index o = 0; o < net.dout(); ++o) {
    double acc = net.b2[o];
    for (Eigen::Index i = 0; i < net.hidden(); ++i) acc += net.W2(o, i) * hidden[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(o)] = acc;
  }
  return out;
}

double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

TEST(MlpForward, ZeroWeightsGiveOutputBias) {
  Mlp1h net = Mlp1h::zeros(3, 4, 2);
  net.b2 << 1.5, -2.0;
  const Vec y = mlp_forward(net, Vec::Ones(3));
  EXPECT_EQ(y[0], 1.5);
  EXPECT_EQ(y[1], -2.0);
}

TEST(MlpForward, UnitNetAtZero) {
  Mlp1h net = Mlp1h::zeros(1, 1, 1);
  net.W1(0, 0) = 1.0;
  net.W2(0, 0) = 1.0;
  EXPECT_EQ(mlp_forward(net, Vec::Zero(1))[0], 0.0);
}

TEST(MlpForward, MatchesScalarLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mlp1h net = random_net(5, 7, 3, seed);
    const Vec u = random_vec(5, seed + 100);
    const Vec y = mlp_forward(net, u);
    const auto oracle = scalar_mlp(net, u);
    for (int o = 0; o < 3; ++o) EXPECT_LT(rel_err(y[o], oracle[static_cast<std::size_t>(o)], 1e-300), 1e-12);
  }
}

TEST(MlpForward, DimensionMismatchThrows) {
  const Mlp1h net = Mlp1h::zeros(3, 2, 1);
  EXPECT_THROW(mlp_forward(net, Vec::Zero(4)), ContractViolation);
}

TEST(MlpInputGrad, ZeroFirstLayerGivesZero) {
  Mlp1h net = random_net(4, 6, 1, 3);
  net.W1.setZero();
  EXPECT_TRUE(mlp_input_grad(net, random_vec(4, 1)).isZero(0.0));
}

TEST(MlpInputGrad, LinearRegimeIsW1TransposeW2) {
  Mlp1h net = random_net(3, 5, 1, 4, 1e-4);
  net.b1.setZero();
  const Vec g = mlp_input_grad(net, Vec::Zero(3));
  const Vec expected = net.W1.transpose() * net.W2.row(0).transpose();
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[i], expected[i]);
}

TEST(MlpInputGrad, MatchesFiniteDifferences) {
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mlp1h net = random_net(4, 8, 1, seed, 0.7);
    const Vec u = random_vec(4, seed + 7);
    const Vec g = mlp_input_grad(net, u);
    for (int i = 0; i < 4; ++i) {
      Vec up = u, dn = u;
      up[i] += h;
      dn[i] -= h;
      const double fd = (mlp_forward(net, up)[0] - mlp_forward(net, dn)[0]) / (2 * h);
      EXPECT_LT(rel_err(g[i], fd), 1e-6) << "seed " << seed << " coord " << i;
    }
  }
}

TEST(MlpInputGrad, RejectsVectorOutput) {
  EXPECT_THROW(mlp_input_grad(Mlp1h::zeros(2, 2, 2), Vec::Zero(2)), ContractViolation);
  EXPECT_THROW(mlp_input_hessian(Mlp1h::zeros(2, 2, 2), Vec::Zero(2)), ContractViolation);
}

TEST(MlpInputHessian, ZeroFirstLayerAndSymmetry) {
  Mlp1h net = random_net(5, 9, 1, 11);
  const Mat H = mlp_input_hessian(net, random_vec(5, 2));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_EQ(H(i, j), H(j, i));
  net.W1.setZero();
  EXPECT_TRUE(mlp_input_hessian(net, random_vec(5, 2)).isZero(0.0));
}

TEST(MlpInputHessian, MatchesFiniteDifferenceOfGradient) {
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mlp1h net = random_net(3, 6, 1, seed + 50, 0.8);
    const Vec u = random_vec(3, seed + 70);
    const Mat H = mlp_input_hessian(net, u);
    for (int j = 0; j < 3; ++j) {
      Vec up = u, dn = u;
      up[j] += h;
      dn[j] -= h;
      const Vec col = (mlp_input_grad(net, up) - mlp_input_grad(net, dn)) / (2 * h);
      for (int i = 0; i < 3; ++i) EXPECT_LT(rel_err(H(i, j), col[i], 1e-6), 1e-4);
    }
  }
}

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  std::vector<Mat> params{Mat::Constant(2, 2, 3.0)};
  AdamState st(params, {});
  adam_step(st, params, {Mat::Zero(2, 2)});
  EXPECT_EQ(st.step, 1);
  EXPECT_TRUE(params[0].isApprox(Mat::Constant(2, 2, 3.0), 0.0));
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  std::vector<Mat> params{Mat::Zero(1, 2)};
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState st(params, cfg);
  Mat g(1, 2);
  g << 0.3, -2.0;
  Mat prev = params[0];
  for (int k = 0; k < 5000; ++k) {
    prev = params[0];
    adam_step(st, params, {g});
  }
  const Mat step = params[0] - prev;
  EXPECT_NEAR(step(0, 0), -0.01, 1e-6);
  EXPECT_NEAR(step(0, 1), 0.01, 1e-6);
}

TEST(Adam, ThreeHandUnrolledSteps) {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double grads[3] = {0.5, -1.0, 2.0};
  double p = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    p -= lr * mh / (std::sqrt(vh) + eps);
  }
  std::vector<Mat> params{Mat::Constant(1, 1, 1.0)};
  AdamState st(params, {lr, b1, b2, eps});
  for (double g : grads) adam_step(st, params, {Mat::Constant(1, 1, g)});
  EXPECT_NEAR(params[0](0, 0), p, 1e-12);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
  std::vector<Mat> params{Mat::Zero(1, 1), Mat::Zero(1, 1)};
  AdamState st(params, {});
  try {
    adam_step(st, params, {Mat::Zero(1, 1), Mat::Constant(1, 1, NAN)}, {"enc.poles", "drift.W1"});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("drift.W1"), std::string::npos);
  }
}

TEST(TapeBackprop, SumOfParamsHasUnitGradient) {
  Tape t;
  const Var p = t.leaf(Mat::Random(3, 2));
  t.backward(t.sum(p));
  EXPECT_TRUE(t.grad(p).isApprox(Mat::Ones(3, 2)));
}

TEST(TapeBackprop, SquaredNormGradientIsTwiceParams) {
  Tape t;
  Mat v(1, 4);
  v << 1.0, -2.0, 0.5, 3.0;
  const Var p = t.leaf(v);
  t.backward(t.sum(t.square(p)));
  EXPECT_TRUE(t.grad(p).isApprox(2.0 * v));
}

TEST(TapeBackprop, NonScalarLossRejected) {
  Tape t;
  const Var p = t.leaf(Mat::Ones(2, 1));
  EXPECT_THROW(t.backward(p), ContractViolation);
}

// Builds a graph that exercises every op; returns the loss node.
static Var every_op_graph(Tape& t, const std::vector<Var>& p) {
  // p: A 3x4, B 2x4, v 1x3 (packed lower for d=3), r 1x3, f 1x2, s 1x1
  const Var a = p[0], b = p[1], packed = p[2], r = p[3], f = p[4], s = p[5];
  const Var ab = t.matmul_bt(a, b);                            // 3x2
  const Var m = t.matmul(t.tanh(ab), t.softplus(b));           // 3x4
  const Var e = t.mul(t.exp(t.scale(a, 0.3)), t.cos(m));       // 3x4
  const Var q = t.div(t.sin(e), t.add_scalar(t.square(a), 1.0));
  const Var rowv = t.slice_rows(b, 1, 1);                      // 1x4
  const Var w = t.mul_row_vec(t.add_row_vec(q, rowv), rowv);
  const Var z = t.scale_by(s, t.sub(w, t.max0(a)));
  const Var rs = t.row_sums(z);                                // 3x1
  const Var times = t.constant((Mat(3, 1) << 0.1, 0.45, 0.8).finished());
  const Var emb = t.time_embed(f, times);                      // 3x4
  const Var c = t.concat_cols(emb, rs);                        // 3x5
  const Var lm = t.unit_lower_mat(packed, 3);                  // 3x3
  const Var y = t.unit_lower_mul(packed, r);
  const Var x = t.unit_lower_solve(packed, t.add(y, t.slice_cols(r, 0, 3)));
  const Var l1 = t.sum(t.square(t.matmul(lm, t.slice_cols(c, 1, 3))));
  return t.add(t.add(l1, t.sum(t.square(x))), t.sum(t.slice_cols(c, 4, 1)));
}

TEST(TapeBackprop, EveryOpMatchesFiniteDifferences) {
  CounterRng rng(42);
  std::vector<Mat> values{Mat(3, 4), Mat(2, 4), Mat(1, 3), Mat(1, 3), Mat(1, 2), Mat(1, 1)};
  std::uint64_t c = 0;
  for (auto& m : values)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.8 * rng.normal(9, c++);
  const auto eval = [&](const std::vector<Mat>& vals) {
    Tape t;
    std::vector<Var> p;
    for (const auto& v : vals) p.push_back(t.leaf(v));
    return t.scalar(every_op_graph(t, p));
  };
  Tape t;
  std::vector<Var> p;
  for (const auto& v : values) p.push_back(t.leaf(v));
  const Var loss = every_op_graph(t, p);
  t.backward(loss);
  const double h = 1e-5;
  for (std::size_t k = 0; k < values.size(); ++k)
    for (Eigen::Index i = 0; i < values[k].size(); ++i) {
      auto up = values, dn = values;
      up[k].data()[i] += h;
      dn[k].data()[i] -= h;
      const double fd = (eval(up) - eval(dn)) / (2 * h);
      EXPECT_LT(rel_err(t.grad(p[k]).data()[i], fd, 1e-6), 1e-4) << "block " << k << " entry " << i;
    }
}

TEST(TapeBackprop, ReplayIsBitIdentical) {
  Tape t;
  std::vector<Var> p{t.leaf(Mat::Random(3, 4)), t.leaf(Mat::Random(2, 4)), t.leaf(Mat::Random(1, 3)),
                     t.leaf(Mat::Random(1, 3)), t.leaf(Mat::Random(1, 2)), t.leaf(Mat::Random(1, 1))};
  every_op_graph(t, p);
  EXPECT_TRUE(t.replay_matches());
}

TEST(TapeBackprop, MlpOnTapeMatchesPlainForward) {
  const Mlp1h net = random_net(4, 5, 2, 77);
  const Vec u = random_vec(4, 78);
  Tape t;
  const auto vars = mlp_leaves(t, net);
  const Var out = mlp_on_tape(t, vars, t.constant(u.transpose()));
  const Vec ref = mlp_forward(net, u);
  EXPECT_NEAR(t.value(out)(0, 0), ref[0], 1e-14);
  EXPECT_NEAR(t.value(out)(0, 1), ref[1], 1e-14);
}

TEST(Softplus, StableAtExtremes) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-16);
  EXPECT_EQ(softplus(1000.0), 1000.0);
  EXPECT_GT(softplus(-1000.0), -1.0);
  EXPECT_NEAR(softplus(softplus_inv(0.3)), 0.3, 1e-15);
}
