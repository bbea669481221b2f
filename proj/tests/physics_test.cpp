#include <gtest/gtest.h>

#include <cmath>

#include "artemis/physics.hpp"

using namespace artemis;
using namespace artemis::physics;

namespace {

const encoder::TimeEmbedding kEmb = encoder::TimeEmbedding::from_freqs((Vec(1) << 0.8).finished());

Mlp1h random_net(Eigen::Index din, Eigen::Index h, Eigen::Index dout, std::uint64_t seed, double scale = 0.5) {
  CounterRng rng(seed);
  Mlp1h n = Mlp1h::zeros(din, h, dout);
  std::uint64_t c = 0;
  for (auto* m : {&n.W1, &n.W2})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = scale * rng.normal(0, c++);
  for (auto* v : {&n.b1, &n.b2})
    for (Eigen::Index i = 0; i < v->size(); ++i) v->data()[i] = scale * rng.normal(0, c++);
  return n;
}

Vec random_vec(Eigen::Index n, std::uint64_t seed) {
  CounterRng rng(seed);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal(3, static_cast<std::uint64_t>(i));
  return v;
}

struct Model {
  sde::DriftNet d;
  sde::DiffusionNet s;
  PricingNet V;
};

Model random_model(Eigen::Index dz, std::uint64_t seed) {
  const Eigen::Index din = dz + kEmb.size();
  return {{random_net(din, 5, dz, seed)},
          {random_net(din, 5, dz * (dz - 1) / 2, seed + 1), random_net(din, 5, dz, seed + 2)},
          {random_net(dz + 1, 6, 1, seed + 3)}};
}

// V(z, t) = 1/2 |z|^2, used where a closed-form residual is wanted.
struct QuadraticHead {
  Eigen::Index dz;
  double value(const Vec& u) const { return 0.5 * u.head(dz).squaredNorm(); }
  Vec grad(const Vec& u) const {
    Vec g = Vec::Zero(dz + 1);
    g.head(dz) = u.head(dz);
    return g;
  }
  Mat hessian(const Vec&) const {
    Mat h = Mat::Zero(dz + 1, dz + 1);
    h.topLeftCorner(dz, dz).setIdentity();
    return h;
  }
};

}  // namespace

TEST(FkResidual, ConstantPricingGivesMinusRV) {
  Model m = random_model(3, 10);
  m.V.net.W1.setZero();
  m.V.net.W2.setZero();
  m.V.net.b2[0] = 2.5;
  const Vec z = random_vec(3, 1);
  EXPECT_NEAR(fk_residual(m.V, m.d, m.s, kEmb, z, 0.3, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(fk_residual(m.V, m.d, m.s, kEmb, z, 0.3, 0.04), -0.1, 1e-14);
}

TEST(FkResidual, PureTimeDependence) {
  // Close to V = t: one hidden unit in its linear regime.
  Model m = random_model(2, 20);
  m.V.net = Mlp1h::zeros(3, 1, 1);
  const double eps = 1e-4;
  m.V.net.W1(0, 2) = eps;
  m.V.net.W2(0, 0) = 1.0 / eps;
  const double res = fk_residual(m.V, m.d, m.s, kEmb, random_vec(2, 2), 0.4, 0.0);
  EXPECT_NEAR(res, 1.0, 1e-7);
}

TEST(FkResidual, QuadraticHeadWithScaledIdentityDiffusion) {
  const Eigen::Index dz = 3;
  const double s = 0.7;
  const QuadraticHead V{dz};
  const Vec z = random_vec(dz, 4);
  const double res = fk_residual_generic(V, Vec::Zero(dz), s * Mat::Identity(dz, dz), z, 0.2, 0.0);
  EXPECT_NEAR(res, 0.5 * s * s * static_cast<double>(dz), 1e-14);
  const Vec mu = random_vec(dz, 5);
  EXPECT_NEAR(fk_residual_generic(V, mu, s * Mat::Identity(dz, dz), z, 0.2, 0.0),
              mu.dot(z) + 0.5 * s * s * static_cast<double>(dz), 1e-13);
}

TEST(FkResidual, LinearInPricingOutputLayer) {
  const Model m = random_model(3, 30);
  const Vec z = random_vec(3, 6);
  PricingNet scaled = m.V;
  scaled.net.W2 *= 3.0;
  scaled.net.b2 *= 3.0;
  const double base = fk_residual(m.V, m.d, m.s, kEmb, z, 0.5, 0.05);
  EXPECT_NEAR(fk_residual(scaled, m.d, m.s, kEmb, z, 0.5, 0.05), 3.0 * base, 1e-12 * std::max(1.0, std::abs(base)));
}

TEST(FkResidual, TapeMatchesClosedForm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::Index dz = 1 + static_cast<Eigen::Index>(seed % 4);
    const Model m = random_model(dz, 100 + 7 * seed);
    const Vec z = random_vec(dz, seed);
    const double t = 1.0 + 0.1 * static_cast<double>(seed);
    const double r = seed % 2 ? 0.03 : 0.0;
    numcore::Tape tape;
    const sde::SdeVars v{numcore::mlp_leaves(tape, m.d.net), numcore::mlp_leaves(tape, m.s.lnet),
                         numcore::mlp_leaves(tape, m.s.dnet)};
    const auto vv = numcore::mlp_leaves(tape, m.V.net);
    Mat input(1, dz + kEmb.size());
    input << z.transpose(), encoder::time_embed(kEmb, t).transpose();
    const auto coef = sde::coefficients_on_tape(tape, v, tape.constant(input), dz);
    const auto res = fk_residual_on_tape(tape, vv, coef, z, t, r);
    EXPECT_NEAR(tape.scalar(res), fk_residual(m.V, m.d, m.s, kEmb, z, t, r), 1e-12) << "seed " << seed;
    const auto mpr = physics::mpr_squared_norm_on_tape(tape, coef, dz);
    EXPECT_NEAR(tape.scalar(mpr), sde::market_price_of_risk(m.d, m.s, kEmb, z, t).squaredNorm(),
                1e-10 * std::max(1.0, tape.scalar(mpr)));
  }
}

TEST(PdeLoss, NonnegativeAndRejectsEmpty) {
  const Model m = random_model(2, 40);
  std::vector<SpaceTimePoint> pts;
  for (std::uint64_t i = 0; i < 16; ++i) pts.push_back({random_vec(2, i), 1.0 + 0.05 * static_cast<double>(i)});
  EXPECT_GE(pde_loss(m.V, m.d, m.s, kEmb, pts), 0.0);
  EXPECT_THROW(pde_loss(m.V, m.d, m.s, kEmb, {}), ContractViolation);
}

TEST(MprLoss, ZeroInsideBound) {
  const Model m = random_model(2, 50);
  std::vector<SpaceTimePoint> pts;
  double max_norm = 0.0;
  for (std::uint64_t i = 0; i < 16; ++i) {
    pts.push_back({random_vec(2, i), 1.0});
    max_norm = std::max(max_norm, sde::market_price_of_risk(m.d, m.s, kEmb, pts.back().z, 1.0).norm());
  }
  EXPECT_EQ(mpr_loss(m.d, m.s, kEmb, pts, max_norm + 1e-9), 0.0);
  EXPECT_GT(mpr_loss(m.d, m.s, kEmb, pts, 0.5 * max_norm), 0.0);
}

TEST(MprLoss, HingeValue) {
  EXPECT_DOUBLE_EQ(mpr_hinge({(Vec(2) << 3.0, 4.0).finished()}, 2.0), 21.0);
  EXPECT_EQ(mpr_hinge({(Vec(2) << 1.0, 1.0).finished()}, 2.0), 0.0);
  EXPECT_THROW(mpr_hinge({}, 2.0), ContractViolation);
}

TEST(ConsistencyLoss, Oracles) {
  const Mat a = Mat::Random(9, 3);
  EXPECT_EQ(consistency_loss(a, a), 0.0);
  Mat b = a;
  b.bottomRows(8).array() += 0.5;
  EXPECT_NEAR(consistency_loss(a, b), 3 * 0.25, 1e-15);
  b = a;
  b.row(0).array() += 10.0;  // the shared initial state is excluded
  EXPECT_EQ(consistency_loss(a, b), 0.0);
  EXPECT_THROW(consistency_loss(a, Mat::Zero(8, 3)), ContractViolation);
}
