#include <gtest/gtest.h>

#include <cmath>

#include "artemis/sde.hpp"
#include "support/sde_oracles.hpp"

using namespace artemis;
using namespace artemis::sde;

namespace {

const encoder::TimeEmbedding kEmb = encoder::TimeEmbedding::from_freqs((Vec(2) << 0.5, 1.5).finished());

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

DiffusionNet random_diffusion(Eigen::Index dz, std::uint64_t seed) {
  return {random_net(dz + 4, 6, dz * (dz - 1) / 2, seed), random_net(dz + 4, 6, dz, seed + 1)};
}

}  // namespace

TEST(DriftEval, ZeroWeightsGiveConstant) {
  DriftNet d{Mlp1h::zeros(3 + 4, 5, 3)};
  d.net.b2 << 1.0, -2.0, 0.5;
  const Vec mu = drift_eval(d, kEmb, random_vec(3, 1), 0.37);
  EXPECT_EQ(mu, d.net.b2);
}

TEST(DriftEval, TimeIndependentWhenEmbeddingWeightsZero) {
  DriftNet d{random_net(3 + 4, 5, 3, 2)};
  d.net.W1.rightCols(4).setZero();
  const Vec z = random_vec(3, 4);
  EXPECT_EQ(drift_eval(d, kEmb, z, 0.1), drift_eval(d, kEmb, z, 0.9));
}

TEST(DriftEval, MatchesScalarOracle) {
  const DriftNet d{random_net(2 + 4, 7, 2, 9)};
  const Vec z = random_vec(2, 8);
  const double t = 0.61;
  const Vec f = kEmb.freqs();
  double u[6] = {z[0], z[1], 0, 0, 0, 0};
  for (int k = 0; k < 2; ++k) {
    u[2 + 2 * k] = std::sin(2.0 * M_PI * f[k] * t);
    u[3 + 2 * k] = std::cos(2.0 * M_PI * f[k] * t);
  }
  const Vec mu = drift_eval(d, kEmb, z, t);
  for (int o = 0; o < 2; ++o) {
    double acc = d.net.b2[o];
    for (int h = 0; h < 7; ++h) {
      double pre = d.net.b1[h];
      for (int i = 0; i < 6; ++i) pre += d.net.W1(h, i) * u[i];
      acc += d.net.W2(o, h) * std::tanh(pre);
    }
    EXPECT_NEAR(mu[o], acc, 1e-12 * std::max(1.0, std::abs(acc)));
  }
}

TEST(DiffusionEval, ZeroNetsGiveLn2Identity) {
  const DiffusionNet s{Mlp1h::zeros(3 + 4, 4, 3), Mlp1h::zeros(3 + 4, 4, 3)};
  const Mat sigma = diffusion_eval(s, kEmb, random_vec(3, 1), 0.2);
  EXPECT_TRUE(sigma.isApprox(std::log(2.0) * Mat::Identity(3, 3), 1e-15));
}

TEST(DiffusionEval, DeterminantIsProductOfVolatilities) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DiffusionNet s = random_diffusion(4, seed);
    const Vec z = random_vec(4, seed + 40);
    const auto f = diffusion_factors(s, kEmb, z, 0.3);
    EXPECT_NEAR(f.sigma().determinant(), f.D.prod(), 1e-12 * std::abs(f.D.prod()));
    EXPECT_TRUE((f.D.array() > 0).all());
  }
}

TEST(DiffusionEval, CovarianceIsPositiveDefinite) {
  CounterRng rng(77);
  const DiffusionNet s = random_diffusion(5, 123);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    Vec z(5);
    for (int k = 0; k < 5; ++k) z[k] = 3.0 * rng.normal(i, static_cast<std::uint64_t>(k));
    const Mat sigma = diffusion_eval(s, kEmb, z, rng.uniform(i, 99));
    Eigen::LLT<Mat> llt(sigma * sigma.transpose());
    EXPECT_EQ(llt.info(), Eigen::Success) << "input " << i;
  }
}

TEST(EulerMaruyama, ZeroCoefficientsHoldState) {
  const Vec z0 = random_vec(3, 2);
  const auto tr = euler_maruyama([](const Vec& z, double) { return Vec::Zero(z.size()); },
                                 [](const Vec& z, double) { return Mat::Zero(z.size(), z.size()); }, z0, 1.0, 16, 5);
  for (Eigen::Index j = 0; j <= 16; ++j) EXPECT_EQ(Vec(tr.states.row(j).transpose()), z0);
}

TEST(EulerMaruyama, ConstantDriftIsDeterministicEuler) {
  const Vec z0 = (Vec(2) << 1.0, -3.0).finished();
  const Vec c = (Vec(2) << 0.5, 2.0).finished();
  const auto tr = euler_maruyama([&](const Vec&, double) { return c; },
                                 [](const Vec& z, double) { return Mat::Zero(z.size(), z.size()); }, z0, 1.0, 8, 1);
  EXPECT_EQ(tr.states(8, 0), 1.5);
  EXPECT_EQ(tr.states(8, 1), -1.0);
}

TEST(EulerMaruyama, StoredNoiseReplaysBitExactly) {
  const DriftNet d{random_net(2 + 4, 5, 2, 31)};
  const DiffusionNet s = random_diffusion(2, 32);
  const Vec z0 = random_vec(2, 33);
  const auto tr = simulate(d, s, kEmb, z0, 0.0, 1.0, 20, 99, 4);
  const auto again = euler_maruyama_with_noise([&](const Vec& z, double t) { return drift_eval(d, kEmb, z, t); },
                                               [&](const Vec& z, double t) { return diffusion_eval(s, kEmb, z, t); },
                                               z0, 0.0, 1.0, tr.noise);
  EXPECT_EQ(tr.states.row(0), z0.transpose());
  for (Eigen::Index i = 0; i < tr.states.size(); ++i) EXPECT_EQ(tr.states.data()[i], again.states.data()[i]);
  const auto different = simulate(d, s, kEmb, z0, 0.0, 1.0, 20, 99, 5);
  EXPECT_NE(tr.states(20, 0), different.states(20, 0));
}

TEST(EulerMaruyama, BlowUpReportsStep) {
  try {
    euler_maruyama([](const Vec& z, double) -> Vec { return 50.0 * z; },
                   [](const Vec& z, double) { return Mat::Zero(z.size(), z.size()); }, Vec::Ones(1), 1.0, 10, 0);
    FAIL() << "expected divergence";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.step(), 8);  // 6^8 > 1e6 > 6^7
  }
}

TEST(EulerMaruyama, OrnsteinUhlenbeckMoments) {
  const int paths = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int p = 0; p < paths; ++p) {
    const auto tr = euler_maruyama([](const Vec& z, double) -> Vec { return -z; },
                                   [](const Vec&, double) { return Mat::Identity(1, 1); }, Vec::Zero(1), 1.0, 256,
                                   2024, static_cast<std::uint64_t>(p));
    const double x = tr.states(256, 0);
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / paths;
  const double var = (sumsq - paths * mean * mean) / (paths - 1);
  const double exact = (1.0 - std::exp(-2.0)) / 2.0;
  EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(var / paths));
  EXPECT_LT(std::abs(var - exact) / exact, 0.05);
}

TEST(EulerMaruyama, AdditiveNoiseConvergesAtOrderOne) {
  const auto r = oracle::ou_strong_order({32, 64, 128, 256}, 1000, 404);
  EXPECT_GT(r.exponent, 0.85);
  EXPECT_LT(r.exponent, 1.15);
}

TEST(EulerMaruyama, MultiplicativeNoiseConvergesAtOrderOneHalf) {
  const auto r = oracle::gbm_strong_order({32, 64, 128, 256}, 2000, 405);
  EXPECT_GT(r.exponent, 0.35);
  EXPECT_LT(r.exponent, 0.65);
}

TEST(MarketPriceOfRisk, ZeroDriftGivesZero) {
  DriftNet d{random_net(3 + 4, 5, 3, 1)};
  d.net.W2.setZero();
  d.net.b2.setZero();
  EXPECT_TRUE(market_price_of_risk(d, random_diffusion(3, 2), kEmb, random_vec(3, 5), 0.4).isZero(0.0));
}

TEST(MarketPriceOfRisk, IdentityDiffusion) {
  DriftNet d{Mlp1h::zeros(2 + 4, 3, 2)};
  d.net.b2 << 3.0, 4.0;
  DiffusionNet s{Mlp1h::zeros(2 + 4, 3, 1), Mlp1h::zeros(2 + 4, 3, 2)};
  s.dnet.b2.setConstant(numcore::softplus_inv(1.0));
  const Vec lambda = market_price_of_risk(d, s, kEmb, Vec::Zero(2), 0.0);
  EXPECT_NEAR(lambda[0], 3.0, 1e-12);
  EXPECT_NEAR(lambda[1], 4.0, 1e-12);
  EXPECT_NEAR(lambda.squaredNorm(), 25.0, 1e-10);
}

TEST(MarketPriceOfRisk, ReconstructsDrift) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DriftNet d{random_net(4 + 4, 6, 4, seed + 300)};
    const DiffusionNet s = random_diffusion(4, seed + 400);
    const Vec z = random_vec(4, seed);
    const Vec lambda = market_price_of_risk(d, s, kEmb, z, 0.8);
    const Vec mu = drift_eval(d, kEmb, z, 0.8);
    EXPECT_LT((diffusion_eval(s, kEmb, z, 0.8) * lambda - mu).norm(), 1e-10 * std::max(1.0, mu.norm()));
  }
}

TEST(MarketPriceOfRisk, ElementwiseFormAgreesWhenLIsIdentity) {
  const DriftNet d{random_net(3 + 4, 5, 3, 61)};
  DiffusionNet s = random_diffusion(3, 62);
  s.lnet.W2.setZero();
  s.lnet.b2.setZero();
  const Vec z = random_vec(3, 63);
  EXPECT_EQ(market_price_of_risk(d, s, kEmb, z, 0.5), market_price_of_risk_elementwise(d, s, kEmb, z, 0.5));
  const DiffusionNet full = random_diffusion(3, 64);
  EXPECT_GT((market_price_of_risk(d, full, kEmb, z, 0.5) - market_price_of_risk_elementwise(d, full, kEmb, z, 0.5))
                .norm(),
            1e-6);
}

TEST(SimulateOnTape, MatchesPlainSimulation) {
  const DriftNet d{random_net(3 + 4, 5, 3, 71)};
  const DiffusionNet s = random_diffusion(3, 72);
  const Vec z0 = random_vec(3, 73);
  const auto tr = simulate(d, s, kEmb, z0, 1.0, 1.0, 10, 5, 2);
  numcore::Tape tape;
  SdeVars v{numcore::mlp_leaves(tape, d.net), numcore::mlp_leaves(tape, s.lnet), numcore::mlp_leaves(tape, s.dnet)};
  const auto emb = tape.time_embed(tape.constant(kEmb.freqs().transpose()), tape.constant(tr.grid));
  const auto states = simulate_on_tape(tape, v, tape.constant(z0.transpose()), emb, tr.noise, 0.1);
  ASSERT_EQ(states.size(), 11u);
  for (Eigen::Index j = 0; j <= 10; ++j)
    EXPECT_LT((tape.value(states[static_cast<std::size_t>(j)]) - tr.states.row(j)).norm(), 1e-12);
}
