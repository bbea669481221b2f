#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "artemis/encoder.hpp"

using namespace artemis;
using namespace artemis::encoder;

namespace {

LaplaceKernel single_real_pole(double decay) {
  LaplaceKernel k = LaplaceKernel::zeros(1, 1, 0, 1);
  k.set_real(0, decay, Mat::Ones(1, 1));
  return k;
}

Mlp1h zero_bias(Eigen::Index emb_dim, Eigen::Index dz) { return Mlp1h::zeros(emb_dim, 2, dz); }

TimeEmbedding unit_embedding() { return TimeEmbedding::from_freqs(Vec::Ones(1)); }

LaplaceKernel random_kernel(Eigen::Index dz, Eigen::Index dx, Eigen::Index pairs, Eigen::Index reals,
                            std::uint64_t seed) {
  CounterRng rng(seed);
  LaplaceKernel k = LaplaceKernel::zeros(dz, dx, pairs, reals);
  std::uint64_t c = 0;
  for (Eigen::Index p = 0; p < pairs; ++p) {
    k.pair_raw_re[p] = rng.normal(0, c++);
    k.pair_im[p] = 3.0 * rng.normal(0, c++);
  }
  for (Eigen::Index q = 0; q < reals; ++q) k.real_raw_re[q] = rng.normal(0, c++);
  for (Eigen::Index i = 0; i < k.residues.size(); ++i) k.residues.data()[i] = rng.normal(1, c++);
  return k;
}

}  // namespace

TEST(KernelEval, CausalForNegativeLag) {
  const LaplaceKernel k = random_kernel(2, 3, 2, 1, 5);
  EXPECT_TRUE(kernel_eval(k, -0.1).isZero(0.0));
  EXPECT_TRUE(kernel_eval(k, -1e-12).isZero(0.0));
}

TEST(KernelEval, SingleRealPoleIsExponential) {
  EXPECT_NEAR(kernel_eval(single_real_pole(1.0), 1.0)(0, 0), 0.36787944117144233, 1e-15);
}

TEST(KernelEval, ConjugatePairMatchesComplexArithmetic) {
  LaplaceKernel k = LaplaceKernel::zeros(1, 1, 1, 0);
  k.set_pair(0, 0.5, 2.0, Mat::Ones(1, 1), Mat::Zero(1, 1));
  const std::complex<double> lam(-0.5, 2.0);
  for (double t : {std::numbers::pi / 4, 0.0, 0.3, 1.7}) {
    const std::complex<double> direct = std::exp(lam * t) + std::exp(std::conj(lam) * t);
    EXPECT_EQ(direct.imag(), 0.0);
    EXPECT_NEAR(kernel_eval(k, t)(0, 0), direct.real(), 1e-12);
    EXPECT_NEAR(kernel_eval(k, t)(0, 0), 2.0 * std::exp(-0.5 * t) * std::cos(2.0 * t), 1e-12);
  }
}

TEST(KernelEval, PolesStayStableForAnyRawParameter) {
  const LaplaceKernel k = random_kernel(1, 1, 4, 3, 9);
  for (Eigen::Index p = 0; p < k.pairs(); ++p) EXPECT_LT(k.pair_pole(p).real(), 0.0);
  for (Eigen::Index q = 0; q < k.reals(); ++q) EXPECT_LT(k.real_pole(q), 0.0);
}

TEST(TimeEmbed, ZeroTimeAlternates) {
  const Vec e = time_embed(TimeEmbedding::from_freqs(Vec::LinSpaced(3, 0.5, 2.0)), 0.0);
  ASSERT_EQ(e.size(), 6);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(e[2 * k], 0.0);
    EXPECT_EQ(e[2 * k + 1], 1.0);
  }
}

TEST(TimeEmbed, QuarterPeriod) {
  const Vec e = time_embed(unit_embedding(), 0.25);
  EXPECT_NEAR(e[0], 1.0, 1e-12);
  EXPECT_NEAR(e[1], 0.0, 1e-12);
}

TEST(TimeEmbed, PairsHaveUnitNorm) {
  CounterRng rng(3);
  const TimeEmbedding emb = TimeEmbedding::from_freqs(Vec::LinSpaced(4, 0.3, 5.0));
  for (std::uint64_t i = 0; i < 100; ++i) {
    const Vec e = time_embed(emb, 10.0 * rng.uniform(0, i));
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(e[2 * k] * e[2 * k] + e[2 * k + 1] * e[2 * k + 1], 1.0, 1e-12);
  }
}

TEST(Encode, ZeroInputsAndBiasGiveZeroPath) {
  const LaplaceKernel k = random_kernel(2, 3, 2, 1, 1);
  const ObservationWindow w = ObservationWindow::regular(Mat::Zero(5, 3));
  const auto res = encode(k, zero_bias(2, 2), unit_embedding(), w, Vec::LinSpaced(6, 0.0, 1.0));
  EXPECT_TRUE(res.path.isZero(0.0));
  EXPECT_FALSE(res.empty_window);
}

TEST(Encode, SingleObservationRiemannSum) {
  ObservationWindow w;
  w.times = Vec::Constant(1, 0.5);
  w.values = Mat::Ones(1, 1);
  w.mask = Mat::Ones(1, 1);
  w.horizon = 1.0;
  const Vec grid = Vec::Constant(1, 1.0);
  const auto res = encode(single_real_pole(1.0), zero_bias(2, 1), unit_embedding(), w, grid);
  EXPECT_NEAR(res.path(0, 0), std::exp(-0.5) * 0.5, 1e-15);
  EXPECT_NEAR(res.path(0, 0), 0.303265329856317, 1e-12);
}

TEST(Encode, FullyMaskedEqualsAllZero) {
  const LaplaceKernel k = random_kernel(3, 2, 2, 0, 4);
  const Mlp1h bias = numcore::mlp_init(2, 4, 3, CounterRng(2), 0);
  ObservationWindow masked = ObservationWindow::regular(Mat::Zero(6, 2));
  masked.mask.setZero();
  const ObservationWindow zero = ObservationWindow::regular(Mat::Zero(6, 2));
  const Vec grid = Vec::LinSpaced(5, 0.0, 1.0);
  EXPECT_TRUE(encode(k, bias, unit_embedding(), masked, grid).path.isApprox(
      encode(k, bias, unit_embedding(), zero, grid).path, 0.0));
}

TEST(Encode, EmptyWindowGivesBiasAndFlag) {
  const LaplaceKernel k = random_kernel(2, 2, 1, 1, 4);
  const Mlp1h bias = numcore::mlp_init(2, 4, 2, CounterRng(2), 0);
  ObservationWindow w;
  w.times.resize(0);
  w.values.resize(0, 2);
  w.mask.resize(0, 2);
  const auto res = encode(k, bias, unit_embedding(), w, Vec::Constant(1, 0.4));
  EXPECT_TRUE(res.empty_window);
  EXPECT_NEAR((res.path.row(0).transpose() - numcore::mlp_forward(bias, time_embed(unit_embedding(), 0.4))).norm(),
              0.0, 1e-15);
}

TEST(Encode, CausalityIsExact) {
  const LaplaceKernel k = random_kernel(3, 2, 2, 1, 8);
  const Mlp1h bias = numcore::mlp_init(2, 4, 3, CounterRng(5), 0);
  CounterRng rng(11);
  Mat x(10, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(0, static_cast<std::uint64_t>(i));
  const ObservationWindow w = ObservationWindow::regular(x);
  ObservationWindow later = w;
  later.values.row(7) *= -5.0;  // t = 0.8
  const Vec grid = Vec::LinSpaced(8, 0.0, 0.7);
  const Mat a = encode(k, bias, unit_embedding(), w, grid).path;
  const Mat b = encode(k, bias, unit_embedding(), later, grid).path;
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Encode, QuadratureErrorHalvesWithSpacing) {
  // x(s) = 1 + s against kappa(t) = e^{-t} on [0, 1]: the exact integral is 1.
  const LaplaceKernel k = single_real_pole(1.0);
  const Vec grid = Vec::Constant(1, 1.0);
  double prev = 0.0;
  for (int n : {20, 40, 80, 160, 320}) {
    Mat x(n, 1);
    for (int i = 0; i < n; ++i) x(i, 0) = 1.0 + static_cast<double>(i + 1) / n;
    const double err = std::abs(encode(k, zero_bias(2, 1), unit_embedding(), ObservationWindow::regular(x), grid)
                                    .path(0, 0) -
                                1.0);
    if (prev > 0.0) {
      EXPECT_GT(prev / err, 2.0 / 1.2);
      EXPECT_LT(prev / err, 2.0 * 1.2);
    }
    prev = err;
  }
}

TEST(Encode, TapeMatchesDirectEvaluation) {
  const LaplaceKernel k = random_kernel(3, 4, 2, 1, 21);
  const Mlp1h bias = numcore::mlp_init(4, 5, 3, CounterRng(6), 0);
  const TimeEmbedding emb = TimeEmbedding::from_freqs((Vec(2) << 0.7, 1.9).finished());
  CounterRng rng(12);
  ObservationWindow w;
  w.times = (Vec(5) << 0.05, 0.2, 0.21, 0.6, 0.95).finished();
  w.values = Mat(5, 4);
  for (Eigen::Index i = 0; i < w.values.size(); ++i) w.values.data()[i] = rng.normal(0, static_cast<std::uint64_t>(i));
  w.mask = Mat::Ones(5, 4);
  w.mask(2, 1) = 0.0;
  w.values(2, 1) = 0.0;
  w.validate();
  const Vec grid = Vec::LinSpaced(7, 0.0, 1.5);
  const Mat direct = encode(k, bias, emb, w, grid).path;

  numcore::Tape tape;
  EncoderVars v{tape.leaf(k.pair_raw_re.transpose()), tape.leaf(k.pair_im.transpose()),
                tape.leaf(k.real_raw_re.transpose()), tape.leaf(k.residues), numcore::mlp_leaves(tape, bias)};
  const auto freqs = tape.constant(emb.freqs().transpose());
  const auto embedding = tape.time_embed(freqs, tape.constant(grid));
  const auto path = encode_on_tape(tape, v, 3, QuadratureLayout::build(w.times, grid), w.values.cwiseProduct(w.mask),
                                   embedding);
  EXPECT_LT((tape.value(path) - direct).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ObservationWindowContract, RejectsBadWindows) {
  ObservationWindow w = ObservationWindow::regular(Mat::Ones(3, 1));
  w.times[1] = w.times[0];
  EXPECT_THROW(w.validate(), ContractViolation);
  w = ObservationWindow::regular(Mat::Ones(3, 1));
  w.mask(0, 0) = 0.0;
  EXPECT_THROW(w.validate(), ContractViolation);  // masked entry is nonzero
  w.mask(0, 0) = 0.5;
  EXPECT_THROW(w.validate(), ContractViolation);
}
