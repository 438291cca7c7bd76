#include <gtest/gtest.h>

#include "miras/retention.hpp"
#include "miras/rng.hpp"
#include "oracles.hpp"

using namespace miras;

namespace {
Signals sig(double alpha, double eta, double gamma = 0.0) {
  Signals s = Signals::constant(alpha, eta);
  s.gamma = gamma;
  return s;
}

// Row-stochastic seeded matrix.
Tensor simplex_rows(Rng& rng, std::size_t r, std::size_t c, double mass = 1.0) {
  Tensor w = rng.uniform_tensor(Dims{r, c}, 0.1, 1.0);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += w(i, j);
    for (std::size_t j = 0; j < c; ++j) w(i, j) *= mass / s;
  }
  return w;
}
}  // namespace

TEST(Decay, IdentityGate) {
  Rng rng(1);
  const Tensor w = rng.normal_tensor(Dims{3, 3});
  EXPECT_EQ(step_decay(w, rng.normal_tensor(Dims{3, 3}), sig(1.0, 0.0)), w);
}

TEST(Decay, FullReset) {
  Rng rng(2);
  const Tensor g = rng.normal_tensor(Dims{2, 3});
  EXPECT_EQ(step_decay(rng.normal_tensor(Dims{2, 3}), g, sig(0.0, 0.3)), g * -0.3);
}

TEST(Decay, ScalarArithmetic) {
  EXPECT_LE(max_abs_diff(step_decay(Tensor::identity(2), Tensor::identity(2), sig(0.9, 0.1)), Tensor::identity(2) * 0.8),
            1e-15);
}

TEST(Decay, ChannelWiseRows) {
  Signals s;
  s.alpha = Tensor::vector({0.5, 1.0});
  s.eta = Tensor::scalar(0.0);
  const Tensor out = step_decay(Tensor(Dims{2, 3}, 1.0), Tensor(Dims{2, 3}), s);
  EXPECT_EQ(out(0, 2), 0.5);
  EXPECT_EQ(out(1, 0), 1.0);
}

TEST(Decay, ShapeMismatch) {
  EXPECT_THROW(step_decay(Tensor(Dims{2, 2}), Tensor(Dims{4}), sig(1, 1)), DimensionError);
}

TEST(Lq, QTwoIsIdentityMap) {
  Rng rng(3);
  const Tensor a = rng.normal_tensor(Dims{3, 4});
  EXPECT_EQ(lq_normalize(a, 2.0), a);
  const auto st = step_lq(a, rng.normal_tensor(Dims{3, 4}), sig(0.9, 0.2), 2.0);
  EXPECT_EQ(st.weights, st.accumulator);
}

TEST(Lq, ZeroAccumulatorStaysZero) {
  const Tensor z(Dims{2, 2});
  EXPECT_EQ(lq_normalize(z, 4.0), z);
}

TEST(Lq, QuarticNormTwo) {
  Rng rng(4);
  Tensor a = rng.normal_tensor(Dims{3, 3});
  oracle::Mat m(3, oracle::Vec(3));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) m[i][j] = a(i, j);
  a *= 2.0 / oracle::norm_q(m, 4.0);
  const Tensor w = lq_normalize(a, 4.0);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(w[i], a[i] / 4.0, 1e-15);
}

TEST(Lq, DualExponentForm) {
  Rng rng(5);
  const Tensor a = rng.normal_tensor(Dims{4});
  const double r = 4.0 / 3.0;
  const double n = norm_p(a.data(), r);
  const Tensor w = lq_normalize(a, 4.0, LqForm::kDual);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], a[i] / std::pow(n, r - 2.0), 1e-14);
}

TEST(Lq, RejectsQAtMostOne) {
  EXPECT_THROW(step_lq(Tensor(Dims{2}), Tensor(Dims{2}), sig(1, 1), 1.0), ContractError);
}

TEST(KlSoftmax, ConstantLogitsGiveUniform) {
  const Tensor w(Dims{2, 4}, 0.25);
  const Tensor out = step_kl_softmax(w, Tensor(Dims{2, 4}), sig(1.0, 0.5));
  for (double x : out.data()) EXPECT_NEAR(x, 0.25, 1e-15);
}

TEST(KlSoftmax, FixedPointOnSimplex) {
  Rng rng(6);
  const Tensor w = simplex_rows(rng, 3, 5);
  EXPECT_LE(max_abs_diff(step_kl_softmax(w, Tensor(Dims{3, 5}), sig(1.0, 0.7)), w), 1e-12);
}

TEST(KlSoftmax, FullForgetGivesUniform) {
  Rng rng(7);
  const Tensor out = step_kl_softmax(simplex_rows(rng, 2, 4), Tensor(Dims{2, 4}), sig(0.0, 1.0));
  for (double x : out.data()) EXPECT_NEAR(x, 0.25, 1e-15);
}

TEST(KlSoftmax, MatchesRowSoftmaxOracle) {
  Rng rng(8);
  const Tensor w = simplex_rows(rng, 2, 3, 2.0);
  const Tensor g = rng.normal_tensor(Dims{2, 3});
  const Tensor out = step_kl_softmax(w, g, sig(0.8, 0.3), 2.0);
  for (std::size_t r = 0; r < 2; ++r) {
    oracle::Vec z(3);
    for (std::size_t c = 0; c < 3; ++c) z[c] = 0.8 * std::log(w(r, c)) - 0.3 * g(r, c);
    const auto p = oracle::softmax(z);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out(r, c), 2.0 * p[c], 1e-14);
  }
}

TEST(KlSoftmax, WholeTensorSlice) {
  Rng rng(9);
  const Tensor out = step_kl_softmax(Tensor(Dims{2, 3}, 1.0 / 6.0), rng.normal_tensor(Dims{2, 3}), sig(1.0, 1.0), 1.0,
                                     SlicePolicy::kWholeTensor);
  EXPECT_NEAR(sum(out.data()), 1.0, 1e-14);
}

TEST(KlSoftmax, RejectsNegativeState) {
  EXPECT_THROW(step_kl_softmax(Tensor::matrix(1, 2, {-0.1, 1.1}), Tensor(Dims{1, 2}), sig(1, 1)), ContractError);
}

TEST(SoftThreshold, Examples) {
  EXPECT_NEAR(soft_threshold(0.5, 0.2), 0.3, 1e-15);
  EXPECT_EQ(soft_threshold(-0.1, 0.2), 0.0);
  EXPECT_NEAR(soft_threshold(-0.5, 0.2), -0.3, 1e-15);
}

TEST(ElasticLocal, ZeroGammaIsDecay) {
  Rng rng(10);
  const Tensor w = rng.normal_tensor(Dims{3, 3});
  const Tensor g = rng.normal_tensor(Dims{3, 3});
  EXPECT_EQ(step_elastic_local(w, g, sig(0.7, 0.2, 0.0)), step_decay(w, g, sig(0.7, 0.2)));
}

TEST(ElasticLocal, ThresholdsDecayedState) {
  Rng rng(11);
  const Tensor w = rng.normal_tensor(Dims{2, 3});
  const Tensor g = rng.normal_tensor(Dims{2, 3});
  const Tensor out = step_elastic_local(w, g, sig(0.7, 0.2, 0.3));
  for (std::size_t i = 0; i < w.size(); ++i)
    EXPECT_NEAR(out[i], oracle::soft_threshold(0.7 * w[i] - 0.2 * g[i], 0.3), 1e-15);
}

TEST(ElasticFtrl, ZeroGradIsFixedPoint) {
  Rng rng(12);
  Tensor a = rng.normal_tensor(Dims{2, 2});
  const Signals s = sig(0.5, 0.2);
  const Tensor zero(Dims{2, 2});
  const auto first = step_elastic_ftrl(a, zero, s);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(first.weights[i], oracle::soft_threshold(a[i], 0.4));
  auto st = first;
  for (int t = 0; t < 5; ++t) st = step_elastic_ftrl(st.accumulator, zero, s);
  EXPECT_EQ(st.weights, first.weights);
}

TEST(ElasticFtrl, AccumulateThenThreshold) {
  Rng rng(13);
  const Signals s = sig(0.8, 0.1);
  Tensor a(Dims{3, 3});
  Tensor sum_g(Dims{3, 3});
  AccumulatorStep st{a, a};
  for (int t = 0; t < 10; ++t) {
    const Tensor g = rng.normal_tensor(Dims{3, 3});
    sum_g += g;
    st = step_elastic_ftrl(st.accumulator, g, s);
    if (t == 0) {
      for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(st.weights[i], oracle::soft_threshold(-0.1 * g[i], 0.125));
    }
  }
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(st.weights[i], oracle::soft_threshold(-0.1 * sum_g[i], 0.125), 1e-14);
}

TEST(FDivergence, ZeroGradIsIdentity) {
  Rng rng(14);
  const Tensor w = simplex_rows(rng, 3, 4);
  EXPECT_LE(max_abs_diff(step_fdiv(w, Tensor(Dims{3, 4}), sig(1.0, 0.5), MonotoneMap::exp()), w), 1e-9);
}

TEST(FDivergence, ExpMatchesKlSoftmax) {
  Rng rng(15);
  const Tensor w = simplex_rows(rng, 3, 4);
  const Tensor g = rng.normal_tensor(Dims{3, 4});
  EXPECT_LE(max_abs_diff(step_fdiv(w, g, sig(1.0, 0.4), MonotoneMap::exp()), step_kl_softmax(w, g, sig(1.0, 0.4))), 1e-9);
}

TEST(FDivergence, SoftplusKeepsSliceMass) {
  Rng rng(16);
  const Tensor w = simplex_rows(rng, 2, 5, 3.0);
  const Tensor out = step_fdiv(w, rng.normal_tensor(Dims{2, 5}), sig(1.0, 2.0), MonotoneMap::softplus(), 3.0);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      s += out(r, c);
      EXPECT_GT(out(r, c), 0.0);
    }
    EXPECT_NEAR(s, 3.0, 1e-9);
  }
}

TEST(FDivergence, RejectsNonPositiveState) {
  EXPECT_THROW(step_fdiv(Tensor::matrix(1, 2, {0.0, 1.0}), Tensor(Dims{1, 2}), sig(1, 1), MonotoneMap::exp()),
               ContractError);
}

TEST(BregmanSigmoid, ZeroGradIsIdentity) {
  Rng rng(17);
  const Tensor w = rng.uniform_tensor(Dims{3, 3}, 0.05, 0.95);
  EXPECT_LE(max_abs_diff(step_bregman_sigmoid(w, Tensor(Dims{3, 3}), sig(1.0, 0.5)), w), 1e-12);
}

TEST(BregmanSigmoid, SaturatesInsideOpenInterval) {
  const Tensor out = step_bregman_sigmoid(Tensor::vector({0.5}), Tensor::vector({100.0}), sig(1.0, 1.0));
  EXPECT_GT(out[0], 0.0);
  EXPECT_LT(out[0], 1e-10);
}

TEST(BregmanSigmoid, HalfStep) {
  const Tensor out = step_bregman_sigmoid(Tensor::vector({0.5}), Tensor::vector({1.0}), sig(1.0, 0.5));
  EXPECT_NEAR(out[0], oracle::sigmoid_ref(-0.5), 1e-15);
  EXPECT_NEAR(out[0], 0.377541, 1e-6);
}

TEST(BregmanSigmoid, RejectsOutOfRange) {
  EXPECT_THROW(step_bregman_sigmoid(Tensor::vector({1.5}), Tensor::vector({0.0}), sig(1, 1)), ContractError);
}

TEST(PlaceInDomain, SimplexAndInterval) {
  Tensor p(Dims{2, 4});
  place_in_domain(p, default_layout(p), RetentionGate::kl_softmax(2.0));
  for (double x : p.data()) EXPECT_EQ(x, 0.5);
  place_in_domain(p, default_layout(p), RetentionGate::bregman_sigmoid());
  for (double x : p.data()) EXPECT_EQ(x, 0.5);
}
