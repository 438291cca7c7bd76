#include <gtest/gtest.h>

#include "miras/bias.hpp"
#include "miras/finite_difference.hpp"
#include "miras/rng.hpp"

using namespace miras;

namespace {
const std::vector<double> e1 = {1, 0};
const std::vector<double> v20 = {2, 0};
}  // namespace

// Loss carries a 1/2: ||-v||^2 = 4 becomes 2.
TEST(BiasLoss, L2HalfSquaredNorm) {
  const MatrixMemory w(2, 2);
  EXPECT_DOUBLE_EQ(loss(AttentionalBias::l2(), w, e1, v20), 2.0);
  EXPECT_DOUBLE_EQ(2.0 * loss(AttentionalBias::l2(), w, e1, v20), 4.0);
}

TEST(BiasLoss, DotProductOnStoredPair) {
  Rng rng(2);
  const Tensor k = rng.unit_vector(3);
  const Tensor v = rng.normal_tensor(Dims{3});
  const MatrixMemory w(outer(v.data(), k.data()));
  EXPECT_NEAR(loss(AttentionalBias::dot_product(), w, k.data(), v.data()), -2.0 * dot(v.data(), v.data()), 1e-13);
}

TEST(BiasLoss, LpCubic) {
  EXPECT_DOUBLE_EQ(loss(AttentionalBias::lp(3.0), MatrixMemory(2, 2), e1, v20), 8.0);
}

TEST(BiasGrad, L2IdentityCase) {
  const MatrixMemory w(Tensor::identity(2));
  EXPECT_EQ(grad(AttentionalBias::l2(), w, e1, std::vector<double>{0, 1}), Tensor::matrix(2, 2, {1, 0, -1, 0}));
}

TEST(BiasGrad, LpCubicExactSign) {
  const AnyMemory w = MatrixMemory(2, 2);
  const Tensor g = grad(AttentionalBias::lp(3.0), w, e1, v20);
  EXPECT_EQ(g, Tensor::matrix(2, 2, {-12, 0, 0, 0}));
  const Tensor fd = numerical_grad(AttentionalBias::lp(3.0), w, e1, v20);
  EXPECT_LE(std::abs(fd(0, 0) - g(0, 0)) / 12.0, 1e-4);
}

TEST(BiasGrad, HuberMixtureInsideDeltaIsL2) {
  Rng rng(5);
  const MatrixMemory w(rng.normal_tensor(Dims{3, 3}, 0.1));
  const Tensor k = rng.unit_vector(3);
  Tensor v = w.forward(k.data());
  v[0] += 0.6;
  v[1] -= 0.8;  // ||r|| = 1
  EXPECT_EQ(grad(AttentionalBias::huber_mixture(10.0), w, k.data(), v.data()),
            grad(AttentionalBias::l2(), w, k.data(), v.data()));
}

TEST(BiasGrad, HuberNormOutsideDeltaClips) {
  const Tensor k = Tensor::vector({0.6, 0.8, 2.0});
  const MatrixMemory w(2, 3);
  const std::vector<double> v = {-1.2, 1.6};  // ||r|| = 2
  const Tensor g = grad(AttentionalBias::huber_norm(0.5), w, k.data(), v);
  EXPECT_NEAR(norm2(g.data()), 0.5 * norm2(k.data()), 1e-14);
}

TEST(BiasGrad, ThresholdOverrideFromSignals) {
  const MatrixMemory w(2, 2);
  const Tensor delta = Tensor::scalar(10.0);
  EXPECT_EQ(grad(AttentionalBias::huber_mixture(0.1), w, e1, v20, &delta), grad(AttentionalBias::l2(), w, e1, v20));
}

TEST(BiasGrad, RobustShiftMatchesFiniteDifferences) {
  Rng rng(9);
  const AnyMemory w = MatrixMemory(rng.normal_tensor(Dims{3, 4}));
  const Tensor k = rng.normal_tensor(Dims{4});
  const Tensor v = rng.normal_tensor(Dims{3});
  const auto b = AttentionalBias::robust_shift(0.7);
  EXPECT_LE(relative_error(grad(b, w, k.data(), v.data()), numerical_grad(b, w, k.data(), v.data())), 1e-8);
}

TEST(BiasGrad, SmoothModeIsFiniteAtZeroResidual) {
  const auto b = AttentionalBias::lp(1.5, SmoothCfg{});
  const Tensor g = grad(b, MatrixMemory(2, 2), e1, std::vector<double>{0, 0});
  EXPECT_TRUE(g.all_finite());
  EXPECT_EQ(g, Tensor(Dims{2, 2}));
}

TEST(Bias, Validation) {
  EXPECT_THROW(AttentionalBias::lp(0.5).validate(), ContractError);
  EXPECT_THROW(AttentionalBias::huber_coord(0.0).validate(), ContractError);
  EXPECT_THROW(AttentionalBias::robust_shift(-1.0).validate(), ContractError);
  EXPECT_THROW(loss(AttentionalBias::l2(), MatrixMemory(2, 2), e1, std::vector<double>{1, 2, 3}), DimensionError);
}
