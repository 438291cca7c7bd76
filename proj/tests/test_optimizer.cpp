#include <gtest/gtest.h>

#include "miras/optimizer.hpp"
#include "miras/rng.hpp"

using namespace miras;

namespace {
MemoryState matrix_state(const Tensor& w) { return MemoryState{MatrixMemory(w), std::nullopt, std::nullopt}; }
}  // namespace

TEST(GdStep, DeltaRuleStoresPairInOneStep) {
  Rng rng(1);
  const Tensor k = rng.unit_vector(4);
  const Tensor v = rng.normal_tensor(Dims{3});
  MemoryState st = matrix_state(Tensor(Dims{3, 4}));
  gd_step(st, AttentionalBias::l2(), RetentionGate::decay(), k.data(), v.data(), Signals::constant(1.0, 1.0));
  EXPECT_LE(max_abs_diff(st.params(), outer(v.data(), k.data())), 1e-15);
  EXPECT_LE(max_abs_diff(forward(st.memory, k.data()), v), 1e-15);
}

TEST(GdStep, NullStepForEveryBias) {
  Rng rng(2);
  const Tensor w = rng.normal_tensor(Dims{2, 3});
  for (const auto& b : {AttentionalBias::l2(), AttentionalBias::lp(3), AttentionalBias::dot_product(),
                        AttentionalBias::huber_mixture(0.5), AttentionalBias::robust_shift(0.2)}) {
    MemoryState st = matrix_state(w);
    gd_step(st, b, RetentionGate::decay(), rng.normal_tensor(Dims{3}).data(), rng.normal_tensor(Dims{2}).data(),
            Signals::constant(1.0, 0.0));
    EXPECT_EQ(st.params(), w);
  }
}

TEST(GdStep, DotProductHalfEtaIsHebbian) {
  Rng rng(3);
  const Tensor k = rng.unit_vector(3);
  const Tensor v = rng.normal_tensor(Dims{3});
  MemoryState st = matrix_state(Tensor(Dims{3, 3}));
  gd_step(st, AttentionalBias::dot_product(), RetentionGate::decay(), k.data(), v.data(), Signals::constant(1.0, 0.5));
  EXPECT_EQ(st.params(), outer(v.data(), k.data()));
}

TEST(GdStep, NonFiniteStateRaises) {
  MemoryState st = matrix_state(Tensor(Dims{1, 1}));
  EXPECT_THROW(gd_step(st, AttentionalBias::l2(), RetentionGate::decay(), std::vector<double>{1e300},
                       std::vector<double>{1e300}, Signals::constant(1.0, 1e300)),
               NumericalError);
}

TEST(Momentum, ZeroDecayIsPlainGd) {
  Rng rng(4);
  const Tensor w = rng.normal_tensor(Dims{3, 3});
  MemoryState a = matrix_state(w), b = matrix_state(w);
  const Signals s = Signals::constant(0.9, 0.3);
  for (int t = 0; t < 5; ++t) {
    const Tensor k = rng.unit_vector(3), v = rng.normal_tensor(Dims{3});
    momentum_step(a, AttentionalBias::l2(), RetentionGate::decay(), k.data(), v.data(), s, s.eta, 0.0);
    gd_step(b, AttentionalBias::l2(), RetentionGate::decay(), k.data(), v.data(), s);
    EXPECT_LE(max_abs_diff(a.params(), b.params()), 1e-15);
  }
}

TEST(Momentum, ZeroThetaOnlyDecays) {
  Rng rng(5);
  const Tensor w = rng.normal_tensor(Dims{2, 2});
  MemoryState st = matrix_state(w);
  const Signals s = Signals::constant(0.5, 0.0);
  for (int t = 0; t < 3; ++t)
    momentum_step(st, AttentionalBias::l2(), RetentionGate::decay(), rng.unit_vector(2).data(),
                  rng.normal_tensor(Dims{2}).data(), s, Tensor::scalar(0.0), 1.0);
  EXPECT_LE(max_abs_diff(st.params(), w * 0.125), 1e-15);
}

TEST(Momentum, MatchesUnrolledLoop) {
  Rng rng(6);
  const double alpha = 0.9, theta = 0.2, eta_m = 0.7;
  std::vector<double> w(4, 0.0), s(4, 0.0);  // 2x2, row-major
  MemoryState st = matrix_state(Tensor(Dims{2, 2}));
  for (int t = 0; t < 5; ++t) {
    const Tensor k = rng.unit_vector(2), v = rng.normal_tensor(Dims{2});
    for (int r = 0; r < 2; ++r) {
      const double res = w[r * 2] * k[0] + w[r * 2 + 1] * k[1] - v[r];
      for (int c = 0; c < 2; ++c) {
        s[r * 2 + c] = eta_m * s[r * 2 + c] - theta * res * k[c];
      }
    }
    for (int i = 0; i < 4; ++i) w[i] = alpha * w[i] + s[i];
    momentum_step(st, AttentionalBias::l2(), RetentionGate::decay(), k.data(), v.data(),
                  Signals::constant(alpha, theta), Tensor::scalar(theta), eta_m);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(st.params()[i], w[i], 1e-15);
  }
}

TEST(Momentum, RequiresDecayGate) {
  MemoryState st = matrix_state(Tensor(Dims{2, 2}));
  EXPECT_THROW(momentum_step(st, AttentionalBias::l2(), RetentionGate::lq(3), std::vector<double>{1, 0},
                             std::vector<double>{1, 0}, Signals::constant(1, 1), Tensor::scalar(1.0), 0.5),
               ContractError);
}

TEST(FtrlQuadratic, ClosedForms) {
  Rng rng(7);
  const Tensor g = rng.normal_tensor(Dims{2, 3});
  const std::vector<Tensor> one = {g};
  EXPECT_EQ(ftrl_quadratic_solve(one, 0.3), g * -0.3);
  const std::vector<Tensor> cancel = {g, g * -1.0};
  EXPECT_EQ(ftrl_quadratic_solve(cancel, 0.3), Tensor(Dims{2, 3}));
  EXPECT_EQ(ftrl_quadratic_solve({}, 0.3, Dims{2}), Tensor(Dims{2}));
}

TEST(FtrlQuadratic, EqualsOnlineGradientDescent) {
  Rng rng(8);
  std::vector<Tensor> grads;
  Tensor w(Dims{3, 3});
  for (int t = 0; t < 20; ++t) {
    grads.push_back(rng.normal_tensor(Dims{3, 3}));
    w = w - grads.back() * 0.05;
    EXPECT_EQ(ftrl_quadratic_solve(grads, 0.05), w);
  }
}

TEST(FtrlAgreement, Examples) {
  EXPECT_EQ(verify_proposition1(3, 1), 0.0);
  EXPECT_EQ(verify_proposition1(3, 10, 8, 0.0), 0.0);
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_LE(verify_proposition1(s, 50), 1e-10);
  EXPECT_THROW(verify_proposition1(0, 0), ContractError);
}

TEST(PrepareState, LqStartsFromNormalizedAccumulator) {
  Rng rng(9);
  MemoryState st = matrix_state(rng.normal_tensor(Dims{2, 2}));
  const Tensor a0 = st.params();
  prepare_state(st, RetentionGate::lq(4), InnerLearner::gd());
  EXPECT_EQ(*st.accumulator, a0);
  EXPECT_EQ(st.params(), lq_normalize(a0, 4));
}
