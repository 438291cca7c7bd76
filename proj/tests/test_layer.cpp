#include <gtest/gtest.h>

#include "miras/layer.hpp"
#include "oracles.hpp"

using namespace miras;

namespace {
std::vector<Tensor> xs(std::uint64_t seed, std::size_t T, std::size_t d) {
  Rng rng(seed, 0x1a7);
  std::vector<Tensor> out;
  for (std::size_t t = 0; t < T; ++t) out.push_back(rng.normal_tensor(Dims{d}));
  return out;
}
}  // namespace

TEST(Project, ZeroInputIsGuarded) {
  Rng rng(1);
  const LayerParams p = LayerParams::seeded(4, 2, rng);
  ConvHistory h(4);
  const Projection pr = project(p, std::vector<double>(4, 0.0), h);
  EXPECT_EQ(pr.q, Tensor(Dims{4}));
  EXPECT_EQ(pr.k, Tensor(Dims{4}));
  EXPECT_EQ(pr.v, Tensor(Dims{4}));
}

TEST(Project, IdentityProjectionImpulseConv) {
  LayerParams p = LayerParams::zeros(3, 1);
  p.w_q = p.w_k = p.w_v = Tensor::identity(3);
  p.set_impulse_conv();
  ConvHistory h(3);
  for (const Tensor& x : xs(2, 5, 3)) {
    const Projection pr = project(p, x.data(), h);
    EXPECT_LE(max_abs_diff(pr.k, x * (1.0 / norm2(x.data()))), 1e-15);
    EXPECT_EQ(pr.v, x);
  }
}

TEST(Project, MatchesStraightLineConv) {
  const std::size_t d = 8, T = 12;
  Rng rng(3);
  const LayerParams p = LayerParams::seeded(d, 2, rng, 0.3);
  const auto input = xs(3, T, d);
  // pre[t][path] = W_path x_t
  std::vector<std::array<oracle::Vec, 3>> pre(T);
  const std::array<const Tensor*, 3> w = {&p.w_q, &p.w_k, &p.w_v};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t path = 0; path < 3; ++path) {
      pre[t][path].assign(d, 0.0);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) pre[t][path][r] += (*w[path])(r, c) * input[t][c];
    }
  ConvHistory h(d);
  for (std::size_t t = 0; t < T; ++t) {
    const Projection pr = project(p, input[t].data(), h);
    std::array<oracle::Vec, 3> y;
    for (std::size_t path = 0; path < 3; ++path) {
      y[path].assign(d, 0.0);
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t tap = 0; tap < kConvWidth; ++tap) {
          const long src = static_cast<long>(t) - static_cast<long>(kConvWidth - 1 - tap);
          if (src >= 0) y[path][c] += p.conv[(path * d + c) * kConvWidth + tap] * pre[src][path][c];
        }
    }
    auto unit = [](oracle::Vec v) {
      double n = 0.0;
      for (double x : v) n += x * x;
      n = std::sqrt(n);
      for (double& x : v) x /= n;
      return v;
    };
    const auto q = unit(y[0]), k = unit(y[1]);
    for (std::size_t c = 0; c < d; ++c) {
      EXPECT_NEAR(pr.q[c], q[c], 1e-13);
      EXPECT_NEAR(pr.k[c], k[c], 1e-13);
      EXPECT_NEAR(pr.v[c], y[2][c], 1e-15);
    }
    EXPECT_NEAR(norm2(pr.k.data()), 1.0, 1e-14);
  }
}

TEST(GateSignals, ZeroFactors) {
  const LayerParams p = LayerParams::zeros(4, 2);
  const Signals s = gate_signals(p, std::vector<double>(4, 0.0));
  for (double a : s.alpha.data()) EXPECT_EQ(a, 0.5);
  for (double e : s.eta.data()) EXPECT_NEAR(e, 0.6931471805599453, 1e-15);
}

TEST(GateSignals, ZeroUpFactorGivesConstantSignals) {
  Rng rng(4);
  LayerParams p = LayerParams::seeded(5, 2, rng, 1.0);
  p.alpha.up.fill(0.0);
  const auto in = xs(4, 2, 5);
  EXPECT_EQ(gate_signals(p, in[0].data()).alpha, gate_signals(p, in[1].data()).alpha);
}

TEST(GateSignals, InputDependentAndInRange) {
  Rng rng(5);
  const LayerParams p = LayerParams::seeded(6, 3, rng, 0.5);
  const auto in = xs(5, 50, 6);
  EXPECT_NE(gate_signals(p, in[0].data()).alpha, gate_signals(p, in[1].data()).alpha);
  for (const Tensor& x : in) {
    for (double scale : {1.0, 20.0, -20.0, 1e4}) {
      const Signals s = gate_signals(p, (x * scale).data());
      for (double a : s.alpha.data()) EXPECT_TRUE(a > 0.0 && a < 1.0);
      for (double e : s.eta.data()) EXPECT_GT(e, 0.0);
      for (double e : s.delta->data()) EXPECT_GT(e, 0.0);
    }
    const Signals s = gate_signals(p, x.data());
    for (double a : s.alpha.data()) EXPECT_TRUE(a > 0.0 && a < 1.0);
    for (double e : s.eta.data()) EXPECT_GT(e, 0.0);
    for (double e : s.delta->data()) EXPECT_GT(e, 0.0);
  }
}

TEST(GateSignals, LowRankParameterCount) {
  const LayerParams p = LayerParams::zeros(16, 4);
  EXPECT_EQ(p.alpha.param_count(), 2u * 4 * 16);
  EXPECT_EQ(p.gate_param_count(), 2u * 4 * 16);
  EXPECT_THROW(LayerParams::zeros(4, 5), DimensionError);
}

TEST(LayerForward, DeadLayerIsZero) {
  const LayerParams p = LayerParams::zeros(4, 2);
  for (const Tensor& y : layer_forward(p, MirasSpec::l2_decay(), xs(6, 5, 4), 0)) EXPECT_EQ(y, Tensor(Dims{4}));
}

TEST(LayerForward, MatchesHandComposition) {
  const std::size_t d = 6;
  Rng rng(7);
  const LayerParams p = LayerParams::seeded(d, 2, rng, 0.3);
  const auto in = xs(7, 8, d);
  const auto ys = layer_forward(p, MirasSpec::l2_decay(), in, 0);
  ConvHistory h(d);
  Tensor w(Dims{d, d});
  for (std::size_t t = 0; t < in.size(); ++t) {
    const Projection pr = project(p, in[t].data(), h);
    const Signals s = gate_signals(p, in[t].data());
    Tensor r = matvec(w, pr.k.data());
    r -= pr.v;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) w(i, j) = s.alpha[i] * w(i, j) - s.eta[i] * r[i] * pr.k[j];
    const Tensor read = matvec(w, pr.q.data());
    double ms = 0.0;
    for (double x : read.data()) ms += x * x / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double gate = dot(p.w_g.row(i), in[t].data());
      EXPECT_NEAR(ys[t][i], gate * read[i] / std::sqrt(ms + 1e-6), 1e-13);
    }
  }
}

TEST(LayerForward, Causal) {
  Rng rng(8);
  const LayerParams p = LayerParams::seeded(5, 2, rng, 0.3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto in = xs(100 + seed, 8, 5);
    const auto base = layer_forward(p, MirasSpec::yaad(), in, seed);
    const std::size_t cut = seed % 8;
    for (std::size_t t = cut; t < 8; ++t) in[t] = in[t] * -3.0;
    const auto moved = layer_forward(p, MirasSpec::yaad(), in, seed);
    for (std::size_t t = 0; t < cut; ++t) EXPECT_EQ(base[t], moved[t]);
  }
}
