#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "miras/models.hpp"
#include "miras/rng.hpp"

namespace miras {

inline constexpr std::size_t kConvWidth = 4;

// Low-rank channel-wise signal map x -> up (down x), down: r x d, up: d x r.
struct LowRank {
  Tensor down;
  Tensor up;

  Tensor apply(std::span<const double> x) const { return matvec(up, matvec(down, x).data()); }
  std::size_t param_count() const { return down.size() + up.size(); }
};

enum class Path : std::size_t { kQuery = 0, kKey = 1, kValue = 2 };

struct LayerParams {
  std::size_t d = 0;
  std::size_t rank = 0;
  Tensor w_q, w_k, w_v;  // d x d
  Tensor conv;           // {3, d, 4}; tap 3 multiplies the current step
  LowRank alpha, eta, delta;
  Tensor w_g;            // output gate, d x d
  Tensor norm_gain;      // d

  static LayerParams zeros(std::size_t d, std::size_t rank) {
    if (rank == 0 || rank > d) throw DimensionError("layer rank must satisfy 1 <= r <= d");
    auto lr = [&] { return LowRank{Tensor(Dims{rank, d}), Tensor(Dims{d, rank})}; };
    return {d,        rank,  Tensor(Dims{d, d}), Tensor(Dims{d, d}), Tensor(Dims{d, d}), Tensor(Dims{3, d, kConvWidth}),
            lr(),     lr(),  lr(),               Tensor(Dims{d, d}), Tensor(Dims{d}, 1.0)};
  }

  static LayerParams seeded(std::size_t d, std::size_t rank, Rng& rng, double stddev = 0.02) {
    LayerParams p = zeros(d, rank);
    for (Tensor* t : {&p.w_q, &p.w_k, &p.w_v, &p.conv, &p.alpha.down, &p.alpha.up, &p.eta.down, &p.eta.up,
                      &p.delta.down, &p.delta.up, &p.w_g}) {
      for (double& x : t->data()) x = rng.normal(0.0, stddev);
    }
    return p;
  }

  // Conv kernel that passes the current step through unchanged.
  void set_impulse_conv() {
    conv.fill(0.0);
    for (std::size_t path = 0; path < 3; ++path)
      for (std::size_t c = 0; c < d; ++c) conv[(path * d + c) * kConvWidth + (kConvWidth - 1)] = 1.0;
  }

  double conv_tap(Path path, std::size_t channel, std::size_t tap) const {
    return conv[(static_cast<std::size_t>(path) * d + channel) * kConvWidth + tap];
  }

  std::size_t gate_param_count() const { return alpha.param_count(); }
};

// Last three post-projection vectors per path, oldest first; zeros before
// the sequence starts.
struct ConvHistory {
  std::array<std::array<Tensor, kConvWidth - 1>, 3> past;

  explicit ConvHistory(std::size_t d) {
    for (auto& path : past)
      for (auto& t : path) t = Tensor(Dims{d});
  }
};

struct Projection {
  Tensor q, k, v;
};

inline Tensor l2_normalized(const Tensor& x) {
  const double n = norm2(x.data());
  if (n < kNormFloor) return Tensor(x.dims());
  return x * (1.0 / n);
}

// Projections, causal depthwise conv of width 4, then unit-norm q and k.
inline Projection project(const LayerParams& p, std::span<const double> x, ConvHistory& hist) {
  if (x.size() != p.d) throw DimensionError("project: input length mismatch");
  const std::array<const Tensor*, 3> w = {&p.w_q, &p.w_k, &p.w_v};
  std::array<Tensor, 3> out;
  for (std::size_t path = 0; path < 3; ++path) {
    const Tensor cur = matvec(*w[path], x);
    Tensor y(Dims{p.d});
    for (std::size_t c = 0; c < p.d; ++c) {
      double s = 0.0;
      for (std::size_t tap = 0; tap + 1 < kConvWidth; ++tap) s += p.conv_tap(Path(path), c, tap) * hist.past[path][tap][c];
      s += p.conv_tap(Path(path), c, kConvWidth - 1) * cur[c];
      y[c] = s;
    }
    auto& past = hist.past[path];
    for (std::size_t j = 0; j + 1 < past.size(); ++j) past[j] = past[j + 1];
    past.back() = cur;
    out[path] = std::move(y);
  }
  return {l2_normalized(out[0]), l2_normalized(out[1]), std::move(out[2])};
}

// α = σ(·), η = softplus(·), δ = softplus(·), all channel-wise. Clamped so
// saturation in double precision cannot reach 0 or 1.
inline Signals gate_signals(const LayerParams& p, std::span<const double> x) {
  Signals s;
  s.alpha = p.alpha.apply(x);
  for (double& a : s.alpha.data()) a = std::clamp(sigmoid(a), kLogFloor, 1.0 - kLogFloor);
  s.eta = p.eta.apply(x);
  for (double& e : s.eta.data()) e = std::max(softplus(e), kLogFloor);
  Tensor dl = p.delta.apply(x);
  for (double& e : dl.data()) e = std::max(softplus(e), kLogFloor);
  s.delta = std::move(dl);
  return s;
}

inline Tensor rms_normalized(const Tensor& x, const Tensor& gain, double eps = 1e-6) {
  double ms = 0.0;
  for (double v : x.data()) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + eps);
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * x[i] * inv;
  return out;
}

// y_t = (W_G x_t) ⊙ norm(M_t(q_t)), after the memory has absorbed (k_t, v_t).
inline std::vector<Tensor> layer_forward(const LayerParams& p, const MirasSpec& spec, std::span<const Tensor> xs,
                                         std::uint64_t seed) {
  MirasModel model(spec, p.d, p.d, seed);
  ConvHistory hist(p.d);
  std::vector<Tensor> ys;
  ys.reserve(xs.size());
  for (const Tensor& x : xs) {
    const Projection pr = project(p, x.data(), hist);
    Signals sig = gate_signals(p, x.data());
    sig.gamma = spec.signals.gamma;
    model.step(pr.k.data(), pr.v.data(), sig);
    const Tensor read = rms_normalized(model.query(pr.q.data()), p.norm_gain);
    const Tensor gate = matvec(p.w_g, x.data());
    Tensor y(Dims{p.d});
    for (std::size_t i = 0; i < p.d; ++i) y[i] = gate[i] * read[i];
    ys.push_back(std::move(y));
  }
  return ys;
}

}  // namespace miras
