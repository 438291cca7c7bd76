#pragma once

#include <cmath>
#include <concepts>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "miras/rng.hpp"
#include "miras/tensor.hpp"

namespace miras {

// Which axis of a parameter block a channel-wise signal (length = memory
// output dim) scales. Matrix memories and W1 gate their rows; W2 and the
// layer-norm vectors gate along their d-length column axis.
enum class ChannelAxis { kRows, kCols };

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 1;
  std::size_t cols = 1;
  ChannelAxis channel_axis = ChannelAxis::kRows;

  std::size_t size() const { return rows * cols; }
};

using ParamLayout = std::vector<ParamBlock>;

inline std::size_t layout_size(const ParamLayout& layout) {
  std::size_t n = 0;
  for (const auto& b : layout) n += b.size();
  return n;
}

// Fallback layout for a bare tensor: one block, rank-2 gated by rows.
inline ParamLayout default_layout(const Tensor& t) {
  if (t.rank() == 2) return {ParamBlock{"tensor", 0, t.rows(), t.cols(), ChannelAxis::kRows}};
  return {ParamBlock{"tensor", 0, 1, t.size(), ChannelAxis::kCols}};
}

template <typename M>
concept AssociativeMemory = requires(const M& m, std::span<const double> x, const Tensor& batch) {
  { m.input_dim() } -> std::convertible_to<std::size_t>;
  { m.output_dim() } -> std::convertible_to<std::size_t>;
  { m.forward(x) } -> std::same_as<Tensor>;
  { m.grad_params(x, x) } -> std::same_as<Tensor>;
  { m.params() } -> std::convertible_to<const Tensor&>;
  { m.layout() } -> std::same_as<ParamLayout>;
  { m.batched_forward(batch) } -> std::same_as<Tensor>;
  { m.batched_scaled_pullback(batch, batch, batch) } -> std::same_as<Tensor>;
};

// ---------------------------------------------------------------------------

// M(W, k) = W k with W of shape d_v x d_k. No bias term.
class MatrixMemory {
 public:
  MatrixMemory(std::size_t d_v, std::size_t d_k) : w_(Dims{d_v, d_k}) {}
  explicit MatrixMemory(Tensor w) : w_(std::move(w)) {
    if (w_.rank() != 2) throw DimensionError("MatrixMemory needs a rank-2 weight");
  }

  std::size_t input_dim() const { return w_.cols(); }
  std::size_t output_dim() const { return w_.rows(); }

  const Tensor& params() const { return w_; }
  Tensor& params() { return w_; }
  const Tensor& weight() const { return w_; }

  ParamLayout layout() const { return default_layout(w_); }

  Tensor forward(std::span<const double> k) const {
    if (k.size() != input_dim()) {
      throw DimensionError("MatrixMemory::forward: key length " + std::to_string(k.size()) +
                           ", expected " + std::to_string(input_dim()));
    }
    return matvec(w_, k);
  }

  // dL/dW = upstream k^T.
  Tensor grad_params(std::span<const double> k, std::span<const double> upstream) const {
    if (k.size() != input_dim() || upstream.size() != output_dim()) {
      throw DimensionError("MatrixMemory::grad_params: dimension mismatch");
    }
    return outer(upstream, k);
  }

  // Columns of keys (d_k x b) -> predictions (d_v x b).
  Tensor batched_forward(const Tensor& keys) const { return matmul(w_, keys); }

  // sum_i (s_i ⊙ u_i) k_i^T, with s_i scaling output rows.
  Tensor batched_scaled_pullback(const Tensor& keys, const Tensor& upstream, const Tensor& scales) const {
    Tensor weighted = upstream;
    for (std::size_t i = 0; i < weighted.size(); ++i) weighted[i] *= scales[i];
    return matmul_nt(weighted, keys);
  }

 private:
  Tensor w_;
};

// ---------------------------------------------------------------------------

namespace detail {

inline double gelu(double a) { return 0.5 * a * (1.0 + std::erf(a / std::numbers::sqrt2)); }

inline double gelu_grad(double a) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(a / std::numbers::sqrt2)) + a * inv_sqrt_2pi * std::exp(-0.5 * a * a);
}

}  // namespace detail

// M(x) = x + LN(W1 GELU(W2 x)), W2: (e d) x d, W1: d x (e d). The layer-norm
// gain and offset are trainable and live in the same flat parameter vector:
//   [ W1 | W2 | gain | offset ].
class MlpMemory {
 public:
  static constexpr double kLayerNormEps = 1e-5;
  // Below this variance the pre-norm vector is treated as constant and LN
  // returns the offset alone.
  static constexpr double kDegenerateVariance = 1e-12;

  MlpMemory(std::size_t d, std::size_t expansion) : d_(d), e_(expansion), params_(Dims{param_count(d, expansion)}) {
    if (d == 0 || expansion == 0) throw DimensionError("MlpMemory: d and expansion must be positive");
    set_gain(1.0);
  }

  // Seeded normal init for W1, W2; gain 1, offset 0.
  static MlpMemory seeded(std::size_t d, std::size_t expansion, Rng& rng, double stddev = 0.02) {
    MlpMemory m(d, expansion);
    const std::size_t nw = 2 * d * d * expansion;
    for (std::size_t i = 0; i < nw; ++i) m.params_[i] = rng.normal(0.0, stddev);
    return m;
  }

  static std::size_t param_count(std::size_t d, std::size_t e) { return 2 * d * d * e + 2 * d; }

  std::size_t dim() const { return d_; }
  std::size_t expansion() const { return e_; }
  std::size_t hidden() const { return d_ * e_; }
  std::size_t input_dim() const { return d_; }
  std::size_t output_dim() const { return d_; }

  const Tensor& params() const { return params_; }
  Tensor& params() { return params_; }

  ParamLayout layout() const {
    const std::size_t h = hidden();
    return {
        ParamBlock{"w1", w1_offset(), d_, h, ChannelAxis::kRows},
        ParamBlock{"w2", w2_offset(), h, d_, ChannelAxis::kCols},
        ParamBlock{"ln_gain", gain_offset(), 1, d_, ChannelAxis::kCols},
        ParamBlock{"ln_offset", bias_offset(), 1, d_, ChannelAxis::kCols},
    };
  }

  double w1(std::size_t r, std::size_t c) const { return params_[w1_offset() + r * hidden() + c]; }
  double w2(std::size_t r, std::size_t c) const { return params_[w2_offset() + r * d_ + c]; }
  double gain(std::size_t i) const { return params_[gain_offset() + i]; }
  double ln_offset(std::size_t i) const { return params_[bias_offset() + i]; }

  void set_gain(double g) {
    for (std::size_t i = 0; i < d_; ++i) params_[gain_offset() + i] = g;
  }

  struct Activations {
    Tensor pre;    // W2 x
    Tensor hidden; // GELU(pre)
    Tensor normed; // (z - mean) / std, zero when degenerate
    double inv_std = 0.0;
    bool degenerate = false;
    Tensor output;
  };

  Activations activations(std::span<const double> x) const {
    if (x.size() != d_) {
      throw DimensionError("MlpMemory: input length " + std::to_string(x.size()) + ", expected " +
                           std::to_string(d_));
    }
    const std::size_t h = hidden();
    Activations act{Tensor(Dims{h}), Tensor(Dims{h}), Tensor(Dims{d_}), 0.0, false, Tensor(Dims{d_})};
    const double* p = params_.data().data();
    for (std::size_t r = 0; r < h; ++r) {
      double s = 0.0;
      const double* row = p + w2_offset() + r * d_;
      for (std::size_t c = 0; c < d_; ++c) s += row[c] * x[c];
      act.pre[r] = s;
      act.hidden[r] = detail::gelu(s);
    }
    Tensor z(Dims{d_});
    for (std::size_t r = 0; r < d_; ++r) {
      double s = 0.0;
      const double* row = p + w1_offset() + r * h;
      for (std::size_t c = 0; c < h; ++c) s += row[c] * act.hidden[c];
      z[r] = s;
    }
    const double mean = sum(z.data()) / static_cast<double>(d_);
    double var = 0.0;
    for (double v : z.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d_);
    act.degenerate = var < kDegenerateVariance;
    if (!act.degenerate) {
      act.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      for (std::size_t i = 0; i < d_; ++i) act.normed[i] = (z[i] - mean) * act.inv_std;
    }
    for (std::size_t i = 0; i < d_; ++i) act.output[i] = x[i] + gain(i) * act.normed[i] + ln_offset(i);
    return act;
  }

  Tensor forward(std::span<const double> x) const { return activations(x).output; }

  Tensor grad_params(std::span<const double> x, std::span<const double> upstream) const {
    if (upstream.size() != d_) throw DimensionError("MlpMemory::grad_params: upstream length mismatch");
    const Activations act = activations(x);
    Tensor g(Dims{params_.size()});
    accumulate_pullback(act, x, upstream, std::span<const double>{}, g);
    return g;
  }

  Tensor batched_forward(const Tensor& inputs) const {
    Tensor out(Dims{d_, inputs.cols()});
    for (std::size_t j = 0; j < inputs.cols(); ++j) {
      const Tensor x = column(inputs, j);
      const Tensor y = forward(x.data());
      for (std::size_t i = 0; i < d_; ++i) out(i, j) = y[i];
    }
    return out;
  }

  // sum_i scale_i ⊙ grad_params(x_i, u_i), where scale_i (length d) gates
  // each block along its channel axis. Folding the scale into the factors
  // keeps the cost at one pullback per column.
  Tensor batched_scaled_pullback(const Tensor& inputs, const Tensor& upstream, const Tensor& scales) const {
    Tensor g(Dims{params_.size()});
    for (std::size_t j = 0; j < inputs.cols(); ++j) {
      const Tensor x = column(inputs, j);
      const Tensor u = column(upstream, j);
      const Tensor s = column(scales, j);
      accumulate_pullback(activations(x.data()), x.data(), u.data(), s.data(), g);
    }
    return g;
  }

 private:
  std::size_t w1_offset() const { return 0; }
  std::size_t w2_offset() const { return d_ * hidden(); }
  std::size_t gain_offset() const { return 2 * d_ * hidden(); }
  std::size_t bias_offset() const { return 2 * d_ * hidden() + d_; }

  // g += scale ⊙ dL/dparams; an empty scale means 1.
  void accumulate_pullback(const Activations& act, std::span<const double> x, std::span<const double> u,
                           std::span<const double> scale, Tensor& g) const {
    const std::size_t h = hidden();
    auto s = [&](std::size_t i) { return scale.empty() ? 1.0 : scale[i]; };
    for (std::size_t i = 0; i < d_; ++i) {
      g[bias_offset() + i] += s(i) * u[i];
      g[gain_offset() + i] += s(i) * u[i] * act.normed[i];
    }
    if (act.degenerate) return;

    // Layer-norm backward.
    Tensor gn(Dims{d_});
    for (std::size_t i = 0; i < d_; ++i) gn[i] = u[i] * gain(i);
    const double mean_gn = sum(gn.data()) / static_cast<double>(d_);
    double mean_gn_n = 0.0;
    for (std::size_t i = 0; i < d_; ++i) mean_gn_n += gn[i] * act.normed[i];
    mean_gn_n /= static_cast<double>(d_);
    Tensor gz(Dims{d_});
    for (std::size_t i = 0; i < d_; ++i) gz[i] = (gn[i] - mean_gn - act.normed[i] * mean_gn_n) * act.inv_std;

    // W1 gradient (rows gated) and hidden pullback (unscaled).
    Tensor gh(Dims{h});
    for (std::size_t r = 0; r < d_; ++r) {
      const double coef = s(r) * gz[r];
      double* grow = g.data().data() + w1_offset() + r * h;
      for (std::size_t c = 0; c < h; ++c) {
        grow[c] += coef * act.hidden[c];
        gh[c] += w1(r, c) * gz[r];
      }
    }
    // W2 gradient (columns gated).
    for (std::size_t r = 0; r < h; ++r) {
      const double ga = gh[r] * detail::gelu_grad(act.pre[r]);
      double* grow = g.data().data() + w2_offset() + r * d_;
      for (std::size_t c = 0; c < d_; ++c) grow[c] += ga * s(c) * x[c];
    }
  }

  std::size_t d_;
  std::size_t e_;
  Tensor params_;
};

static_assert(AssociativeMemory<MatrixMemory>);
static_assert(AssociativeMemory<MlpMemory>);

// ---------------------------------------------------------------------------

using AnyMemory = std::variant<MatrixMemory, MlpMemory>;

inline Tensor forward(const AnyMemory& m, std::span<const double> k) {
  return std::visit([&](const auto& mem) { return mem.forward(k); }, m);
}

inline Tensor grad_params(const AnyMemory& m, std::span<const double> k, std::span<const double> upstream) {
  return std::visit([&](const auto& mem) { return mem.grad_params(k, upstream); }, m);
}

inline const Tensor& params(const AnyMemory& m) {
  return std::visit([](const auto& mem) -> const Tensor& { return mem.params(); }, m);
}

inline Tensor& params(AnyMemory& m) {
  return std::visit([](auto& mem) -> Tensor& { return mem.params(); }, m);
}

inline ParamLayout layout(const AnyMemory& m) {
  return std::visit([](const auto& mem) { return mem.layout(); }, m);
}

inline std::size_t input_dim(const AnyMemory& m) {
  return std::visit([](const auto& mem) { return mem.input_dim(); }, m);
}

inline std::size_t output_dim(const AnyMemory& m) {
  return std::visit([](const auto& mem) { return mem.output_dim(); }, m);
}

// Memory parameters plus learner state. `momentum` holds the GD+momentum
// buffer S; `accumulator` holds the dual variable A of the Lq and FTRL
// elastic-net gates. Both, when present, match params in shape.
struct MemoryState {
  AnyMemory memory;
  std::optional<Tensor> momentum;
  std::optional<Tensor> accumulator;

  const Tensor& params() const { return miras::params(memory); }
  Tensor& params() { return miras::params(memory); }
  ParamLayout layout() const { return miras::layout(memory); }

  Tensor flatten() const { return params().flattened(); }

  void unflatten(const Tensor& flat) {
    Tensor& p = params();
    if (flat.size() != p.size()) throw DimensionError("unflatten: size mismatch");
    std::copy(flat.data().begin(), flat.data().end(), p.data().begin());
  }

  bool all_finite() const {
    return params().all_finite() && (!momentum || momentum->all_finite()) &&
           (!accumulator || accumulator->all_finite());
  }
};

}  // namespace miras
