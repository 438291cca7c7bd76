#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "miras/memory.hpp"
#include "miras/smooth.hpp"
#include "miras/tensor.hpp"

namespace miras {

enum class BiasKind { kDotProduct, kL2, kLp, kHuberCoord, kHuberNorm, kHuberMixture, kRobustShift, kL1 };

inline const char* to_string(BiasKind k) {
  switch (k) {
    case BiasKind::kDotProduct: return "dot_product";
    case BiasKind::kL2: return "l2";
    case BiasKind::kLp: return "lp";
    case BiasKind::kHuberCoord: return "huber_coord";
    case BiasKind::kHuberNorm: return "huber_norm";
    case BiasKind::kHuberMixture: return "huber_mixture";
    case BiasKind::kRobustShift: return "robust_shift";
    case BiasKind::kL1: return "l1";
  }
  return "?";
}

// Attentional bias: the per-pair objective the memory minimizes, written in
// terms of the residual r = M(k) - v.
//
//   DotProduct     -2 <M(k), v>
//   L2             1/2 ||r||^2
//   Lp             sum |r_i|^p
//   L1             sum |r_i|
//   HuberCoord     sum_i H_δ(r_i)
//   HuberNorm      H_δ(||r||_2)
//   HuberMixture   1/2 ||r||^2 if ||r||_2 <= δ, else δ sum |r_i|
//   RobustShift    1/2 ||r||^2 + Δ ||r||_2 + Δ^2 / 2
//
// with H_δ(a) = a^2/2 for |a| <= δ and δ(|a| - δ/2) otherwise. The branch
// tests are inclusive on the quadratic side.
//
// When `smooth` is set, sign(x) and |x| are replaced by tanh(α_s x) and
// sqrt(x^2 + ε) in both loss and gradient. The smoothed gradient is a
// surrogate: it is not the exact derivative of the smoothed loss.
struct AttentionalBias {
  BiasKind kind = BiasKind::kL2;
  double p = 2.0;
  // Huber δ or robust radius Δ; a per-step Signals::delta overrides it.
  double threshold = 1.0;
  std::optional<SmoothCfg> smooth;

  static AttentionalBias dot_product() { return {BiasKind::kDotProduct, 2.0, 0.0, std::nullopt}; }
  static AttentionalBias l2() { return {BiasKind::kL2, 2.0, 0.0, std::nullopt}; }
  static AttentionalBias lp(double p, std::optional<SmoothCfg> smooth = std::nullopt) {
    return {BiasKind::kLp, p, 0.0, smooth};
  }
  static AttentionalBias l1(std::optional<SmoothCfg> smooth = std::nullopt) {
    return {BiasKind::kL1, 1.0, 0.0, smooth};
  }
  static AttentionalBias huber_coord(double delta = 1.0, std::optional<SmoothCfg> smooth = std::nullopt) {
    return {BiasKind::kHuberCoord, 2.0, delta, smooth};
  }
  static AttentionalBias huber_norm(double delta = 1.0) { return {BiasKind::kHuberNorm, 2.0, delta, std::nullopt}; }
  static AttentionalBias huber_mixture(double delta = 1.0, std::optional<SmoothCfg> smooth = std::nullopt) {
    return {BiasKind::kHuberMixture, 2.0, delta, smooth};
  }
  static AttentionalBias robust_shift(double radius = 0.1) {
    return {BiasKind::kRobustShift, 2.0, radius, std::nullopt};
  }

  double exponent() const { return kind == BiasKind::kL1 ? 1.0 : p; }

  void validate() const {
    if (kind == BiasKind::kLp && !(p >= 1.0)) throw ContractError("Lp bias requires p >= 1");
    if ((kind == BiasKind::kHuberCoord || kind == BiasKind::kHuberNorm || kind == BiasKind::kHuberMixture) &&
        !(threshold > 0.0)) {
      throw ContractError("Huber bias requires delta > 0");
    }
    if (kind == BiasKind::kRobustShift && !(threshold >= 0.0)) throw ContractError("robust shift requires radius >= 0");
    if (smooth) smooth->validate();
  }

  double sign(double x) const { return smooth ? smooth_sign(x, *smooth) : exact_sign(x); }
  double abs(double x) const { return smooth ? smooth_abs(x, *smooth) : std::abs(x); }

  // Threshold for coordinate i, honoring a scalar or per-coordinate override.
  double threshold_at(const Tensor* override, std::size_t i) const {
    if (!override) return threshold;
    return override->size() == 1 ? (*override)[0] : (*override)[i];
  }

  // Norm-based kinds reduce a per-coordinate override to its mean.
  double scalar_threshold(const Tensor* override) const {
    if (!override) return threshold;
    return sum(override->data()) / static_cast<double>(override->size());
  }

  double loss_from_prediction(std::span<const double> pred, std::span<const double> v,
                              const Tensor* delta = nullptr) const {
    if (pred.size() != v.size()) throw DimensionError("bias: prediction/value length mismatch");
    const std::size_t n = v.size();
    if (kind == BiasKind::kDotProduct) return -2.0 * dot(pred, v);
    Tensor r(Dims{n});
    for (std::size_t i = 0; i < n; ++i) r[i] = pred[i] - v[i];
    const double rn = norm2(r.data());
    switch (kind) {
      case BiasKind::kL2: return 0.5 * rn * rn;
      case BiasKind::kLp:
      case BiasKind::kL1: {
        double s = 0.0;
        for (double x : r.data()) s += std::pow(abs(x), exponent());
        return s;
      }
      case BiasKind::kHuberCoord: {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = threshold_at(delta, i);
          s += std::abs(r[i]) <= d ? 0.5 * r[i] * r[i] : d * (abs(r[i]) - 0.5 * d);
        }
        return s;
      }
      case BiasKind::kHuberNorm: {
        const double d = scalar_threshold(delta);
        return rn <= d ? 0.5 * rn * rn : d * (rn - 0.5 * d);
      }
      case BiasKind::kHuberMixture: {
        if (rn <= scalar_threshold(delta)) return 0.5 * rn * rn;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += threshold_at(delta, i) * abs(r[i]);
        return s;
      }
      case BiasKind::kRobustShift: {
        const double radius = scalar_threshold(delta);
        return 0.5 * rn * rn + radius * rn + 0.5 * radius * radius;
      }
      case BiasKind::kDotProduct: break;
    }
    return 0.0;
  }

  // d loss / d prediction (smoothed surrogate when `smooth` is set).
  Tensor upstream(std::span<const double> pred, std::span<const double> v, const Tensor* delta = nullptr) const {
    if (pred.size() != v.size()) throw DimensionError("bias: prediction/value length mismatch");
    const std::size_t n = v.size();
    Tensor u(Dims{n});
    if (kind == BiasKind::kDotProduct) {
      for (std::size_t i = 0; i < n; ++i) u[i] = -2.0 * v[i];
      return u;
    }
    Tensor r(Dims{n});
    for (std::size_t i = 0; i < n; ++i) r[i] = pred[i] - v[i];
    const double rn = norm2(r.data());
    switch (kind) {
      case BiasKind::kL2: return r;
      case BiasKind::kLp:
      case BiasKind::kL1: {
        const double q = exponent();
        for (std::size_t i = 0; i < n; ++i) u[i] = q * sign(r[i]) * std::pow(abs(r[i]), q - 1.0);
        return u;
      }
      case BiasKind::kHuberCoord:
        for (std::size_t i = 0; i < n; ++i) {
          const double d = threshold_at(delta, i);
          u[i] = std::abs(r[i]) <= d ? r[i] : d * sign(r[i]);
        }
        return u;
      case BiasKind::kHuberNorm: {
        const double d = scalar_threshold(delta);
        if (rn <= d) return r;
        return r * (d / rn);
      }
      case BiasKind::kHuberMixture:
        if (rn <= scalar_threshold(delta)) return r;
        for (std::size_t i = 0; i < n; ++i) u[i] = threshold_at(delta, i) * sign(r[i]);
        return u;
      case BiasKind::kRobustShift: {
        const double radius = scalar_threshold(delta);
        if (rn == 0.0) return r;
        return r * (1.0 + radius / rn);
      }
      case BiasKind::kDotProduct: break;
    }
    return u;
  }

  // Column-wise upstream for a batch of predictions/values (n x b).
  Tensor batched_upstream(const Tensor& preds, const Tensor& values, std::span<const Tensor> deltas = {}) const {
    Tensor out(Dims{preds.rows(), preds.cols()});
    for (std::size_t j = 0; j < preds.cols(); ++j) {
      const Tensor p = column(preds, j);
      const Tensor v = column(values, j);
      const Tensor u = upstream(p.data(), v.data(), deltas.empty() ? nullptr : &deltas[j]);
      for (std::size_t i = 0; i < u.size(); ++i) out(i, j) = u[i];
    }
    return out;
  }
};

template <AssociativeMemory M>
double loss(const AttentionalBias& bias, const M& mem, std::span<const double> k, std::span<const double> v,
            const Tensor* delta = nullptr) {
  const Tensor pred = mem.forward(k);
  if (v.size() != pred.size()) throw DimensionError("loss: value length mismatch");
  return bias.loss_from_prediction(pred.data(), v, delta);
}

template <AssociativeMemory M>
Tensor grad(const AttentionalBias& bias, const M& mem, std::span<const double> k, std::span<const double> v,
            const Tensor* delta = nullptr) {
  const Tensor pred = mem.forward(k);
  if (v.size() != pred.size()) throw DimensionError("grad: value length mismatch");
  return mem.grad_params(k, bias.upstream(pred.data(), v, delta).data());
}

inline double loss(const AttentionalBias& bias, const AnyMemory& mem, std::span<const double> k,
                   std::span<const double> v, const Tensor* delta = nullptr) {
  return std::visit([&](const auto& m) { return loss(bias, m, k, v, delta); }, mem);
}

inline Tensor grad(const AttentionalBias& bias, const AnyMemory& mem, std::span<const double> k,
                   std::span<const double> v, const Tensor* delta = nullptr) {
  return std::visit([&](const auto& m) { return grad(bias, m, k, v, delta); }, mem);
}

}  // namespace miras
