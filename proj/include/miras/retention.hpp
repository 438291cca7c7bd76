#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "miras/memory.hpp"
#include "miras/signals.hpp"
#include "miras/smooth.hpp"
#include "miras/tensor.hpp"

namespace miras {

enum class GateKind { kDecay, kLqDual, kKlSoftmax, kElasticLocal, kElasticFtrl, kFDivergence, kBregmanSigmoid };

inline const char* to_string(GateKind k) {
  switch (k) {
    case GateKind::kDecay: return "decay";
    case GateKind::kLqDual: return "lq";
    case GateKind::kKlSoftmax: return "kl_softmax";
    case GateKind::kElasticLocal: return "elastic_local";
    case GateKind::kElasticFtrl: return "elastic_ftrl";
    case GateKind::kFDivergence: return "f_divergence";
    case GateKind::kBregmanSigmoid: return "bregman_sigmoid";
  }
  return "?";
}

// Normalization slices for the simplex gates: the whole parameter vector, or
// every row of every parameter block independently.
enum class SlicePolicy { kWholeTensor, kPerRow };

// Lq normalization exponent: W = A / ||A||_q^(q-2) (primal), or the
// conjugate form W = A / ||A||_p^(p-2) with p = q / (q - 1).
enum class LqForm { kPrimal, kDual };

// Where the decay gate evaluates the gradient: at W_{t-1}, or at the retained
// point α ⊙ W_{t-1} (the form the gated delta rules use).
enum class GradientPoint { kPrevious, kRetained };

inline constexpr double kLogFloor = 1e-12;   // clamp before log / logit
inline constexpr double kNormFloor = 1e-12;  // Lq normalization guard

// Continuous strictly increasing map used by the f-divergence gate; g is the
// inverse of f'.
struct MonotoneMap {
  std::string name;
  std::function<double(double)> fn;

  static MonotoneMap exp() { return {"exp", [](double x) { return std::exp(x); }}; }
  static MonotoneMap softplus() {
    return {"softplus", [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }};
  }
  static MonotoneMap by_name(const std::string& name) {
    if (name == "exp") return exp();
    if (name == "softplus") return softplus();
    throw ContractError("unknown monotone map '" + name + "'");
  }
};

struct RetentionGate {
  GateKind kind = GateKind::kDecay;
  double q = 4.0;                           // Lq
  double c = 1.0;                           // simplex scale
  SlicePolicy slices = SlicePolicy::kPerRow;
  LqForm lq_form = LqForm::kPrimal;
  bool smooth_threshold = false;            // elastic-net gates
  MonotoneMap g = MonotoneMap::exp();       // f-divergence
  GradientPoint gradient_point = GradientPoint::kPrevious;

  static RetentionGate decay(GradientPoint at = GradientPoint::kPrevious) {
    RetentionGate gate;
    gate.gradient_point = at;
    return gate;
  }
  static RetentionGate lq(double q, LqForm form = LqForm::kPrimal) {
    RetentionGate gate;
    gate.kind = GateKind::kLqDual;
    gate.q = q;
    gate.lq_form = form;
    return gate;
  }
  static RetentionGate kl_softmax(double c = 1.0, SlicePolicy slices = SlicePolicy::kPerRow) {
    RetentionGate gate;
    gate.kind = GateKind::kKlSoftmax;
    gate.c = c;
    gate.slices = slices;
    return gate;
  }
  static RetentionGate elastic_local(bool smooth = false) {
    RetentionGate gate;
    gate.kind = GateKind::kElasticLocal;
    gate.smooth_threshold = smooth;
    return gate;
  }
  static RetentionGate elastic_ftrl(bool smooth = false) {
    RetentionGate gate;
    gate.kind = GateKind::kElasticFtrl;
    gate.smooth_threshold = smooth;
    return gate;
  }
  static RetentionGate f_divergence(MonotoneMap g = MonotoneMap::exp(), double c = 1.0,
                                    SlicePolicy slices = SlicePolicy::kPerRow) {
    RetentionGate gate;
    gate.kind = GateKind::kFDivergence;
    gate.g = std::move(g);
    gate.c = c;
    gate.slices = slices;
    return gate;
  }
  static RetentionGate bregman_sigmoid() {
    RetentionGate gate;
    gate.kind = GateKind::kBregmanSigmoid;
    return gate;
  }

  bool uses_accumulator() const { return kind == GateKind::kLqDual || kind == GateKind::kElasticFtrl; }
  bool on_simplex() const { return kind == GateKind::kKlSoftmax || kind == GateKind::kFDivergence; }

  void validate() const {
    if (kind == GateKind::kLqDual && !(q > 1.0)) throw ContractError("Lq gate requires q > 1");
    if (on_simplex() && !(c > 0.0)) throw ContractError("simplex gate requires c > 0");
    if (kind == GateKind::kFDivergence && !g.fn) throw ContractError("f-divergence gate needs a map g");
  }
};

// (offset, length) ranges normalized independently under `policy`.
inline std::vector<std::pair<std::size_t, std::size_t>> slice_ranges(const ParamLayout& layout, SlicePolicy policy) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (policy == SlicePolicy::kWholeTensor) {
    out.emplace_back(0, layout_size(layout));
    return out;
  }
  for (const auto& b : layout)
    for (std::size_t r = 0; r < b.rows; ++r) out.emplace_back(b.offset + r * b.cols, b.cols);
  return out;
}

inline double soft_threshold(double z, double gamma) {
  return exact_sign(z) * std::max(0.0, std::abs(z) - gamma);
}

// |z| atan(z / γ) / (π / 2); tends to z as γ -> 0.
inline double smooth_soft_threshold(double z, double gamma) {
  if (gamma == 0.0) return z;
  if (std::isinf(gamma)) return 0.0;
  return std::abs(z) * std::atan(z / gamma) / (0.5 * std::numbers::pi);
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

inline void require_same(const Tensor& a, const Tensor& b, const char* what) { a.require_same_dims(b, what); }

}  // namespace detail

// W_t = α ⊙ W_{t-1} - η ⊙ grad.
inline Tensor step_decay(const Tensor& w_prev, const Tensor& grad, const Signals& sig, const ParamLayout& layout) {
  detail::require_same(w_prev, grad, "step_decay");
  const Tensor a = broadcast_signal(sig.alpha, layout, w_prev.dims());
  const Tensor e = broadcast_signal(sig.eta, layout, w_prev.dims());
  Tensor out(w_prev.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * w_prev[i] - e[i] * grad[i];
  return out;
}

inline Tensor step_decay(const Tensor& w_prev, const Tensor& grad, const Signals& sig) {
  return step_decay(w_prev, grad, sig, default_layout(w_prev));
}

struct AccumulatorStep {
  Tensor accumulator;
  Tensor weights;
};

// W = A / max(||A||_r, floor)^(r - 2) with r = q (primal) or q / (q - 1).
inline Tensor lq_normalize(const Tensor& a, double q, LqForm form = LqForm::kPrimal) {
  const double r = form == LqForm::kPrimal ? q : q / (q - 1.0);
  const double nrm = std::max(norm_p(a.data(), r), kNormFloor);
  const double scale = std::pow(nrm, r - 2.0);
  Tensor w = a;
  for (double& x : w.data()) x /= scale;
  return w;
}

// A_t = α ⊙ A_{t-1} - η ⊙ grad; W_t = A_t / ||A_t||_q^(q-2).
inline AccumulatorStep step_lq(const Tensor& a_prev, const Tensor& grad, const Signals& sig, const ParamLayout& layout,
                               double q, LqForm form = LqForm::kPrimal) {
  if (!(q > 1.0)) throw ContractError("step_lq requires q > 1");
  Tensor a = step_decay(a_prev, grad, sig, layout);
  Tensor w = lq_normalize(a, q, form);
  return {std::move(a), std::move(w)};
}

inline AccumulatorStep step_lq(const Tensor& a_prev, const Tensor& grad, const Signals& sig, double q,
                               LqForm form = LqForm::kPrimal) {
  return step_lq(a_prev, grad, sig, default_layout(a_prev), q, form);
}

namespace detail {

inline void require_nonnegative(const Tensor& w, const char* what) {
  for (double x : w.data()) {
    if (!(x >= 0.0)) throw ContractError(std::string(what) + ": state has negative or NaN entries (off the simplex)");
  }
}

// c * softmax(α log(max(W, floor)) - η grad) per slice. Negative entries
// are clamped to the floor rather than rejected.
inline Tensor kl_softmax_unchecked(const Tensor& w_prev, const Tensor& grad, const Signals& sig,
                                   const ParamLayout& layout, double c, SlicePolicy policy) {
  const Tensor a = broadcast_signal(sig.alpha, layout, w_prev.dims());
  const Tensor e = broadcast_signal(sig.eta, layout, w_prev.dims());
  Tensor logits(w_prev.dims());
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits[i] = a[i] * std::log(std::max(w_prev[i], kLogFloor)) - e[i] * grad[i];
  Tensor out(w_prev.dims());
  for (const auto& [off, len] : slice_ranges(layout, policy)) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = off; i < off + len; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (std::size_t i = off; i < off + len; ++i) {
      out[i] = std::exp(logits[i] - mx);
      z += out[i];
    }
    for (std::size_t i = off; i < off + len; ++i) out[i] = c * out[i] / z;
  }
  return out;
}

}  // namespace detail

// W_t = c softmax((1 - λ) log W_{t-1} - η' grad) per slice, with the retention
// signal α playing the role of 1 - λ and η the role of η'.
inline Tensor step_kl_softmax(const Tensor& w_prev, const Tensor& grad, const Signals& sig, const ParamLayout& layout,
                              double c = 1.0, SlicePolicy policy = SlicePolicy::kPerRow) {
  detail::require_same(w_prev, grad, "step_kl_softmax");
  detail::require_nonnegative(w_prev, "step_kl_softmax");
  return detail::kl_softmax_unchecked(w_prev, grad, sig, layout, c, policy);
}

inline Tensor step_kl_softmax(const Tensor& w_prev, const Tensor& grad, const Signals& sig, double c = 1.0,
                              SlicePolicy policy = SlicePolicy::kPerRow) {
  return step_kl_softmax(w_prev, grad, sig, default_layout(w_prev), c, policy);
}

// W_t = S_γ(α ⊙ W_{t-1} - η ⊙ grad), γ = sig.gamma.
inline Tensor step_elastic_local(const Tensor& w_prev, const Tensor& grad, const Signals& sig,
                                 const ParamLayout& layout, bool smooth = false) {
  Tensor z = step_decay(w_prev, grad, sig, layout);
  for (double& x : z.data()) x = smooth ? smooth_soft_threshold(x, sig.gamma) : soft_threshold(x, sig.gamma);
  return z;
}

inline Tensor step_elastic_local(const Tensor& w_prev, const Tensor& grad, const Signals& sig, bool smooth = false) {
  return step_elastic_local(w_prev, grad, sig, default_layout(w_prev), smooth);
}

// A_t = A_{t-1} - η ⊙ grad; W_t = S_{η/α}(A_t). α = 0 forgets everything.
inline AccumulatorStep step_elastic_ftrl(const Tensor& a_prev, const Tensor& grad, const Signals& sig,
                                         const ParamLayout& layout, bool smooth = false) {
  detail::require_same(a_prev, grad, "step_elastic_ftrl");
  const Tensor al = broadcast_signal(sig.alpha, layout, a_prev.dims());
  const Tensor e = broadcast_signal(sig.eta, layout, a_prev.dims());
  AccumulatorStep out{Tensor(a_prev.dims()), Tensor(a_prev.dims())};
  for (std::size_t i = 0; i < a_prev.size(); ++i) {
    out.accumulator[i] = a_prev[i] - e[i] * grad[i];
    const double gamma = al[i] == 0.0 ? std::numeric_limits<double>::infinity() : e[i] / al[i];
    out.weights[i] = smooth ? smooth_soft_threshold(out.accumulator[i], gamma)
                            : soft_threshold(out.accumulator[i], gamma);
  }
  return out;
}

inline AccumulatorStep step_elastic_ftrl(const Tensor& a_prev, const Tensor& grad, const Signals& sig,
                                         bool smooth = false) {
  return step_elastic_ftrl(a_prev, grad, sig, default_layout(a_prev), smooth);
}

struct BisectionOptions {
  double tolerance = 1e-10;
  int max_doublings = 200;
  int max_iterations = 200;
};

// W_t = W_{t-1} ⊙ g(-ζ - η ⊙ grad), with the scalar ζ of each slice found by
// bisection so the slice sums to c.
inline Tensor step_fdiv(const Tensor& w_prev, const Tensor& grad, const Signals& sig, const ParamLayout& layout,
                        const MonotoneMap& g, double c = 1.0, SlicePolicy policy = SlicePolicy::kPerRow,
                        const BisectionOptions& opt = {}) {
  detail::require_same(w_prev, grad, "step_fdiv");
  for (double x : w_prev.data()) {
    if (!(x > 0.0)) throw ContractError("step_fdiv: state entries must be positive");
  }
  const Tensor e = broadcast_signal(sig.eta, layout, w_prev.dims());
  Tensor out(w_prev.dims());
  for (const auto& [off, len] : slice_ranges(layout, policy)) {
    auto residual = [&](double zeta) {
      double s = 0.0;
      for (std::size_t i = off; i < off + len; ++i) s += w_prev[i] * g.fn(-zeta - e[i] * grad[i]);
      return s - c;
    };
    // residual is non-increasing in ζ.
    double lo = -1.0, hi = 1.0;
    double f_lo = residual(lo), f_hi = residual(hi);
    int doublings = 0;
    while (!(f_lo >= 0.0 && f_hi <= 0.0)) {
      if (++doublings > opt.max_doublings) {
        throw NumericalError("step_fdiv: bracket expansion failed after " + std::to_string(opt.max_doublings) +
                             " doublings");
      }
      if (!(f_lo >= 0.0)) {
        lo *= 2.0;
        f_lo = residual(lo);
      }
      if (!(f_hi <= 0.0)) {
        hi *= 2.0;
        f_hi = residual(hi);
      }
    }
    double zeta = 0.5 * (lo + hi);
    double f = residual(zeta);
    for (int it = 0; it < opt.max_iterations && f != 0.0; ++it) {
      if (f > 0.0) {
        lo = zeta;
      } else {
        hi = zeta;
      }
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      zeta = mid;
      f = residual(zeta);
    }
    if (!(std::abs(f) <= opt.tolerance * std::max(1.0, c))) {
      throw NumericalError("step_fdiv: normalization residual " + std::to_string(f) + " above tolerance");
    }
    for (std::size_t i = off; i < off + len; ++i) out[i] = w_prev[i] * g.fn(-zeta - e[i] * grad[i]);
  }
  return out;
}

inline Tensor step_fdiv(const Tensor& w_prev, const Tensor& grad, const Signals& sig, const MonotoneMap& g,
                        double c = 1.0, SlicePolicy policy = SlicePolicy::kPerRow) {
  return step_fdiv(w_prev, grad, sig, default_layout(w_prev), g, c, policy);
}

// W_t = σ(logit(W_{t-1}) - η ⊙ grad); entries stay in [floor, 1 - floor].
inline Tensor step_bregman_sigmoid(const Tensor& w_prev, const Tensor& grad, const Signals& sig,
                                   const ParamLayout& layout) {
  detail::require_same(w_prev, grad, "step_bregman_sigmoid");
  const Tensor e = broadcast_signal(sig.eta, layout, w_prev.dims());
  Tensor out(w_prev.dims());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = w_prev[i];
    if (!(w >= 0.0 && w <= 1.0)) throw ContractError("step_bregman_sigmoid: state entries must lie in [0, 1]");
    const double wc = std::clamp(w, kLogFloor, 1.0 - kLogFloor);
    const double logit = std::log(wc) - std::log1p(-wc);
    out[i] = std::clamp(stable_sigmoid(logit - e[i] * grad[i]), kLogFloor, 1.0 - kLogFloor);
  }
  return out;
}

inline Tensor step_bregman_sigmoid(const Tensor& w_prev, const Tensor& grad, const Signals& sig) {
  return step_bregman_sigmoid(w_prev, grad, sig, default_layout(w_prev));
}

// Initial state that satisfies the gate's domain: uniform c/N per slice for
// the simplex gates, 1/2 for the sigmoid gate. Other gates keep `params`.
inline void place_in_domain(Tensor& params, const ParamLayout& layout, const RetentionGate& gate) {
  if (gate.on_simplex()) {
    for (const auto& [off, len] : slice_ranges(layout, gate.slices))
      for (std::size_t i = off; i < off + len; ++i) params[i] = gate.c / static_cast<double>(len);
  } else if (gate.kind == GateKind::kBregmanSigmoid) {
    params.fill(0.5);
  }
}

}  // namespace miras
