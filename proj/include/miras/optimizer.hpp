#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "miras/bias.hpp"
#include "miras/memory.hpp"
#include "miras/retention.hpp"
#include "miras/rng.hpp"
#include "miras/signals.hpp"

namespace miras {

enum class LearnerKind { kGD, kGDMomentum, kFtrlQuadratic };

inline const char* to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::kGD: return "gd";
    case LearnerKind::kGDMomentum: return "gd_momentum";
    case LearnerKind::kFtrlQuadratic: return "ftrl_quadratic";
  }
  return "?";
}

// kAdd: W = αW + S (gradient descent with S = η_m S - θ g).
// kSubtract: W = αW - S. With S built from -θg this ascends.
enum class MomentumSign { kAdd, kSubtract };

struct InnerLearner {
  LearnerKind kind = LearnerKind::kGD;
  double momentum_decay = 0.9;  // η_m
  MomentumSign sign = MomentumSign::kAdd;

  static InnerLearner gd() { return {}; }
  static InnerLearner momentum(double eta_m, MomentumSign sign = MomentumSign::kAdd) {
    return {LearnerKind::kGDMomentum, eta_m, sign};
  }
  static InnerLearner ftrl_quadratic() { return {LearnerKind::kFtrlQuadratic, 0.0, MomentumSign::kAdd}; }
};

// Bias gradient with the memory parameters temporarily replaced by `at`.
inline Tensor grad_at_params(const AttentionalBias& bias, const AnyMemory& mem, const Tensor& at,
                             std::span<const double> k, std::span<const double> v, const Tensor* delta) {
  AnyMemory probe = mem;
  Tensor& p = params(probe);
  at.require_same_dims(p, "grad_at_params");
  p = at;
  return grad(bias, probe, k, v, delta);
}

// Aux buffers the gate and learner need. Lq starts from A_0 = W_0 and
// normalizes; the FTRL elastic-net gate starts from A_0 = W_0.
inline void prepare_state(MemoryState& state, const RetentionGate& gate, const InnerLearner& learner) {
  if (learner.kind == LearnerKind::kGDMomentum && !state.momentum) state.momentum = Tensor(state.params().dims());
  if (gate.uses_accumulator() && !state.accumulator) {
    state.accumulator = state.params();
    if (gate.kind == GateKind::kLqDual) state.params() = lq_normalize(*state.accumulator, gate.q, gate.lq_form);
  }
}

// Apply the gate's transform given the gradient. Mutates params (and the
// accumulator where the gate has one).
inline void apply_gate(MemoryState& state, const RetentionGate& gate, const Tensor& g, const Signals& sig) {
  const ParamLayout lay = state.layout();
  Tensor& w = state.params();
  auto need_acc = [&]() -> Tensor& {
    if (!state.accumulator) throw ContractError("gate needs an accumulator; call prepare_state first");
    return *state.accumulator;
  };
  switch (gate.kind) {
    case GateKind::kDecay:
      w = step_decay(w, g, sig, lay);
      break;
    case GateKind::kLqDual: {
      auto r = step_lq(need_acc(), g, sig, lay, gate.q, gate.lq_form);
      *state.accumulator = std::move(r.accumulator);
      w = std::move(r.weights);
      break;
    }
    case GateKind::kKlSoftmax:
      w = step_kl_softmax(w, g, sig, lay, gate.c, gate.slices);
      break;
    case GateKind::kElasticLocal:
      w = step_elastic_local(w, g, sig, lay, gate.smooth_threshold);
      break;
    case GateKind::kElasticFtrl: {
      auto r = step_elastic_ftrl(need_acc(), g, sig, lay, gate.smooth_threshold);
      *state.accumulator = std::move(r.accumulator);
      w = std::move(r.weights);
      break;
    }
    case GateKind::kFDivergence:
      w = step_fdiv(w, g, sig, lay, gate.g, gate.c, gate.slices);
      break;
    case GateKind::kBregmanSigmoid:
      w = step_bregman_sigmoid(w, g, sig, lay);
      break;
  }
}

// Point at which the gradient is taken when the caller does not pin one.
inline Tensor default_grad_point(const MemoryState& state, const RetentionGate& gate, const Signals& sig) {
  if (gate.kind == GateKind::kDecay && gate.gradient_point == GradientPoint::kRetained) {
    const Tensor& w = state.params();
    const Tensor a = broadcast_signal(sig.alpha, state.layout(), w.dims());
    Tensor out(w.dims());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = a[i] * w[i];
    return out;
  }
  return state.params();
}

inline void require_finite(const MemoryState& state, const char* what) {
  if (!state.all_finite()) throw NumericalError(std::string(what) + ": state became non-finite");
}

// One inner-loop GD step: g = ∇ℓ(W; k, v), then the gate. `grad_at` pins the
// parameters the gradient is evaluated at (the chunked oracle uses the
// chunk-start state).
inline void gd_step(MemoryState& state, const AttentionalBias& bias, const RetentionGate& gate,
                    std::span<const double> k, std::span<const double> v, const Signals& sig,
                    const Tensor* grad_at = nullptr) {
  const Tensor* delta = sig.delta ? &*sig.delta : nullptr;
  const Tensor g = grad_at ? grad_at_params(bias, state.memory, *grad_at, k, v, delta)
                           : grad_at_params(bias, state.memory, default_grad_point(state, gate, sig), k, v, delta);
  apply_gate(state, gate, g, sig);
  require_finite(state, "gd_step");
}

// S = η_m S - θ ⊙ g;  W = α ⊙ W ± S. Only the decay gate composes with
// momentum. θ is scalar or channel-wise like η.
inline void momentum_step(MemoryState& state, const AttentionalBias& bias, const RetentionGate& gate,
                          std::span<const double> k, std::span<const double> v, const Signals& sig,
                          const Tensor& theta, double eta_m, MomentumSign sign = MomentumSign::kAdd,
                          const Tensor* grad_at = nullptr) {
  if (gate.kind != GateKind::kDecay) throw ContractError("momentum learner requires the decay gate");
  if (!state.momentum) state.momentum = Tensor(state.params().dims());
  const Tensor* delta = sig.delta ? &*sig.delta : nullptr;
  const Tensor g = grad_at ? grad_at_params(bias, state.memory, *grad_at, k, v, delta)
                           : grad_at_params(bias, state.memory, default_grad_point(state, gate, sig), k, v, delta);
  const ParamLayout lay = state.layout();
  Tensor& w = state.params();
  Tensor& s = *state.momentum;
  const Tensor th = broadcast_signal(theta, lay, w.dims());
  const Tensor a = broadcast_signal(sig.alpha, lay, w.dims());
  for (std::size_t i = 0; i < w.size(); ++i) {
    s[i] = eta_m * s[i] - th[i] * g[i];
    w[i] = sign == MomentumSign::kAdd ? a[i] * w[i] + s[i] : a[i] * w[i] - s[i];
  }
  require_finite(state, "momentum_step");
}

// argmin_W sum_i <W - W_{i-1}, g_i> + ||W||^2 / (2η) with W_0 = 0, i.e.
// -η sum_i g_i. Accumulated term by term in stream order.
inline Tensor ftrl_quadratic_solve(std::span<const Tensor> grads, double eta, const Dims& empty_dims = {}) {
  if (grads.empty()) return Tensor(empty_dims);
  Tensor w(grads.front().dims());
  for (const Tensor& g : grads) {
    w.require_same_dims(g, "ftrl_quadratic_solve");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i] - eta * g[i];
  }
  return w;
}

// Linearized losses <W - W_{i-1}, g_i> with seeded g_i and R = ||W||^2 / 2.
// One sequence solves the regularized-leader problem over every prefix; the
// other minimizes <W, g_t> + D_{h_t}(W, W_{t-1}) with
// h_t(W) = sum_{i<t} <W, g_i> + R(W) / η, by a Newton step (the objective is
// quadratic with Hessian I / η). Returns the largest entrywise gap.
inline double verify_proposition1(std::uint64_t seed, std::size_t steps, std::size_t d = 8, double eta = 0.1) {
  if (steps == 0) throw ContractError("verify_proposition1 requires T >= 1");
  Rng rng(seed, 0x9a0f);
  std::vector<Tensor> grads;
  for (std::size_t t = 0; t < steps; ++t) grads.push_back(rng.normal_tensor(Dims{d, d}));
  if (eta == 0.0) return 0.0;

  Tensor running_sum(Dims{d, d});  // sum_{i<t} g_i
  auto grad_h = [&](const Tensor& w) {
    Tensor out(w.dims());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = running_sum[i] + w[i] / eta;
    return out;
  };

  Tensor w_lr(Dims{d, d});
  double worst = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor w_ftrl = ftrl_quadratic_solve(std::span<const Tensor>(grads.data(), t + 1), eta);

    // One Newton step from W = 0 lands on the minimizer exactly.
    const Tensor zero(w_lr.dims());
    const Tensor gh0 = grad_h(zero);
    const Tensor gh_prev = grad_h(w_lr);
    Tensor next(w_lr.dims());
    for (std::size_t i = 0; i < w_lr.size(); ++i) next[i] = -eta * (grads[t][i] + gh0[i] - gh_prev[i]);
    w_lr = std::move(next);

    worst = std::max(worst, max_abs_diff(w_ftrl, w_lr));
    running_sum += grads[t];
  }
  return worst;
}

}  // namespace miras
