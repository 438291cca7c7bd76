#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "miras/bias.hpp"
#include "miras/memory.hpp"
#include "miras/optimizer.hpp"
#include "miras/retention.hpp"
#include "miras/rng.hpp"
#include "miras/signals.hpp"

namespace miras {

enum class MemoryKind { kMatrix, kMlp };

inline const char* to_string(MemoryKind k) { return k == MemoryKind::kMatrix ? "matrix" : "mlp"; }

struct MemoryConfig {
  MemoryKind kind = MemoryKind::kMatrix;
  std::size_t d_k = 0;  // 0: take the task's dimension
  std::size_t d_v = 0;
  std::size_t expansion = 4;
  double init_std = 0.02;
};

inline double sigmoid(double x) { return stable_sigmoid(x); }
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Constant per-step signals used when no layer drives them. The defaults come
// from fixed pre-activation scalars: α = σ(3), η = softplus(-1).
struct SignalConfig {
  double alpha = sigmoid(3.0);
  double eta = softplus(-1.0);
  std::optional<double> delta;
  double gamma = 0.0;

  Signals to_signals() const {
    Signals s = Signals::constant(alpha, eta);
    if (delta) s.delta = Tensor::scalar(*delta);
    s.gamma = gamma;
    return s;
  }
};

struct MirasSpec {
  std::string name = "custom";
  MemoryConfig memory;
  AttentionalBias bias = AttentionalBias::l2();
  RetentionGate gate = RetentionGate::decay();
  InnerLearner learner = InnerLearner::gd();
  SignalConfig signals;
  std::size_t chunk_size = 16;

  // ℓp attentional bias with Lq retention on the accumulator.
  static MirasSpec moneta(double p = 3.0, double q = 4.0) {
    MirasSpec s;
    s.name = "moneta";
    s.bias = AttentionalBias::lp(p);
    s.gate = RetentionGate::lq(q);
    return s;
  }
  // Huber mixture (ℓ2 inside δ, δ·ℓ1 outside) with decay.
  static MirasSpec yaad(double delta = 1.0) {
    MirasSpec s;
    s.name = "yaad";
    s.bias = AttentionalBias::huber_mixture(delta);
    s.gate = RetentionGate::decay();
    s.signals.delta = delta;
    return s;
  }
  // ℓ2 with the KL (softmax) gate on the simplex.
  static MirasSpec memora(double c = 1.0) {
    MirasSpec s;
    s.name = "memora";
    s.bias = AttentionalBias::l2();
    s.gate = RetentionGate::kl_softmax(c);
    return s;
  }
  static MirasSpec l2_decay() {
    MirasSpec s;
    s.name = "l2_decay";
    return s;
  }
  static MirasSpec delta_rule(double eta = 1.0) {
    MirasSpec s;
    s.name = "delta_rule";
    s.signals.alpha = 1.0;
    s.signals.eta = eta;
    return s;
  }
  static MirasSpec hebbian() {
    MirasSpec s;
    s.name = "hebbian";
    s.bias = AttentionalBias::dot_product();
    s.signals.alpha = 1.0;
    s.signals.eta = 0.5;
    return s;
  }
  static MirasSpec dot_decay() {
    MirasSpec s;
    s.name = "dot_decay";
    s.bias = AttentionalBias::dot_product();
    s.signals.eta = 0.5;
    return s;
  }

  void validate() const {
    bias.validate();
    gate.validate();
    signals.to_signals().validate();
    if (chunk_size == 0) throw ContractError("chunk_size must be >= 1");
    if (memory.kind == MemoryKind::kMlp && memory.d_k != memory.d_v)
      throw DimensionError("MLP memory needs d_k == d_v");
    if (memory.kind == MemoryKind::kMlp && memory.expansion == 0) throw DimensionError("MLP expansion must be >= 1");
    if (learner.kind == LearnerKind::kGDMomentum && gate.kind != GateKind::kDecay)
      throw ContractError("momentum learner requires the decay gate");
    if (learner.kind == LearnerKind::kFtrlQuadratic && gate.kind != GateKind::kDecay)
      throw ContractError("ftrl_quadratic learner requires the decay gate");
  }
};

// Key/value pairs with per-step signals.
struct Stream {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::vector<Signals> signals;

  std::size_t size() const { return keys.size(); }
};

// One assembled memory chain: step(k, v, signals) and query(q).
class MirasModel {
 public:
  MirasModel(MirasSpec spec, std::size_t d_k, std::size_t d_v, std::uint64_t seed) : spec_(std::move(spec)) {
    if (spec_.memory.d_k == 0) spec_.memory.d_k = d_k;
    if (spec_.memory.d_v == 0) spec_.memory.d_v = d_v;
    spec_.validate();
    Rng rng(seed, 0x3e3);
    if (spec_.memory.kind == MemoryKind::kMatrix) {
      state_.memory = MatrixMemory(spec_.memory.d_v, spec_.memory.d_k);
    } else {
      state_.memory = MlpMemory::seeded(spec_.memory.d_k, spec_.memory.expansion, rng, spec_.memory.init_std);
    }
    place_in_domain(state_.params(), state_.layout(), spec_.gate);
    prepare_state(state_, spec_.gate, spec_.learner);
  }

  MirasModel(MirasSpec spec, std::size_t d, std::uint64_t seed) : MirasModel(std::move(spec), d, d, seed) {}

  const MirasSpec& spec() const { return spec_; }
  const MemoryState& state() const { return state_; }
  MemoryState& state() { return state_; }

  Signals default_signals() const { return spec_.signals.to_signals(); }

  void step(std::span<const double> k, std::span<const double> v, const Signals& sig,
            const Tensor* grad_at = nullptr) {
    switch (spec_.learner.kind) {
      case LearnerKind::kGD:
        gd_step(state_, spec_.bias, spec_.gate, k, v, sig, grad_at);
        break;
      case LearnerKind::kGDMomentum:
        momentum_step(state_, spec_.bias, spec_.gate, k, v, sig, sig.eta, spec_.learner.momentum_decay,
                      spec_.learner.sign, grad_at);
        break;
      case LearnerKind::kFtrlQuadratic: {
        // The regularized-leader solution over linearized losses is the
        // undamped GD recurrence.
        Signals undamped = sig;
        undamped.alpha = Tensor::scalar(1.0);
        gd_step(state_, spec_.bias, spec_.gate, k, v, undamped, grad_at);
        break;
      }
    }
  }

  void step(std::span<const double> k, std::span<const double> v) { step(k, v, default_signals()); }

  Tensor query(std::span<const double> q) const { return forward(state_.memory, q); }

 private:
  MirasSpec spec_;
  MemoryState state_{MatrixMemory(1, 1), std::nullopt, std::nullopt};
};

}  // namespace miras
