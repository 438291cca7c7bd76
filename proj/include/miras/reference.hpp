#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "miras/models.hpp"
#include "miras/rng.hpp"

// Literal recurrences of earlier linear-memory models, written directly on a
// d_v x d_k matrix M (M k is the read-out). Key-side transitions multiply M on
// the right; channel-wise gates scale rows unless noted.
namespace miras {

enum class ReferenceRule { kLA, kRetNet, kMamba2, kGLA, kDeltaNet, kGatedDeltaNet, kRWKV7, kLonghorn, kHGRN2, kTitansLMM };

inline const std::vector<ReferenceRule>& all_reference_rules() {
  static const std::vector<ReferenceRule> rules = {
      ReferenceRule::kLA,           ReferenceRule::kRetNet, ReferenceRule::kMamba2,   ReferenceRule::kGLA,
      ReferenceRule::kDeltaNet,     ReferenceRule::kGatedDeltaNet, ReferenceRule::kRWKV7, ReferenceRule::kLonghorn,
      ReferenceRule::kHGRN2,        ReferenceRule::kTitansLMM};
  return rules;
}

inline const char* to_string(ReferenceRule r) {
  switch (r) {
    case ReferenceRule::kLA: return "la";
    case ReferenceRule::kRetNet: return "retnet";
    case ReferenceRule::kMamba2: return "mamba2";
    case ReferenceRule::kGLA: return "gla";
    case ReferenceRule::kDeltaNet: return "deltanet";
    case ReferenceRule::kGatedDeltaNet: return "gated_deltanet";
    case ReferenceRule::kRWKV7: return "rwkv7";
    case ReferenceRule::kLonghorn: return "longhorn";
    case ReferenceRule::kHGRN2: return "hgrn2";
    case ReferenceRule::kTitansLMM: return "titans_lmm";
  }
  return "?";
}

inline ReferenceRule reference_rule_from_string(const std::string& name) {
  for (ReferenceRule r : all_reference_rules())
    if (name == to_string(r)) return r;
  throw ContractError("unknown reference rule '" + name + "'");
}

// Whether α is a per-channel vector for this rule.
inline bool channel_wise_alpha(ReferenceRule r) {
  return r == ReferenceRule::kGLA || r == ReferenceRule::kRWKV7 || r == ReferenceRule::kHGRN2;
}

struct ReferenceState {
  Tensor m;
  Tensor s;  // momentum, Titans only
};

inline ReferenceState reference_init(std::size_t d_v, std::size_t d_k) {
  return {Tensor(Dims{d_v, d_k}), Tensor(Dims{d_v, d_k})};
}

// α = sig.alpha, β = sig.eta. Titans uses θ = sig.eta and the momentum decay
// `eta_m`.
inline void reference_step(ReferenceRule rule, ReferenceState& st, std::span<const double> k,
                           std::span<const double> v, const Signals& sig, double eta_m = 0.9) {
  Tensor& m = st.m;
  const std::size_t dv = m.rows(), dk = m.cols();
  if (k.size() != dk || v.size() != dv) throw DimensionError("reference_step: key/value length mismatch");
  const double beta = sig.eta[0];
  auto alpha_row = [&](std::size_t i) { return signal_at(sig.alpha, i); };

  switch (rule) {
    case ReferenceRule::kLA:
      for (std::size_t i = 0; i < dv; ++i)
        for (std::size_t j = 0; j < dk; ++j) m(i, j) = m(i, j) + v[i] * k[j];
      break;
    case ReferenceRule::kRetNet:
    case ReferenceRule::kMamba2:
    case ReferenceRule::kGLA:
      // α M + v k^T, α scalar or Diag(α) on the rows.
      for (std::size_t i = 0; i < dv; ++i)
        for (std::size_t j = 0; j < dk; ++j) m(i, j) = alpha_row(i) * m(i, j) + v[i] * k[j];
      break;
    case ReferenceRule::kDeltaNet:
    case ReferenceRule::kGatedDeltaNet:
    case ReferenceRule::kRWKV7: {
      // Diag(α) M (I - β k k^T) + β v k^T; DeltaNet has α = 1.
      const bool gated = rule != ReferenceRule::kDeltaNet;
      for (std::size_t i = 0; i < dv; ++i) {
        const double a = gated ? alpha_row(i) : 1.0;
        double mk = 0.0;
        for (std::size_t j = 0; j < dk; ++j) mk += a * m(i, j) * k[j];
        for (std::size_t j = 0; j < dk; ++j) m(i, j) = a * m(i, j) - beta * mk * k[j] + beta * v[i] * k[j];
      }
      break;
    }
    case ReferenceRule::kLonghorn: {
      // M (I - β k k^T / (1 + β k^T k)) + (β / (1 + β k^T k)) v k^T.
      const double c = beta / (1.0 + beta * dot(k, k));
      for (std::size_t i = 0; i < dv; ++i) {
        double mk = 0.0;
        for (std::size_t j = 0; j < dk; ++j) mk += m(i, j) * k[j];
        for (std::size_t j = 0; j < dk; ++j) m(i, j) = m(i, j) - c * mk * k[j] + c * v[i] * k[j];
      }
      break;
    }
    case ReferenceRule::kHGRN2: {
      // M Diag(α) + v (1 - α)^T with α of key length.
      if (sig.alpha.size() != 1 && sig.alpha.size() != dk) throw DimensionError("hgrn2: α must have key length");
      for (std::size_t i = 0; i < dv; ++i)
        for (std::size_t j = 0; j < dk; ++j) {
          const double a = signal_at(sig.alpha, j);
          m(i, j) = m(i, j) * a + v[i] * (1.0 - a);
        }
      break;
    }
    case ReferenceRule::kTitansLMM: {
      // S = η_m S - θ ∇||M k - v||^2;  M = α M - S, literal sign.
      Tensor r = matvec(m, k);
      for (std::size_t i = 0; i < dv; ++i) r[i] -= v[i];
      for (std::size_t i = 0; i < dv; ++i)
        for (std::size_t j = 0; j < dk; ++j) {
          st.s(i, j) = eta_m * st.s(i, j) - beta * 2.0 * r[i] * k[j];
          m(i, j) = alpha_row(i) * m(i, j) - st.s(i, j);
        }
      break;
    }
  }
}

// Framework instance a reference rule reduces to, with its constants folded
// into the signals. Rules without a mapping return nullopt.
struct FrameworkMapping {
  MirasSpec spec;
  std::string note;
};

inline std::optional<FrameworkMapping> framework_mapping(ReferenceRule rule) {
  MirasSpec s;
  s.name = std::string("framework_") + to_string(rule);
  switch (rule) {
    case ReferenceRule::kLA:
      s.bias = AttentionalBias::dot_product();
      return FrameworkMapping{s, "dot_product + GD, alpha = 1, eta = 1/2 (grad is -2 v k^T)"};
    case ReferenceRule::kRetNet:
    case ReferenceRule::kMamba2:
      s.bias = AttentionalBias::dot_product();
      return FrameworkMapping{s, "dot_product + decay, eta = 1/2"};
    case ReferenceRule::kGLA:
      s.bias = AttentionalBias::dot_product();
      return FrameworkMapping{s, "dot_product + channel-wise decay (rows), eta = 1/2"};
    case ReferenceRule::kDeltaNet:
      return FrameworkMapping{s, "l2 (1/2 ||r||^2) + GD, alpha = 1, eta = beta"};
    case ReferenceRule::kGatedDeltaNet:
      s.gate = RetentionGate::decay(GradientPoint::kRetained);
      return FrameworkMapping{s, "l2 + decay with gradient at alpha*W, eta = beta"};
    case ReferenceRule::kRWKV7:
      s.gate = RetentionGate::decay(GradientPoint::kRetained);
      return FrameworkMapping{s, "l2 + channel-wise decay with gradient at Diag(alpha) W, eta = beta"};
    case ReferenceRule::kLonghorn:
    case ReferenceRule::kHGRN2:
    case ReferenceRule::kTitansLMM:
      return std::nullopt;
  }
  return std::nullopt;
}

// Signals for the framework side given the reference-side (α, β).
inline Signals mapped_signals(ReferenceRule rule, const Signals& ref) {
  Signals s = ref;
  switch (rule) {
    case ReferenceRule::kLA:
      s.alpha = Tensor::scalar(1.0);
      s.eta = Tensor::scalar(0.5);
      break;
    case ReferenceRule::kRetNet:
    case ReferenceRule::kMamba2:
    case ReferenceRule::kGLA:
      s.eta = Tensor::scalar(0.5);
      break;
    case ReferenceRule::kDeltaNet:
      s.alpha = Tensor::scalar(1.0);
      break;
    default:
      break;
  }
  return s;
}

struct EquivalenceReport {
  ReferenceRule rule;
  bool mapped = false;
  double max_deviation = 0.0;
  std::string note;
};

// Seeded stream of unit keys, normal values and per-step signals shaped for
// `rule`: α in [0.5, 1] (scalar or per channel), β in [0, 1].
inline Stream equivalence_stream(ReferenceRule rule, std::uint64_t seed, std::size_t steps, std::size_t d) {
  Rng rng(seed, 0xe9u);
  Stream st;
  for (std::size_t t = 0; t < steps; ++t) {
    st.keys.push_back(rng.unit_vector(d));
    st.values.push_back(rng.normal_tensor(Dims{d}));
    Signals s;
    if (channel_wise_alpha(rule)) {
      s.alpha = rng.uniform_tensor(Dims{d}, 0.5, 1.0);
    } else {
      s.alpha = Tensor::scalar(rng.uniform(0.5, 1.0));
    }
    s.eta = Tensor::scalar(rng.uniform(0.0, 1.0));
    st.signals.push_back(std::move(s));
  }
  return st;
}

// Runs the reference recurrence and its framework instance side by side and
// reports max_t ||M_t - W_t||_inf.
inline EquivalenceReport framework_equivalence(ReferenceRule rule, std::uint64_t seed, std::size_t steps = 100,
                                               std::size_t d = 8) {
  EquivalenceReport rep{rule, false, 0.0, "reference-only"};
  const auto mapping = framework_mapping(rule);
  if (!mapping) return rep;
  rep.mapped = true;
  rep.note = mapping->note;
  const Stream st = equivalence_stream(rule, seed, steps, d);
  ReferenceState ref = reference_init(d, d);
  MirasModel model(mapping->spec, d, d, seed);
  for (std::size_t t = 0; t < steps; ++t) {
    reference_step(rule, ref, st.keys[t].data(), st.values[t].data(), st.signals[t]);
    model.step(st.keys[t].data(), st.values[t].data(), mapped_signals(rule, st.signals[t]));
    rep.max_deviation = std::max(rep.max_deviation, max_abs_diff(ref.m, model.state().params()));
  }
  return rep;
}

}  // namespace miras
