#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "miras/models.hpp"

namespace miras {

// States at chunk ends (after positions b, 2b, ..., T) plus the final state.
struct ChunkTrace {
  std::vector<MemoryState> boundaries;
  MemoryState final_state;
};

inline std::size_t stream_dim_k(const Stream& s) { return s.keys.at(0).size(); }
inline std::size_t stream_dim_v(const Stream& s) { return s.values.at(0).size(); }

inline void require_stream(const Stream& s, std::size_t b) {
  if (b == 0) throw ContractError("chunk size must be >= 1");
  if (s.keys.empty()) throw ContractError("empty stream");
  if (s.values.size() != s.keys.size() || s.signals.size() != s.keys.size())
    throw DimensionError("stream keys/values/signals lengths differ");
}

// Fully sequential trajectory; the reference every chunked form departs from.
inline MemoryState sequential(const MirasSpec& spec, const Stream& stream, std::uint64_t seed) {
  require_stream(stream, 1);
  MirasModel model(spec, stream_dim_k(stream), stream_dim_v(stream), seed);
  for (std::size_t t = 0; t < stream.size(); ++t)
    model.step(stream.keys[t].data(), stream.values[t].data(), stream.signals[t]);
  return model.state();
}

// Plain loop in which every gradient inside a chunk is taken at the
// chunk-start state. With b = 1 this is the sequential trajectory.
inline ChunkTrace stale_sequential(const MirasSpec& spec, const Stream& stream, std::size_t b, std::uint64_t seed) {
  require_stream(stream, b);
  MirasModel model(spec, stream_dim_k(stream), stream_dim_v(stream), seed);
  ChunkTrace trace{{}, model.state()};
  const std::size_t T = stream.size();
  for (std::size_t c = 0; c < T; c += b) {
    const MemoryState anchor = model.state();
    const std::size_t end = std::min(c + b, T);
    for (std::size_t t = c; t < end; ++t) {
      const Tensor at = default_grad_point(anchor, spec.gate, stream.signals[t]);
      model.step(stream.keys[t].data(), stream.values[t].data(), stream.signals[t], &at);
    }
    trace.boundaries.push_back(model.state());
  }
  trace.final_state = model.state();
  return trace;
}

namespace detail {

// Per-channel signal as a length-n vector.
inline Tensor channel_vector(const Tensor& signal, std::size_t n) {
  Tensor out(Dims{n});
  for (std::size_t i = 0; i < n; ++i) out[i] = signal_at(signal, i);
  return out;
}

}  // namespace detail

// Chunk-parallel evaluation for GD with the decay or Lq gate. Per chunk:
//   R = M_{t'}(K) - V in one batched pass,
//   U = bias upstream of R, column-wise,
//   Δ = sum_i (η_i ⊙ prod_{j>i} α_j ⊙ U_i) pulled back against k_i,
//   state = (prod_j α_j) ⊙ state - Δ, and the Lq map once at the end.
// Only chunk-end states are materialized.
inline ChunkTrace chunked_batched(const MirasSpec& spec, const Stream& stream, std::size_t b, std::uint64_t seed) {
  require_stream(stream, b);
  if (spec.learner.kind != LearnerKind::kGD) throw ContractError("chunked_batched supports the GD learner only");
  if (spec.gate.kind != GateKind::kDecay && spec.gate.kind != GateKind::kLqDual)
    throw ContractError(std::string("chunked_batched does not support the ") + to_string(spec.gate.kind) + " gate");
  if (spec.gate.kind == GateKind::kDecay && spec.gate.gradient_point == GradientPoint::kRetained)
    throw ContractError("chunked_batched needs the gradient at the chunk-start state");

  MirasModel model(spec, stream_dim_k(stream), stream_dim_v(stream), seed);
  MemoryState state = model.state();
  const ParamLayout lay = state.layout();
  const std::size_t dk = stream_dim_k(stream), dv = stream_dim_v(stream);
  const std::size_t T = stream.size();
  ChunkTrace trace{{}, state};

  for (std::size_t c = 0; c < T; c += b) {
    const std::size_t n = std::min(c + b, T) - c;
    Tensor keys(Dims{dk, n}), values(Dims{dv, n});
    std::vector<Tensor> deltas;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < dk; ++r) keys(r, i) = stream.keys[c + i][r];
      for (std::size_t r = 0; r < dv; ++r) values(r, i) = stream.values[c + i][r];
      const auto& d = stream.signals[c + i].delta;
      if (d) deltas.push_back(*d);
    }
    if (!deltas.empty() && deltas.size() != n) throw ContractError("delta must be given for every step or none");

    const Tensor preds = std::visit([&](const auto& m) { return m.batched_forward(keys); }, state.memory);
    const Tensor up = spec.bias.batched_upstream(preds, values, deltas);

    // Column i scale: η_i ⊙ prod_{j>i} α_j, built right to left.
    Tensor scales(Dims{dv, n});
    Tensor suffix(Dims{dv}, 1.0);
    for (std::size_t ii = n; ii-- > 0;) {
      const Tensor eta = detail::channel_vector(stream.signals[c + ii].eta, dv);
      const Tensor alpha = detail::channel_vector(stream.signals[c + ii].alpha, dv);
      for (std::size_t r = 0; r < dv; ++r) {
        scales(r, ii) = eta[r] * suffix[r];
        suffix[r] *= alpha[r];
      }
    }
    const Tensor delta_w =
        std::visit([&](const auto& m) { return m.batched_scaled_pullback(keys, up, scales); }, state.memory);
    const Tensor decay = broadcast_signal(suffix, lay, state.params().dims());

    Tensor& target = spec.gate.kind == GateKind::kLqDual ? *state.accumulator : state.params();
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = decay[i] * target[i] - delta_w[i];
    if (spec.gate.kind == GateKind::kLqDual) state.params() = lq_normalize(*state.accumulator, spec.gate.q, spec.gate.lq_form);
    require_finite(state, "chunked_batched");
    trace.boundaries.push_back(state);
  }
  trace.final_state = state;
  return trace;
}

// Full nonlinear KL step applied at a chunk boundary. The linear in-chunk
// updates may leave small negative entries; they are clamped to the floor.
inline void memora_chunk_boundary(MemoryState& state, const RetentionGate& gate, const AttentionalBias& bias,
                                  std::span<const double> k, std::span<const double> v, const Signals& sig) {
  const Tensor* delta = sig.delta ? &*sig.delta : nullptr;
  const Tensor g = grad(bias, state.memory, k, v, delta);
  state.params() = detail::kl_softmax_unchecked(state.params(), g, sig, state.layout(), gate.c, gate.slices);
  require_finite(state, "memora_chunk_boundary");
}

// Memora with lag tokens: positions 0, b, 2b, ... take the nonlinear step;
// the rest of each chunk runs the linear decay form with gradients at the
// post-lag state. Boundaries are the post-lag states.
inline ChunkTrace memora_chunked(const MirasSpec& spec, const Stream& stream, std::size_t b, std::uint64_t seed) {
  require_stream(stream, b);
  if (spec.gate.kind != GateKind::kKlSoftmax) throw ContractError("memora_chunked needs the kl_softmax gate");
  MirasModel model(spec, stream_dim_k(stream), stream_dim_v(stream), seed);
  MemoryState state = model.state();
  const std::size_t T = stream.size();
  ChunkTrace trace{{}, state};
  for (std::size_t c = 0; c < T; c += b) {
    memora_chunk_boundary(state, spec.gate, spec.bias, stream.keys[c].data(), stream.values[c].data(),
                          stream.signals[c]);
    trace.boundaries.push_back(state);
    const Tensor anchor = state.params();
    const std::size_t end = std::min(c + b, T);
    for (std::size_t t = c + 1; t < end; ++t) {
      const Tensor* delta = stream.signals[t].delta ? &*stream.signals[t].delta : nullptr;
      const Tensor g = grad_at_params(spec.bias, state.memory, anchor, stream.keys[t].data(), stream.values[t].data(),
                                      delta);
      state.params() = step_decay(state.params(), g, stream.signals[t], state.layout());
    }
    require_finite(state, "memora_chunked");
  }
  trace.final_state = state;
  return trace;
}

// ||stale(b) final - sequential final||_inf: how far the stale-gradient
// approximation drifts for chunk size b.
inline double staleness_gap(const MirasSpec& spec, const Stream& stream, std::size_t b, std::uint64_t seed) {
  const MemoryState seq = sequential(spec, stream, seed);
  const ChunkTrace stale = stale_sequential(spec, stream, b, seed);
  return max_abs_diff(seq.params(), stale.final_state.params());
}

}  // namespace miras
