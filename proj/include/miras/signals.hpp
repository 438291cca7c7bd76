#pragma once

#include <optional>
#include <string>

#include "miras/memory.hpp"
#include "miras/tensor.hpp"

namespace miras {

// Per-step gate and objective inputs. alpha and eta are either scalars
// (size 1) or channel-wise vectors whose length equals the memory's output
// dimension. delta overrides the bias threshold (Huber δ or robust radius Δ).
struct Signals {
  Tensor alpha = Tensor::scalar(1.0);
  Tensor eta = Tensor::scalar(0.0);
  std::optional<Tensor> delta;
  double gamma = 0.0;  // soft-threshold width for the local elastic-net gate

  static Signals constant(double alpha, double eta) {
    Signals s;
    s.alpha = Tensor::scalar(alpha);
    s.eta = Tensor::scalar(eta);
    return s;
  }

  void validate() const {
    for (double a : alpha.data()) {
      if (!(a >= 0.0 && a <= 1.0)) throw ContractError("alpha entries must lie in [0, 1], got " + std::to_string(a));
    }
    for (double e : eta.data()) {
      if (!(e >= 0.0)) throw ContractError("eta entries must be >= 0, got " + std::to_string(e));
    }
    if (!(gamma >= 0.0)) throw ContractError("gamma must be >= 0");
  }
};

// Expand a scalar or channel-wise signal to the full parameter shape.
inline Tensor broadcast_signal(const Tensor& signal, const ParamLayout& layout, const Dims& dims) {
  Tensor out(dims);
  if (signal.size() == 1) {
    out.fill(signal[0]);
    return out;
  }
  for (const auto& b : layout) {
    const std::size_t channels = b.channel_axis == ChannelAxis::kRows ? b.rows : b.cols;
    if (signal.size() != channels) {
      throw DimensionError("channel-wise signal of length " + std::to_string(signal.size()) +
                           " does not fit block '" + b.name + "' with " + std::to_string(channels) + " channels");
    }
    for (std::size_t r = 0; r < b.rows; ++r)
      for (std::size_t c = 0; c < b.cols; ++c)
        out[b.offset + r * b.cols + c] = signal[b.channel_axis == ChannelAxis::kRows ? r : c];
  }
  return out;
}

inline double signal_at(const Tensor& signal, std::size_t channel) {
  return signal.size() == 1 ? signal[0] : signal[channel];
}

}  // namespace miras
