#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "miras/error.hpp"
#include "miras/tensor.hpp"

namespace miras::harness {

// Softmax attention over every stored pair: sum_j softmax(<q, k_j> / τ)_j v_j.
inline Tensor attn_baseline_query(std::span<const Tensor> keys, std::span<const Tensor> values,
                                  std::span<const double> q, double temperature) {
  if (keys.empty()) throw ContractError("attention query over an empty store");
  if (keys.size() != values.size()) throw DimensionError("attention: keys/values count mismatch");
  if (!(temperature > 0.0)) throw ContractError("attention temperature must be > 0");
  std::vector<double> logits(keys.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < keys.size(); ++j) {
    logits[j] = dot(q, keys[j].data()) / temperature;
    mx = std::max(mx, logits[j]);
  }
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  Tensor out(values.front().dims());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    const double w = logits[j] / z;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * values[j][i];
  }
  return out;
}

// Causal attention: the query at step t sees pairs 0..t.
inline std::vector<Tensor> causal_attention(std::span<const Tensor> queries, std::span<const Tensor> keys,
                                            std::span<const Tensor> values, double temperature) {
  std::vector<Tensor> out;
  for (std::size_t t = 0; t < queries.size(); ++t)
    out.push_back(attn_baseline_query(keys.subspan(0, t + 1), values.subspan(0, t + 1), queries[t].data(), temperature));
  return out;
}

inline double default_temperature(std::size_t d) { return std::sqrt(static_cast<double>(d)); }

}  // namespace miras::harness
