#pragma once

#include <algorithm>
#include <cmath>

#include "miras/bias.hpp"
#include "miras/memory.hpp"

namespace miras {

inline constexpr double kFdStep = 1e-5;

// Central differences of a scalar function of the flat parameter vector.
template <typename F>
Tensor central_difference(F&& f, const Tensor& x, double h = kFdStep) {
  Tensor g(x.dims());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + h;
    const double up = f(probe);
    probe[i] = keep - h;
    const double down = f(probe);
    probe[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b||_2 / max(||a||_2, ||b||_2); 0 when both vanish.
inline double relative_error(const Tensor& a, const Tensor& b) {
  a.require_same_dims(b, "relative_error");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double scale = std::max(norm2(a.data()), norm2(b.data()));
  if (scale == 0.0) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

// Numerical gradient of the bias loss in the memory parameters.
inline Tensor numerical_grad(const AttentionalBias& bias, const AnyMemory& mem, std::span<const double> k,
                             std::span<const double> v, const Tensor* delta = nullptr, double h = kFdStep) {
  AnyMemory probe = mem;
  auto f = [&](const Tensor& p) {
    Tensor& dst = params(probe);
    std::copy(p.data().begin(), p.data().end(), dst.data().begin());
    return loss(bias, probe, k, v, delta);
  };
  return central_difference(f, params(mem), h);
}

}  // namespace miras
