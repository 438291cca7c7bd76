#pragma once

#include <cmath>

#include "miras/error.hpp"

namespace miras {

// Differentiable stand-ins for sign(x) and |x|.
struct SmoothCfg {
  double sign_sharpness = 10.0;
  double abs_epsilon = 1e-6;

  void validate() const {
    if (!(sign_sharpness > 0.0) || !(abs_epsilon > 0.0)) {
      throw ContractError("SmoothCfg requires sign_sharpness > 0 and abs_epsilon > 0");
    }
  }

  friend bool operator==(const SmoothCfg&, const SmoothCfg&) = default;
};

inline double smooth_sign(double x, const SmoothCfg& cfg) { return std::tanh(cfg.sign_sharpness * x); }

inline double smooth_abs(double x, const SmoothCfg& cfg) { return std::sqrt(x * x + cfg.abs_epsilon); }

inline double exact_sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

}  // namespace miras
