#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "miras/tensor.hpp"

namespace miras {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based generator: draw n is mix64(key + (n + 1) * golden), where the
// key is derived from (seed, stream). Any draw can be computed without the
// ones before it, so independent streams are reproducible regardless of which
// thread consumes them or in what order.
class Rng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), key_(mix64(seed ^ mix64(stream + kGolden))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t at(std::uint64_t index) const { return mix64(key_ + (index + 1) * kGolden); }

  std::uint64_t next_u64() { return at(counter_++); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Box-Muller; consumes exactly two draws per sample.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Tensor normal_tensor(Dims dims, double stddev = 1.0, double mean = 0.0) {
    Tensor t(std::move(dims));
    for (double& x : t.data()) x = normal(mean, stddev);
    return t;
  }

  Tensor uniform_tensor(Dims dims, double lo, double hi) {
    Tensor t(std::move(dims));
    for (double& x : t.data()) x = uniform(lo, hi);
    return t;
  }

  Tensor unit_vector(std::size_t n) {
    Tensor t = normal_tensor(Dims{n});
    double nrm = norm2(t.data());
    while (nrm == 0.0) {
      t = normal_tensor(Dims{n});
      nrm = norm2(t.data());
    }
    return t * (1.0 / nrm);
  }

  // Independent child stream keyed by tag.
  Rng split(std::uint64_t tag) const { return Rng(mix64(key_ ^ mix64(tag)), stream_); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace miras
