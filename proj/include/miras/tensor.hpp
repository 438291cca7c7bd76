#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "miras/error.hpp"

namespace miras {

using Dims = std::vector<std::size_t>;

inline std::string dims_to_string(const Dims& dims) {
  std::string out = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(dims[i]);
  }
  return out + "]";
}

// Dense row-major array of doubles. An empty dims list is a scalar holding
// one element; every listed extent must be positive.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}

  explicit Tensor(Dims dims, double fill = 0.0) : dims_(std::move(dims)) {
    data_.assign(checked_count(dims_), fill);
  }

  Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != checked_count(dims_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match dims " + dims_to_string(dims_));
    }
  }

  static Tensor scalar(double value) { return Tensor(Dims{}, std::vector<double>{value}); }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor(Dims{values.size()}, std::vector<double>(values));
  }

  static Tensor vector(std::span<const double> values) {
    return Tensor(Dims{values.size()}, std::vector<double>(values.begin(), values.end()));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor(Dims{rows, cols}, std::vector<double>(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor out(Dims{n, n});
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
  }

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }

  std::size_t rows() const {
    require_rank(2);
    return dims_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return dims_[1];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  std::span<double> row(std::size_t r) {
    require_rank(2);
    return std::span<double>(data_).subspan(r * dims_[1], dims_[1]);
  }
  std::span<const double> row(std::size_t r) const {
    require_rank(2);
    return std::span<const double>(data_).subspan(r * dims_[1], dims_[1]);
  }

  Tensor reshaped(Dims dims) const { return Tensor(std::move(dims), data_); }
  Tensor flattened() const { return Tensor(Dims{data_.size()}, data_); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor& operator+=(const Tensor& other) {
    require_same_dims(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& other) {
    require_same_dims(other, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  // Bitwise value equality (dims and every element).
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

  void require_same_dims(const Tensor& other, const char* what) const {
    if (dims_ != other.dims_) {
      throw DimensionError(std::string(what) + ": dims " + dims_to_string(dims_) + " vs " +
                           dims_to_string(other.dims_));
    }
  }

 private:
  static std::size_t checked_count(const Dims& dims) {
    std::size_t n = 1;
    for (std::size_t e : dims) {
      if (e == 0) throw DimensionError("tensor extents must be positive: " + dims_to_string(dims));
      n *= e;
    }
    return n;
  }

  void require_rank(std::size_t r) const {
    if (dims_.size() != r) {
      throw DimensionError("expected rank " + std::to_string(r) + " tensor, got " +
                           dims_to_string(dims_));
    }
  }

  Dims dims_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vector and matrix kernels. All reductions run in index order so results do
// not depend on scheduling.

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_p(std::span<const double> a, double p) {
  double s = 0.0;
  for (double x : a) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  a.require_same_dims(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sum(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x;
  return s;
}

// W x for W of shape rows x cols.
inline Tensor matvec(const Tensor& w, std::span<const double> x) {
  if (w.cols() != x.size()) {
    throw DimensionError("matvec: W is " + dims_to_string(w.dims()) + ", x has length " +
                         std::to_string(x.size()));
  }
  Tensor out(Dims{w.rows()});
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r), x);
  return out;
}

// W^T x.
inline Tensor matvec_t(const Tensor& w, std::span<const double> x) {
  if (w.rows() != x.size()) throw DimensionError("matvec_t: length mismatch");
  Tensor out(Dims{w.cols()});
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += row[c] * xr;
  }
  return out;
}

// u v^T.
inline Tensor outer(std::span<const double> u, std::span<const double> v) {
  Tensor out(Dims{u.size(), v.size()});
  for (std::size_t r = 0; r < u.size(); ++r)
    for (std::size_t c = 0; c < v.size(); ++c) out(r, c) = u[r] * v[c];
  return out;
}

// A B.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + dims_to_string(a.dims()) + " x " + dims_to_string(b.dims()));
  }
  Tensor out(Dims{a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

// A B^T.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + dims_to_string(a.dims()) + " x " +
                         dims_to_string(b.dims()) + "^T");
  }
  Tensor out(Dims{a.rows(), b.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

inline Tensor transpose(const Tensor& a) {
  Tensor out(Dims{a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

// Stack equal-length vectors as the columns of a matrix.
inline Tensor stack_columns(std::span<const Tensor> columns) {
  if (columns.empty()) throw DimensionError("stack_columns: no columns");
  const std::size_t n = columns.front().size();
  Tensor out(Dims{n, columns.size()});
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != n) throw DimensionError("stack_columns: ragged columns");
    for (std::size_t i = 0; i < n; ++i) out(i, j) = columns[j][i];
  }
  return out;
}

inline Tensor column(const Tensor& m, std::size_t j) {
  Tensor out(Dims{m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, j);
  return out;
}

}  // namespace miras
