// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "lalora/errors.hpp"

namespace lalora {

/// Row-major dense matrix of doubles.
///
/// Every numeric quantity in the library (base weights, LoRA factors,
/// gradients, noise draws, sensing operators) is carried as a DenseMatrix.
/// Matrices built from external data reject non-finite entries; matrices
/// produced by arithmetic are not re-checked (use all_finite()).
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // Validates length and finiteness.
  static DenseMatrix from_data(std::size_t rows, std::size_t cols,
                               std::vector<double> data) {
    if (data.size() != rows * cols) {
      throw DimensionMismatch(fmt::format(
          "DenseMatrix: {} values supplied for a {}x{} matrix", data.size(),
          rows, cols));
    }
    for (double v : data) {
      if (!std::isfinite(v)) {
        throw InvalidArgument("DenseMatrix: non-finite entry in input data");
      }
    }
    DenseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
  }

  static DenseMatrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) {
        throw DimensionMismatch("DenseMatrix::from_rows: ragged rows");
      }
      data.insert(data.end(), row.begin(), row.end());
    }
    return from_data(r, c, std::move(data));
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  std::span<double> row(std::size_t i) {
    return std::span<double>(data_).subspan(i * cols_, cols_);
  }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }

  bool same_shape(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  std::string shape_string() const {
    return fmt::format("{}x{}", rows_, cols_);
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

inline void require_same_shape(const DenseMatrix& a, const DenseMatrix& b,
                               const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionMismatch(fmt::format("{}: shape {} vs {}", what,
                                        a.shape_string(), b.shape_string()));
  }
}

}  // namespace detail

/// Standard product. Each entry accumulates k = 0..n-1 in ascending order,
/// which makes the result identical to a naive triple loop.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionMismatch(fmt::format("matmul: {} x {}", a.shape_string(),
                                        b.shape_string()));
  }
  DenseMatrix c(a.rows(), b.cols());
  const std::size_t n = a.cols();
  const std::size_t p = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.data().data() + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      const double* brow = b.data().data() + k * p;
      for (std::size_t j = 0; j < p; ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "add");
  DenseMatrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
  return c;
}

inline DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "subtract");
  DenseMatrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

inline DenseMatrix operator*(double s, const DenseMatrix& a) {
  DenseMatrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

inline DenseMatrix operator-(const DenseMatrix& a) { return -1.0 * a; }

inline DenseMatrix& operator+=(DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "add");
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
  return a;
}

inline DenseMatrix& operator-=(DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "subtract");
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] -= bd[i];
  return a;
}

// a += alpha * x
inline void axpy(double alpha, const DenseMatrix& x, DenseMatrix& a) {
  detail::require_same_shape(a, x, "axpy");
  auto ad = a.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += alpha * xd[i];
}

inline double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "frobenius_dot");
  double s = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
  return s;
}

inline double frobenius_norm_sq(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

inline double frobenius_norm(const DenseMatrix& a) {
  return std::sqrt(frobenius_norm_sq(a));
}

inline double trace(const DenseMatrix& a) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
  return t;
}

inline bool all_finite(const DenseMatrix& a) {
  for (double v : a.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ‖a − b‖_F / ‖b‖_F; falls back to the absolute error when b is zero.
inline double relative_error(const DenseMatrix& a, const DenseMatrix& b) {
  const double denom = frobenius_norm(b);
  const double num = frobenius_norm(a - b);
  return denom == 0.0 ? num : num / denom;
}

inline double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace lalora
