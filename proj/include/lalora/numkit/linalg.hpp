// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lalora/numkit/matrix.hpp"
#include "lalora/numkit/rng.hpp"

namespace lalora {

inline constexpr std::size_t kMaxSpdDim = 512;
inline constexpr double kSpdPivotFloor = 1e-12;
inline constexpr double kSymmetryTol = 1e-12;

struct SpdSolveOptions {
  // Adds 1e-10 * trace(g) / r to the diagonal before factorizing.
  bool ridge = false;
};

/// Solves g * X = rhs for symmetric positive definite g via Cholesky.
///
/// Rejects a pivot at or below 1e-12 times the largest diagonal entry
/// with NotSpd. No silent regularization: callers opt into the ridge.
inline DenseMatrix solve_spd(const DenseMatrix& g, const DenseMatrix& rhs,
                             SpdSolveOptions opts = {}) {
  const std::size_t r = g.rows();
  if (g.cols() != r) {
    throw DimensionMismatch("solve_spd: matrix is " + g.shape_string());
  }
  if (rhs.rows() != r) {
    throw DimensionMismatch(fmt::format("solve_spd: {} system with {} rhs",
                                        g.shape_string(), rhs.shape_string()));
  }
  if (r > kMaxSpdDim) {
    throw InvalidArgument(fmt::format("solve_spd: dimension {} exceeds {}", r,
                                      kMaxSpdDim));
  }
  if (r == 0) return rhs;

  const double scale = max_abs(g);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i + 1; j < r; ++j) {
      if (std::abs(g(i, j) - g(j, i)) > kSymmetryTol * scale) {
        throw InvalidArgument("solve_spd: matrix is not symmetric");
      }
    }
  }

  DenseMatrix l(r, r);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < r; ++i) max_diag = std::max(max_diag, g(i, i));
  const double ridge =
      opts.ridge ? 1e-10 * trace(g) / static_cast<double>(r) : 0.0;
  const double floor = kSpdPivotFloor * (max_diag + ridge);
  if (!(max_diag + ridge > 0.0)) {
    throw NotSpd("solve_spd: non-positive diagonal");
  }

  for (std::size_t j = 0; j < r; ++j) {
    double d = g(j, j) + ridge;
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > floor)) {
      throw NotSpd(fmt::format("solve_spd: pivot {} is {:.3e} (floor {:.3e})",
                               j, d, floor));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < r; ++i) {
      double s = g(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }

  DenseMatrix x = rhs;
  const std::size_t m = rhs.cols();
  // Forward: L y = rhs.
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t c = 0; c < m; ++c) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  // Backward: L^T x = y.
  for (std::size_t ii = r; ii-- > 0;) {
    for (std::size_t c = 0; c < m; ++c) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < r; ++k) s -= l(k, ii) * x(k, c);
      x(ii, c) = s / l(ii, ii);
    }
  }
  return x;
}

// Solves X * g = rhs (g symmetric), i.e. X = rhs * g^{-1}.
inline DenseMatrix solve_spd_right(const DenseMatrix& g, const DenseMatrix& rhs,
                                   SpdSolveOptions opts = {}) {
  return transpose(solve_spd(g, transpose(rhs), opts));
}

using LinearOperator =
    std::function<std::vector<double>(std::span<const double>)>;

struct PowerIterationResult {
  double eigenvalue = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Dominant eigenvalue of a symmetric operator by power iteration.
///
/// Stops when successive Rayleigh quotients differ by less than
/// tol * max(1, |estimate|) or after `iters` products. The default start
/// vector is a fixed pseudo-random unit vector so results are reproducible.
inline PowerIterationResult power_iteration(
    const LinearOperator& apply, std::size_t dim, std::size_t iters,
    double tol, std::optional<std::vector<double>> start = std::nullopt) {
  if (dim == 0) throw InvalidArgument("power_iteration: dim must be >= 1");
  std::vector<double> v;
  if (start) {
    if (start->size() != dim) {
      throw DimensionMismatch("power_iteration: start vector size");
    }
    v = *start;
  } else {
    SeededRng rng(0x706f776572ULL);
    v.resize(dim);
    for (double& x : v) x = rng.normal();
  }
  auto normalize = [](std::vector<double>& x) {
    double n = 0.0;
    for (double e : x) n += e * e;
    n = std::sqrt(n);
    if (n > 0.0) {
      for (double& e : x) e /= n;
    }
    return n;
  };
  if (normalize(v) == 0.0) {
    throw InvalidArgument("power_iteration: zero start vector");
  }

  PowerIterationResult res;
  std::optional<double> prev;
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> w = apply(v);
    if (w.size() != dim) {
      throw DimensionMismatch("power_iteration: operator output size");
    }
    double rq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) rq += v[i] * w[i];
    res.eigenvalue = rq;
    res.iterations = it + 1;
    if (prev && std::abs(rq - *prev) < tol * std::max(1.0, std::abs(rq))) {
      res.converged = true;
      break;
    }
    prev = rq;
    if (normalize(w) == 0.0) {
      // v lies in the null space; the Rayleigh quotient is exactly zero.
      res.converged = true;
      break;
    }
    v = std::move(w);
  }
  return res;
}

inline PowerIterationResult power_iteration(const DenseMatrix& m,
                                            std::size_t iters, double tol) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("power_iteration: matrix must be square");
  }
  LinearOperator op = [&m](std::span<const double> v) {
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * v[j];
      out[i] = s;
    }
    return out;
  };
  return power_iteration(op, m.rows(), iters, tol);
}

/// Largest singular value via power iteration on m^T m.
inline double spectral_norm(const DenseMatrix& m, std::size_t iters = 2000,
                            double tol = 1e-13) {
  const DenseMatrix gram = matmul(transpose(m), m);
  const auto res = power_iteration(gram, iters, tol);
  return std::sqrt(std::max(0.0, res.eigenvalue));
}

/// Orthonormalizes the columns of m (modified Gram-Schmidt, two passes).
/// Throws RankDeficient if a column collapses.
inline DenseMatrix orthonormal_columns(const DenseMatrix& m) {
  DenseMatrix q = m;
  const std::size_t rows = q.rows();
  for (std::size_t j = 0; j < q.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < rows; ++i) dot += q(i, k) * q(i, j);
        for (std::size_t i = 0; i < rows; ++i) q(i, j) -= dot * q(i, k);
      }
    }
    double n = 0.0;
    for (std::size_t i = 0; i < rows; ++i) n += q(i, j) * q(i, j);
    n = std::sqrt(n);
    if (n < 1e-12) throw RankDeficient("orthonormal_columns: dependent column");
    for (std::size_t i = 0; i < rows; ++i) q(i, j) /= n;
  }
  return q;
}

}  // namespace lalora
