// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "lalora/dp_mech.hpp"
#include "lalora/lora_core.hpp"
#include "lalora/numkit/linalg.hpp"
#include "lalora/tasks.hpp"

namespace lalora {

/// Cosine of two equally sized matrices, flattened. Exactly one zero
/// argument gives 0; two zero arguments are an error.
inline double grad_cosine(const DenseMatrix& g1, const DenseMatrix& g2) {
  if (g1.size() != g2.size()) {
    throw DimensionMismatch(fmt::format(
        "grad_cosine: {} vs {} (use induced_grad_cosine for factor gradients)",
        g1.shape_string(), g2.shape_string()));
  }
  const double n1 = frobenius_norm(g1);
  const double n2 = frobenius_norm(g2);
  if (n1 == 0.0 && n2 == 0.0) {
    throw InvalidArgument("grad_cosine: both arguments are zero");
  }
  if (n1 == 0.0 || n2 == 0.0) return 0.0;
  double dot = 0.0;
  auto a = g1.data();
  auto b = g2.data();
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot / (n1 * n2), -1.0, 1.0);
}

/// Cosine between the full-weight directions induced by the two factor
/// gradients, s * B * grad_A and s * grad_B * A (both m x n). Returns
/// nothing when either direction vanishes, e.g. while B is still zero.
inline std::optional<double> induced_grad_cosine(const DenseMatrix& b,
                                                 const DenseMatrix& a,
                                                 const DenseMatrix& grad_a,
                                                 const DenseMatrix& grad_b,
                                                 double s) {
  const DenseMatrix via_a = s * matmul(b, grad_a);
  const DenseMatrix via_b = s * matmul(grad_b, a);
  if (frobenius_norm(via_a) == 0.0 || frobenius_norm(via_b) == 0.0) {
    return std::nullopt;
  }
  return grad_cosine(via_a, via_b);
}

/// Per-step cosine values with the late-window mean over the last 10%.
class CosineTrace {
 public:
  void add(double v) { values_.push_back(v); }
  const std::vector<double>& values() const { return values_; }

  // Needs at least 10 values.
  std::optional<double> late_window_mean() const {
    if (values_.size() < 10) return std::nullopt;
    const std::size_t w = (values_.size() + 9) / 10;
    double s = 0.0;
    for (std::size_t i = values_.size() - w; i < values_.size(); ++i) s += values_[i];
    return s / static_cast<double>(w);
  }

 private:
  std::vector<double> values_;
};

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// Largest Hessian eigenvalue by power iteration on finite-difference
/// Hessian-vector products, Hv = (g(theta + h v) - g(theta - h v)) / (2h)
/// with h = sqrt(eps) * (1 + ||theta||).
inline PowerIterationResult hessian_max_eig(const GradientFn& grad,
                                            std::span<const double> theta,
                                            std::size_t iters = 200,
                                            double tol = 1e-6) {
  const std::size_t dim = theta.size();
  double tn = 0.0;
  for (double v : theta) tn += v * v;
  const double h =
      std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + std::sqrt(tn));
  std::vector<double> base(theta.begin(), theta.end());
  LinearOperator hvp = [&](std::span<const double> v) {
    std::vector<double> plus = base;
    std::vector<double> minus = base;
    for (std::size_t i = 0; i < dim; ++i) {
      plus[i] += h * v[i];
      minus[i] -= h * v[i];
    }
    const auto gp = grad(plus);
    const auto gm = grad(minus);
    if (gp.size() != dim || gm.size() != dim) {
      throw DimensionMismatch("hessian_max_eig: gradient size");
    }
    std::vector<double> out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = (gp[i] - gm[i]) / (2.0 * h);
    return out;
  };
  return power_iteration(hvp, dim, iters, tol);
}

// [vec(A), vec(B)], row-major.
inline std::vector<double> flatten_factors(const DenseMatrix& a,
                                           const DenseMatrix& b) {
  std::vector<double> v(a.values());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return v;
}

inline void unflatten_factors(std::span<const double> v, DenseMatrix& a,
                              DenseMatrix& b) {
  if (v.size() != a.size() + b.size()) {
    throw DimensionMismatch("unflatten_factors: parameter length");
  }
  std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(a.size()),
            a.data().begin());
  std::copy(v.begin() + static_cast<std::ptrdiff_t>(a.size()), v.end(),
            b.data().begin());
}

/// Sharpness of a task's full training loss with respect to the LoRA
/// factors only (W0 fixed).
template <class Task>
PowerIterationResult lora_hessian_max_eig(const Task& task, const DenseMatrix& a,
                                          const DenseMatrix& b, double s,
                                          std::size_t iters = 200,
                                          double tol = 1e-6) {
  const auto idx = all_indices(task.train_size());
  const DenseMatrix& w0 = task.base_weight();
  GradientFn grad = [&](std::span<const double> theta) {
    DenseMatrix aa = a;
    DenseMatrix bb = b;
    unflatten_factors(theta, aa, bb);
    const auto lg = task.batch_loss_and_grad(effective_weight(w0, bb, aa, s), idx);
    const FactorGrads fg = factor_grads(lg.grad, bb, aa, s);
    return flatten_factors(fg.grad_a, fg.grad_b);
  };
  const auto theta = flatten_factors(a, b);
  return hessian_max_eig(grad, theta, iters, tol);
}

struct PerturbationRow {
  double sigma = 0.0;
  double cross = 0.0;       // E||N_B N_A||_F
  double linear = 0.0;      // E||B N_A + N_B A||_F
  double lora_total = 0.0;  // E||(B + N_B)(A + N_A) - B A||_F
  double full = 0.0;        // E||N_W||_F, N_W at the full m x n shape
};

/// Monte Carlo norms of the LoRA noise terms against full-weight noise at
/// each sigma. Draws for sigma index i and draw j come from their own stream.
inline std::vector<PerturbationRow> perturbation_sweep(
    const DenseMatrix& b, const DenseMatrix& a, const std::vector<double>& sigmas,
    std::size_t draws, const SeededRng& rng) {
  if (draws < 30) throw InvalidArgument("perturbation_sweep: draws must be >= 30");
  std::vector<PerturbationRow> rows;
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    const double sigma = sigmas[si];
    PerturbationRow row;
    row.sigma = sigma;
    for (std::size_t j = 0; j < draws; ++j) {
      SeededRng r = rng.derive(0, si, j, Purpose::kSweep);
      const DenseMatrix n_b = gaussian_fill(b.rows(), b.cols(), r, sigma);
      const DenseMatrix n_a = gaussian_fill(a.rows(), a.cols(), r, sigma);
      const DenseMatrix n_w = gaussian_fill(b.rows(), a.cols(), r, sigma);
      const NoiseDecomposition d = noise_decomposition(b, a, n_b, n_a);
      row.cross += frobenius_norm(d.cross_term);
      row.linear += frobenius_norm(d.linear_a_term + d.linear_b_term);
      row.lora_total += frobenius_norm(d.total);
      row.full += frobenius_norm(n_w);
    }
    const double inv = 1.0 / static_cast<double>(draws);
    row.cross *= inv;
    row.linear *= inv;
    row.lora_total *= inv;
    row.full *= inv;
    rows.push_back(row);
  }
  return rows;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x,
                           const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("loglog_slope: need >= 2 paired points");
  }
  double mx = 0.0;
  double my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace lalora
