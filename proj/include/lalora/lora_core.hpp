// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "lalora/numkit/linalg.hpp"
#include "lalora/numkit/matrix.hpp"
#include "lalora/numkit/rng.hpp"

namespace lalora {

/// A single low-rank adaptation site: W = W0 + s * B * A with s = alpha / r.
///
/// W0 is m x n and frozen, B is m x r, A is r x n.
struct LoraAdapter {
  DenseMatrix w0;
  DenseMatrix a;
  DenseMatrix b;
  double alpha = 1.0;

  std::size_t rank() const { return a.rows(); }
  double scale() const {
    return rank() == 0 ? 0.0 : alpha / static_cast<double>(rank());
  }

  void validate() const {
    const std::size_t r = rank();
    if (a.cols() != w0.cols() || b.rows() != w0.rows() || b.cols() != r) {
      throw DimensionMismatch(fmt::format(
          "LoraAdapter: W0 {}, B {}, A {}", w0.shape_string(),
          b.shape_string(), a.shape_string()));
    }
    if (r > std::min(w0.rows(), w0.cols())) {
      throw InvalidArgument(fmt::format("LoraAdapter: rank {} exceeds min({})",
                                        r, w0.shape_string()));
    }
  }
};

/// Standard initialization: B = 0, A with i.i.d. N(0, 1/r) entries.
inline LoraAdapter make_adapter(DenseMatrix w0, std::size_t rank, double alpha,
                                SeededRng& rng) {
  if (rank == 0) throw InvalidArgument("make_adapter: rank must be >= 1");
  LoraAdapter ad;
  ad.alpha = alpha;
  ad.a = gaussian_fill(rank, w0.cols(), rng,
                       1.0 / std::sqrt(static_cast<double>(rank)));
  ad.b = DenseMatrix(w0.rows(), rank);
  ad.w0 = std::move(w0);
  ad.validate();
  return ad;
}

inline DenseMatrix effective_weight(const DenseMatrix& w0, const DenseMatrix& b,
                                    const DenseMatrix& a, double s) {
  DenseMatrix w = w0;
  axpy(s, matmul(b, a), w);
  return w;
}

inline DenseMatrix effective_weight(const LoraAdapter& ad) {
  return effective_weight(ad.w0, ad.b, ad.a, ad.scale());
}

struct FactorGrads {
  DenseMatrix grad_a;  // r x n
  DenseMatrix grad_b;  // m x r
};

// grad_A = s B^T G, grad_B = s G A^T.
inline FactorGrads factor_grads(const DenseMatrix& grad_w, const DenseMatrix& b,
                                const DenseMatrix& a, double s) {
  if (grad_w.rows() != b.rows() || grad_w.cols() != a.cols()) {
    throw DimensionMismatch(fmt::format("factor_grads: grad_w {} vs B {} A {}",
                                        grad_w.shape_string(), b.shape_string(),
                                        a.shape_string()));
  }
  return {s * matmul(transpose(b), grad_w), s * matmul(grad_w, transpose(a))};
}

inline FactorGrads factor_grads(const DenseMatrix& grad_w,
                                const LoraAdapter& ad) {
  return factor_grads(grad_w, ad.b, ad.a, ad.scale());
}

namespace detail {

inline DenseMatrix solve_gram(const DenseMatrix& gram, const DenseMatrix& rhs,
                              SpdSolveOptions opts, bool right,
                              const char* what) {
  try {
    return right ? solve_spd_right(gram, rhs, opts) : solve_spd(gram, rhs, opts);
  } catch (const NotSpd& e) {
    throw RankDeficient(std::string(what) + ": " + e.what());
  }
}

}  // namespace detail

/// (1/s^2) grad_B (A A^T)^{-1}: the least-squares B-step that best
/// reproduces the full-weight gradient.
inline DenseMatrix projected_grad_b(const DenseMatrix& grad_b,
                                    const DenseMatrix& a, double s,
                                    SpdSolveOptions opts = {}) {
  if (!(s > 0.0)) throw InvalidArgument("projected_grad_b: s must be positive");
  const DenseMatrix gram = matmul(a, transpose(a));
  return (1.0 / (s * s)) *
         detail::solve_gram(gram, grad_b, opts, true, "projected_grad_b");
}

/// (1/s^2) (B^T B)^{-1} grad_A, with B the factor after its own update.
inline DenseMatrix projected_grad_a(const DenseMatrix& grad_a,
                                    const DenseMatrix& b_next, double s,
                                    SpdSolveOptions opts = {}) {
  if (!(s > 0.0)) throw InvalidArgument("projected_grad_a: s must be positive");
  const DenseMatrix gram = matmul(transpose(b_next), b_next);
  return (1.0 / (s * s)) *
         detail::solve_gram(gram, grad_a, opts, false, "projected_grad_a");
}

// A^T (A A^T)^{-1} A, the n x n projector onto the row space of A.
inline DenseMatrix row_projector(const DenseMatrix& a,
                                 SpdSolveOptions opts = {}) {
  const DenseMatrix gram = matmul(a, transpose(a));
  return matmul(transpose(a),
                detail::solve_gram(gram, a, opts, false, "row_projector"));
}

// B (B^T B)^{-1} B^T, the m x m projector onto the column space of B.
inline DenseMatrix col_projector(const DenseMatrix& b,
                                 SpdSolveOptions opts = {}) {
  const DenseMatrix gram = matmul(transpose(b), b);
  return matmul(b, detail::solve_gram(gram, transpose(b), opts, false,
                                      "col_projector"));
}

enum class Factor { kB, kA };

enum class Phase { kUpdateB, kUpdateA, kUpdateBoth, kBOnly };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kUpdateB: return "update_b";
    case Phase::kUpdateA: return "update_a";
    case Phase::kUpdateBoth: return "update_both";
    case Phase::kBOnly: return "b_only";
  }
  return "?";
}

/// Which factor a local step updates: blocks of `block_len` steps alternate,
/// starting with `first_factor`.
struct AlternationSchedule {
  std::size_t block_len = 1;
  Factor first_factor = Factor::kB;
};

inline Phase phase_for_step(const AlternationSchedule& sched, std::size_t k) {
  if (k < 1) throw InvalidArgument("phase_for_step: steps are 1-based");
  if (sched.block_len < 1) {
    throw InvalidArgument("phase_for_step: block_len must be >= 1");
  }
  const bool first = ((k - 1) / sched.block_len) % 2 == 0;
  const Factor f = first ? sched.first_factor
                         : (sched.first_factor == Factor::kB ? Factor::kA
                                                             : Factor::kB);
  return f == Factor::kB ? Phase::kUpdateB : Phase::kUpdateA;
}

struct UpdateForms {
  DenseMatrix alternating_delta;
  DenseMatrix joint_delta;
  DenseMatrix cross_term;
};

/// Full-weight change of two projected half-steps, B at step k then A at
/// k + 1/2, written in projection form:
///   -eta * G_k * Prow(A_k) - eta * Pcol(B_next) * G_half.
/// Exactly linear in eta for a fixed B_next.
inline DenseMatrix alternating_projection_delta(const DenseMatrix& grad_w_k,
                                                const DenseMatrix& grad_w_half,
                                                const DenseMatrix& a_k,
                                                const DenseMatrix& b_next,
                                                double eta) {
  DenseMatrix d = -eta * matmul(grad_w_k, row_projector(a_k));
  axpy(-eta, matmul(col_projector(b_next), grad_w_half), d);
  return d;
}

/// Compares the alternating update with the simultaneous one.
///
/// The alternating path takes B_{k+1} = B_k - eta * projected_grad_b and
/// then the projection-form delta above. The joint path projects both
/// factors at step k; expanding s (B - eta dB)(A - eta dA) - s B A leaves
/// the two linear projections plus the second-order term
///   (eta^2 / s) * G A^T (A A^T)^{-1} (B^T B)^{-1} B^T G.
inline UpdateForms full_weight_update_forms(const LoraAdapter& ad,
                                            const DenseMatrix& grad_w_k,
                                            const DenseMatrix& grad_w_half,
                                            double eta) {
  const double s = ad.scale();
  const DenseMatrix& a = ad.a;
  const DenseMatrix& b = ad.b;
  const FactorGrads fg = factor_grads(grad_w_k, b, a, s);

  DenseMatrix b_next = b;
  axpy(-eta, projected_grad_b(fg.grad_b, a, s), b_next);

  UpdateForms out;
  out.alternating_delta =
      alternating_projection_delta(grad_w_k, grad_w_half, a, b_next, eta);

  // G A^T (A A^T)^{-1} is m x r; (B^T B)^{-1} B^T G is r x n.
  const DenseMatrix left = detail::solve_gram(
      matmul(a, transpose(a)), matmul(grad_w_k, transpose(a)), {}, true,
      "full_weight_update_forms");
  const DenseMatrix right = detail::solve_gram(
      matmul(transpose(b), b), matmul(transpose(b), grad_w_k), {}, false,
      "full_weight_update_forms");
  out.cross_term = (eta * eta / s) * matmul(left, right);

  out.joint_delta = -eta * matmul(grad_w_k, row_projector(a));
  axpy(-eta, matmul(col_projector(b), grad_w_k), out.joint_delta);
  out.joint_delta += out.cross_term;
  return out;
}

}  // namespace lalora
