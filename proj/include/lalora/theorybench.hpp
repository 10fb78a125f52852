// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "lalora/lora_core.hpp"
#include "lalora/numkit/linalg.hpp"
#include "lalora/numkit/rng.hpp"

namespace lalora {

enum class SensingKind { kOrthonormal, kGaussian };

/// Low-rank recovery from P blocks of linear measurements:
///   L(B, A) = 1/2 || sum_i C_i (B_i A_i - X*) ||_F^2
/// with C_i n x d, B_i d x r, A_i r x c and X* = U V of rank r.
struct SensingProblem {
  std::vector<DenseMatrix> c_ops;
  DenseMatrix x_star;
  DenseMatrix u;  // d x r
  DenseMatrix v;  // r x c
  std::size_t rank = 0;
  // Exact when the construction forces it (orthonormal blocks), otherwise
  // a sampled lower bound, see estimate_rip_delta.
  double delta_r = 0.0;
  bool delta_exact = false;
  SensingKind kind = SensingKind::kOrthonormal;

  std::size_t blocks() const { return c_ops.size(); }
};

inline SensingProblem gen_sensing(std::size_t n, std::size_t d, std::size_t c,
                                  std::size_t r, std::size_t p_blocks,
                                  SensingKind kind, SeededRng& rng) {
  if (r < 1 || r > std::min(d, c)) {
    throw InvalidArgument(fmt::format("gen_sensing: rank {} vs d={} c={}", r, d, c));
  }
  if (p_blocks < 1) throw InvalidArgument("gen_sensing: need >= 1 block");
  if (kind == SensingKind::kOrthonormal && n < d) {
    throw InvalidArgument("gen_sensing: orthonormal blocks need n >= d");
  }
  SensingProblem pr;
  pr.kind = kind;
  pr.rank = r;
  for (std::size_t i = 0; i < p_blocks; ++i) {
    if (kind == SensingKind::kOrthonormal) {
      pr.c_ops.push_back(orthonormal_columns(gaussian_fill(n, d, rng, 1.0)));
    } else {
      pr.c_ops.push_back(
          gaussian_fill(n, d, rng, 1.0 / std::sqrt(static_cast<double>(n))));
    }
  }
  const double sc = 1.0 / std::sqrt(static_cast<double>(r));
  pr.u = gaussian_fill(d, r, rng, sc);
  pr.v = gaussian_fill(r, c, rng, sc);
  pr.x_star = matmul(pr.u, pr.v);
  if (kind == SensingKind::kOrthonormal) {
    pr.delta_r = 0.0;
    pr.delta_exact = true;
  }
  return pr;
}

/// Sampled lower bound on the RIP constant: the largest |‖C_i M‖^2 - 1|
/// over random rank-r probes M with ‖M‖_F = 1.
inline double estimate_rip_delta(const SensingProblem& pr, std::size_t trials,
                                 SeededRng& rng) {
  if (trials < 1) throw InvalidArgument("estimate_rip_delta: trials must be >= 1");
  const std::size_t d = pr.x_star.rows();
  const std::size_t c = pr.x_star.cols();
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    DenseMatrix m = matmul(gaussian_fill(d, pr.rank, rng, 1.0),
                           gaussian_fill(pr.rank, c, rng, 1.0));
    m = (1.0 / frobenius_norm(m)) * m;
    for (const auto& ci : pr.c_ops) {
      worst = std::max(worst, std::abs(frobenius_norm_sq(matmul(ci, m)) - 1.0));
    }
  }
  return worst;
}

struct SensingFactors {
  std::vector<DenseMatrix> b;  // d x r each
  std::vector<DenseMatrix> a;  // r x c each
};

// B_i, A_i with i.i.d. N(0, scale^2) entries.
inline SensingFactors random_factors(const SensingProblem& pr, double scale,
                                     SeededRng& rng) {
  SensingFactors f;
  for (std::size_t i = 0; i < pr.blocks(); ++i) {
    f.b.push_back(gaussian_fill(pr.x_star.rows(), pr.rank, rng, scale));
    f.a.push_back(gaussian_fill(pr.rank, pr.x_star.cols(), rng, scale));
  }
  return f;
}

/// B_i = U G_i and A_i = H_i V with random r x r G_i, H_i: col(B_i) and
/// row(A_i) coincide with those of X*, and the updates keep them there.
inline SensingFactors aligned_factors(const SensingProblem& pr, SeededRng& rng) {
  SensingFactors f;
  const double sc = 1.0 / std::sqrt(static_cast<double>(pr.rank));
  for (std::size_t i = 0; i < pr.blocks(); ++i) {
    f.b.push_back(matmul(pr.u, gaussian_fill(pr.rank, pr.rank, rng, sc)));
    f.a.push_back(matmul(gaussian_fill(pr.rank, pr.rank, rng, sc), pr.v));
  }
  return f;
}

// sum_i C_i (B_i A_i - X*)
inline DenseMatrix sensing_residual(const SensingProblem& pr,
                                    const SensingFactors& f) {
  DenseMatrix s(pr.c_ops.front().rows(), pr.x_star.cols());
  for (std::size_t i = 0; i < pr.blocks(); ++i) {
    s += matmul(pr.c_ops[i], matmul(f.b[i], f.a[i]) - pr.x_star);
  }
  return s;
}

inline double sensing_loss(const SensingProblem& pr, const SensingFactors& f) {
  return 0.5 * frobenius_norm_sq(sensing_residual(pr, f));
}

// || sum_i B_i A_i - X* ||_F^2
inline double recovery_error_sq(const SensingProblem& pr,
                                const SensingFactors& f) {
  DenseMatrix s = -1.0 * pr.x_star;
  for (std::size_t i = 0; i < pr.blocks(); ++i) s += matmul(f.b[i], f.a[i]);
  return frobenius_norm_sq(s);
}

struct BlockGrads {
  DenseMatrix grad_a;
  DenseMatrix grad_b;
};

/// grad_{A_i} = B_i^T C_i^T S and grad_{B_i} = C_i^T S A_i^T with S the
/// shared residual, all at the factors given. For the alternating
/// convention pass the already-updated A.
inline std::vector<BlockGrads> sensing_grads(const SensingProblem& pr,
                                             const SensingFactors& f) {
  const DenseMatrix s = sensing_residual(pr, f);
  std::vector<BlockGrads> g;
  for (std::size_t i = 0; i < pr.blocks(); ++i) {
    const DenseMatrix cts = matmul(transpose(pr.c_ops[i]), s);  // d x c
    g.push_back({matmul(transpose(f.b[i]), cts), matmul(cts, transpose(f.a[i]))});
  }
  return g;
}

// Scaled A half-step: A_i - eta (B_i^T B_i)^{-1} grad_{A_i}, all blocks.
inline SensingFactors scaled_a_half_step(const SensingProblem& pr,
                                         const SensingFactors& f, double eta) {
  const auto g = sensing_grads(pr, f);
  SensingFactors out = f;
  for (std::size_t i = 0; i < pr.blocks(); ++i) {
    axpy(-eta, projected_grad_a(g[i].grad_a, f.b[i], 1.0), out.a[i]);
  }
  return out;
}

// Scaled B half-step: B_i - eta grad_{B_i} (A_i A_i^T)^{-1}, all blocks.
inline SensingFactors scaled_b_half_step(const SensingProblem& pr,
                                         const SensingFactors& f, double eta) {
  const auto g = sensing_grads(pr, f);
  SensingFactors out = f;
  for (std::size_t i = 0; i < pr.blocks(); ++i) {
    axpy(-eta, projected_grad_b(g[i].grad_b, f.a[i], 1.0), out.b[i]);
  }
  return out;
}

/// One alternating iteration: A first, then B at the new A.
inline SensingFactors scaled_alt_step(const SensingProblem& pr,
                                      const SensingFactors& f, double eta) {
  return scaled_b_half_step(pr, scaled_a_half_step(pr, f, eta), eta);
}

/// Squared gradient norms in the local metrics, <G, (B^T B)^{-1} G> for A
/// and <G, G (A A^T)^{-1}> for B.
inline double precond_norm_sq_a(const DenseMatrix& grad_a, const DenseMatrix& b) {
  return frobenius_dot(grad_a, projected_grad_a(grad_a, b, 1.0));
}
inline double precond_norm_sq_b(const DenseMatrix& grad_b, const DenseMatrix& a) {
  return frobenius_dot(grad_b, projected_grad_b(grad_b, a, 1.0));
}

// 2 P (1 - delta)(eta - eta^2 (1 + delta + 1/P) / 2)
inline double contraction_rate(double eta, double delta_r, std::size_t p_blocks) {
  const double p = static_cast<double>(p_blocks);
  return 2.0 * p * (1.0 - delta_r) *
         (eta - eta * eta * (1.0 + delta_r + 1.0 / p) / 2.0);
}

inline double admissible_eta_max(double delta_r, std::size_t p_blocks) {
  return 1.0 / (1.0 + delta_r + 1.0 / static_cast<double>(p_blocks));
}

enum class CheckStatus { kPass, kFail, kNotApplicable };

inline std::string_view to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::kPass: return "pass";
    case CheckStatus::kFail: return "fail";
    case CheckStatus::kNotApplicable: return "guarantee not applicable";
  }
  return "?";
}

struct ContractionReport {
  double eta = 0.0;
  double eta_c = 0.0;
  double ratio_bound = 0.0;  // (1 - eta_c)^2
  std::vector<double> ratios;
  std::vector<double> losses;  // L_0, L_1, ...
  double max_ratio = 0.0;
  double initial_error_sq = 0.0;
  double final_error_sq = 0.0;
  double error_bound = 0.0;
  std::size_t iterations = 0;
  CheckStatus status = CheckStatus::kPass;
  std::string detail;
};

/// Runs scaled_alt_step and checks L_{k+1} <= (1 - eta_c)^2 L_k at every
/// iteration plus the final recovery bound
///   ||sum B A - X*||^2 <= (1+delta)/(1-delta) (1 - eta_c)^{2k} ||...||_0^2.
/// Iteration stops once the loss falls below 1e-26 L_0, where ratios only
/// measure rounding.
inline ContractionReport verify_contraction(const SensingProblem& pr,
                                            SensingFactors f, double eta,
                                            std::size_t iters,
                                            double tol = 1e-9) {
  ContractionReport rep;
  rep.eta = eta;
  const double delta = pr.delta_r;
  const std::size_t p = pr.blocks();
  rep.eta_c = contraction_rate(eta, delta, p);
  rep.ratio_bound = (1.0 - rep.eta_c) * (1.0 - rep.eta_c);
  rep.initial_error_sq = recovery_error_sq(pr, f);
  double loss = sensing_loss(pr, f);
  rep.losses.push_back(loss);
  if (!(eta >= 0.0 && eta <= admissible_eta_max(delta, p)) || delta >= 1.0) {
    rep.status = CheckStatus::kNotApplicable;
    rep.detail = fmt::format("eta {} outside [0, {}]", eta,
                             admissible_eta_max(delta, p));
  }
  const double floor = 1e-26 * loss;
  for (std::size_t k = 0; k < iters && loss > floor; ++k) {
    f = scaled_alt_step(pr, f, eta);
    const double next = sensing_loss(pr, f);
    const double ratio = next / loss;
    rep.ratios.push_back(ratio);
    rep.losses.push_back(next);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    if (rep.status == CheckStatus::kPass && ratio > rep.ratio_bound + tol) {
      rep.status = CheckStatus::kFail;
      rep.detail = fmt::format("iteration {}: ratio {} > bound {}", k + 1, ratio,
                               rep.ratio_bound);
    }
    loss = next;
    ++rep.iterations;
  }
  rep.final_error_sq = recovery_error_sq(pr, f);
  rep.error_bound = (1.0 + delta) / (1.0 - delta) *
                    std::pow(1.0 - rep.eta_c, 2.0 * static_cast<double>(rep.iterations)) *
                    rep.initial_error_sq;
  if (rep.status == CheckStatus::kPass &&
      rep.final_error_sq > rep.error_bound + 1e-12 * rep.initial_error_sq) {
    rep.status = CheckStatus::kFail;
    rep.detail = fmt::format("recovery error {} > bound {}", rep.final_error_sq,
                             rep.error_bound);
  }
  return rep;
}

struct HalfStepLosses {
  double before = 0.0;
  double after_a = 0.0;
  double after_b = 0.0;
};

inline HalfStepLosses half_step_losses(const SensingProblem& pr,
                                       const SensingFactors& f, double eta) {
  HalfStepLosses h;
  h.before = sensing_loss(pr, f);
  const SensingFactors mid = scaled_a_half_step(pr, f, eta);
  h.after_a = sensing_loss(pr, mid);
  h.after_b = sensing_loss(pr, scaled_b_half_step(pr, mid, eta));
  return h;
}

/// Distance of W* - W0 from the row space of A0, the floor on the error of
/// any update that keeps A frozen at A0.
inline double ffa_subspace_gap(const DenseMatrix& a0, const DenseMatrix& dw) {
  const DenseMatrix p = row_projector(a0);
  return frobenius_norm(dw - matmul(dw, p));
}

/// Remainder between a round-wise B-then-A cycle and the interleaved
/// update:
///   E = -eta (Pcol(B_next)(G_k - G_half) + (G_half - G_k) Prow(A_next)).
/// For an L-smooth loss ||E||_F <= 2 eta^2 L ||G_k||_F.
inline DenseMatrix rolora_remainder(const DenseMatrix& grad_k,
                                    const DenseMatrix& grad_half,
                                    const DenseMatrix& b_next,
                                    const DenseMatrix& a_next, double eta) {
  const DenseMatrix diff = grad_k - grad_half;
  DenseMatrix e = matmul(col_projector(b_next), diff);
  e -= matmul(diff, row_projector(a_next));
  return -eta * e;
}

inline double rolora_remainder_bound(double eta, double smoothness,
                                     const DenseMatrix& grad_k) {
  return 2.0 * eta * eta * smoothness * frobenius_norm(grad_k);
}

}  // namespace lalora
