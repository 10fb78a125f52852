// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cstdint>

#include "lalora/lalora.hpp"

namespace lalora::tools {

struct TheoryOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 10;
  double eta = 0.4;
  std::size_t iters = 60;
};

namespace detail {

inline Json status(bool ok) { return ok ? "pass" : "fail"; }

// Random m x k matrix with full rank k (Gaussian entries, full rank with
// probability one; checked by the callers' solves).
inline DenseMatrix rand_mat(std::size_t r, std::size_t c, SeededRng& rng) {
  return gaussian_fill(r, c, rng, 1.0);
}

}  // namespace detail

// Least-squares optimality of the projected gradients: the residual of the
// normal equations must vanish.
inline Json report_projected_grads(const TheoryOptions& o) {
  SeededRng rng(o.seed, {0, 0, 0, Purpose::kProbe});
  double worst = 0.0;
  for (std::size_t t = 0; t < 100; ++t) {
    const std::size_t r = 1 + rng.below(8);
    const std::size_t m = r + rng.below(33 - r);
    const std::size_t n = r + rng.below(33 - r);
    const double s = 0.5 + 2.0 * rng.uniform();
    const DenseMatrix a = detail::rand_mat(r, n, rng);
    const DenseMatrix b = detail::rand_mat(m, r, rng);
    const DenseMatrix gw = detail::rand_mat(m, n, rng);
    const FactorGrads fg = factor_grads(gw, b, a, s);
    const DenseMatrix pb = projected_grad_b(fg.grad_b, a, s);
    const DenseMatrix pa = projected_grad_a(fg.grad_a, b, s);
    // d/dG ||s G A - gw||^2 = 0  <=>  (s G A - gw) A^T = 0.
    const DenseMatrix rb = matmul(s * matmul(pb, a) - gw, transpose(a));
    const DenseMatrix ra = matmul(transpose(b), s * matmul(b, pa) - gw);
    const double scale_b = frobenius_norm(gw) * frobenius_norm(a);
    const double scale_a = frobenius_norm(gw) * frobenius_norm(b);
    worst = std::max({worst, frobenius_norm(rb) / scale_b,
                      frobenius_norm(ra) / scale_a});
  }
  Json j;
  j["instances"] = 100;
  j["max_normal_equation_residual"] = worst;
  j["status"] = detail::status(worst <= 1e-8);
  return j;
}

// Alternating vs joint full-weight updates on a quadratic loss.
inline Json report_update_forms(const TheoryOptions& o) {
  SeededRng rng(o.seed, {0, 1, 0, Purpose::kProbe});
  const std::size_t m = 8, n = 8, r = 2;
  LoraAdapter ad;
  ad.alpha = 2.0;
  ad.w0 = detail::rand_mat(m, n, rng);
  ad.a = detail::rand_mat(r, n, rng);
  ad.b = detail::rand_mat(m, r, rng);
  const DenseMatrix y = detail::rand_mat(m, n, rng);
  const double s = ad.scale();
  const double eta = 0.05;
  // L(W) = 1/2 ||W - Y||^2
  const auto grad_at = [&](const DenseMatrix& b, const DenseMatrix& a) {
    return effective_weight(ad.w0, b, a, s) - y;
  };
  const DenseMatrix g_k = grad_at(ad.b, ad.a);
  DenseMatrix b1 = ad.b;
  axpy(-eta, projected_grad_b(factor_grads(g_k, ad.b, ad.a, s).grad_b, ad.a, s), b1);
  const DenseMatrix g_half = grad_at(b1, ad.a);
  DenseMatrix a1 = ad.a;
  axpy(-eta, projected_grad_a(factor_grads(g_half, b1, ad.a, s).grad_a, b1, s), a1);
  const DenseMatrix simulated = grad_at(b1, a1) - g_k;  // W_{k+1} - W_k

  const UpdateForms f = full_weight_update_forms(ad, g_k, g_half, eta);
  const double err = frobenius_norm(simulated - f.alternating_delta);
  const DenseMatrix d1 = alternating_projection_delta(g_k, g_half, ad.a, b1, eta);
  const DenseMatrix d2 = alternating_projection_delta(g_k, g_half, ad.a, b1, 2 * eta);
  const double lin = relative_error(d2, 2.0 * d1);
  const UpdateForms f2 = full_weight_update_forms(ad, g_k, g_k, 2 * eta);
  const UpdateForms f1 = full_weight_update_forms(ad, g_k, g_k, eta);
  const double joint_dev = relative_error(f2.joint_delta, 2.0 * f1.joint_delta);
  Json j;
  j["two_half_steps_vs_projection_form"] = err;
  j["alternating_linearity_error"] = lin;
  j["joint_nonlinearity"] = joint_dev;
  j["cross_term_norm"] = frobenius_norm(f1.cross_term);
  j["status"] = detail::status(err <= 1e-10 && lin <= 1e-12 && joint_dev > 1e-8);
  return j;
}

inline Json report_contraction(const TheoryOptions& o) {
  Json runs = Json::array();
  bool all = true;
  double worst_ratio = 0.0;
  double worst_err = 0.0;
  double generic_worst = 0.0;
  for (std::size_t sd = 0; sd < o.seeds; ++sd) {
    SeededRng rng(o.seed + sd, {0, 2, 0, Purpose::kProbe});
    const SensingProblem pr = gen_sensing(24, 16, 12, 3, 1, SensingKind::kOrthonormal, rng);
    const ContractionReport rep =
        verify_contraction(pr, aligned_factors(pr, rng), o.eta, o.iters);
    const double err = std::sqrt(rep.final_error_sq);
    all = all && rep.status == CheckStatus::kPass && err < 1e-6;
    worst_ratio = std::max(worst_ratio, rep.max_ratio);
    worst_err = std::max(worst_err, err);
    Json r;
    r["seed"] = o.seed + sd;
    r["max_ratio"] = rep.max_ratio;
    r["iterations"] = rep.iterations;
    r["recovery_error"] = err;
    r["status"] = std::string(to_string(rep.status));
    runs.push_back(r);

    const ContractionReport gen =
        verify_contraction(pr, random_factors(pr, 0.5, rng), o.eta, o.iters);
    generic_worst = std::max(generic_worst, gen.max_ratio);
  }
  Json j;
  j["eta"] = o.eta;
  j["eta_c"] = contraction_rate(o.eta, 0.0, 1);
  j["ratio_bound"] = std::pow(1.0 - contraction_rate(o.eta, 0.0, 1), 2.0);
  j["init"] = "aligned";
  j["runs"] = runs;
  j["max_ratio"] = worst_ratio;
  j["max_recovery_error"] = worst_err;
  j["generic_init_max_ratio_informational"] = generic_worst;
  j["status"] = detail::status(all);
  return j;
}

inline Json report_half_steps(const TheoryOptions& o) {
  std::size_t violations = 0;
  Json runs = Json::array();
  for (std::size_t sd = 0; sd < o.seeds; ++sd) {
    SeededRng rng(o.seed + sd, {0, 3, 0, Purpose::kProbe});
    const std::size_t d = 16, c = 12, r = 3;
    const std::size_t n = 4 * r * (d + c) / d;
    SensingProblem pr = gen_sensing(n, d, c, r, 1, SensingKind::kGaussian, rng);
    pr.delta_r = estimate_rip_delta(pr, 200, rng);
    const double eta = admissible_eta_max(pr.delta_r, 1);
    SensingFactors f = random_factors(pr, 0.5, rng);
    std::size_t v = 0;
    for (std::size_t k = 0; k < 50; ++k) {
      const HalfStepLosses h = half_step_losses(pr, f, eta);
      if (h.after_a > h.before) ++v;
      if (h.after_b > h.after_a) ++v;
      f = scaled_alt_step(pr, f, eta);
    }
    violations += v;
    Json rr;
    rr["delta_estimate"] = pr.delta_r;
    rr["eta"] = eta;
    rr["violations"] = v;
    runs.push_back(rr);
  }
  Json j;
  j["runs"] = runs;
  j["violations"] = violations;
  j["status"] = detail::status(violations == 0);
  return j;
}

inline Json report_corollary(const TheoryOptions& o) {
  SeededRng rng(o.seed, {0, 4, 0, Purpose::kProbe});
  const std::size_t m = 10, n = 12, r = 3;
  const DenseMatrix a0 = detail::rand_mat(r, n, rng);
  const DenseMatrix inside = matmul(detail::rand_mat(m, r, rng), a0);
  const DenseMatrix p = row_projector(a0);
  const DenseMatrix raw = detail::rand_mat(m, n, rng);
  const DenseMatrix outside = raw - matmul(raw, p);
  const double gap_in = ffa_subspace_gap(a0, inside);
  const double gap_out = ffa_subspace_gap(a0, outside);
  const double rel_out = std::abs(gap_out - frobenius_norm(outside)) / frobenius_norm(outside);

  std::size_t violations = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < 100; ++t) {
    // L(W) = 1/2 ||M (W - Y)||^2 has smoothness ||M||_2^2.
    const DenseMatrix mm = detail::rand_mat(m, m, rng);
    const DenseMatrix h = matmul(transpose(mm), mm);
    const double smooth = spectral_norm(h);
    const DenseMatrix y = detail::rand_mat(m, n, rng);
    const DenseMatrix w = detail::rand_mat(m, n, rng);
    const DenseMatrix b1 = detail::rand_mat(m, r, rng);
    const DenseMatrix a1 = detail::rand_mat(r, n, rng);
    const double eta = 0.5 * rng.uniform() / smooth;
    const DenseMatrix gk = matmul(h, w - y);
    DenseMatrix w_half = w;
    axpy(-eta, matmul(col_projector(b1), gk), w_half);
    const DenseMatrix gh = matmul(h, w_half - y);
    const double e = frobenius_norm(rolora_remainder(gk, gh, b1, a1, eta));
    const double bound = rolora_remainder_bound(eta, smooth, gk);
    worst = std::max(worst, e / bound);
    if (e > bound) ++violations;
  }
  Json j;
  j["ffa_gap_inside"] = gap_in;
  j["ffa_gap_orthogonal_rel_error"] = rel_out;
  j["rolora_instances"] = 100;
  j["rolora_max_remainder_over_bound"] = worst;
  j["rolora_violations"] = violations;
  j["status"] = detail::status(gap_in <= 1e-10 * frobenius_norm(inside) &&
                               rel_out <= 1e-10 && violations == 0);
  return j;
}

inline Json theory_report(const TheoryOptions& o) {
  Json j;
  j["projected_gradients"] = report_projected_grads(o);
  j["update_forms"] = report_update_forms(o);
  j["contraction"] = report_contraction(o);
  j["half_step_descent"] = report_half_steps(o);
  j["ffa_rolora"] = report_corollary(o);
  bool ok = true;
  for (const auto& [k, v] : j.items()) ok = ok && v.at("status") == "pass";
  j["status"] = detail::status(ok);
  return j;
}

}  // namespace lalora::tools
