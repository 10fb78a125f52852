// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "lalora/dp_mech.hpp"

namespace lalora {

/// Renyi-DP curve rho(lambda) on an ascending grid of orders.
struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> values;
};

// Integer orders 2..512.
inline std::vector<double> default_orders() {
  std::vector<double> o;
  for (int l = 2; l <= 512; ++l) o.push_back(static_cast<double>(l));
  return o;
}

inline double rdp_gaussian(double sigma, double order) {
  if (!(sigma > 0.0)) throw InvalidArgument("rdp_gaussian: sigma must be > 0");
  if (!(order > 1.0)) throw InvalidArgument("rdp_gaussian: order must be > 1");
  return order / (2.0 * sigma * sigma);
}

namespace detail {

// log(exp(x) - 1) for x > 0.
inline double log_expm1(double x) {
  return x > 30.0 ? x + std::log1p(-std::exp(-x)) : std::log(std::expm1(x));
}

// log(1 + exp(x)).
inline double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

/// Integer-order RDP bound of the Poisson-subsampled Gaussian mechanism:
///   rho = log( sum_j C(l,j) (1-q)^(l-j) q^j exp(j(j-1)/(2 sigma^2)) ) / (l-1).
///
/// The j = 0 and j = 1 terms are folded into the leading 1 using the
/// binomial identity, leaving 1 + sum_{j>=2} C(l,j)(1-q)^(l-j) q^j
/// expm1(j(j-1)/(2 sigma^2)). Every remaining term is positive, so the sum
/// is accumulated in log space with no cancellation.
inline double rdp_subsampled_gaussian(double sigma, double rate, int order) {
  if (!(sigma > 0.0)) {
    throw InvalidArgument("rdp_subsampled_gaussian: sigma must be > 0");
  }
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw InvalidArgument("rdp_subsampled_gaussian: rate must be in [0, 1]");
  }
  if (order < 2) {
    throw InvalidArgument("rdp_subsampled_gaussian: order must be an integer >= 2");
  }
  if (rate == 0.0) return 0.0;
  const double l = static_cast<double>(order);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double log_q = std::log(rate);
  const double log_1mq = rate < 1.0 ? std::log1p(-rate) : 0.0;

  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(order));
  for (int j = 2; j <= order; ++j) {
    if (rate == 1.0 && j < order) continue;  // (1-q)^(l-j) vanishes
    const double jd = static_cast<double>(j);
    const double log_binom =
        std::lgamma(l + 1.0) - std::lgamma(jd + 1.0) - std::lgamma(l - jd + 1.0);
    const double t = log_binom + (l - jd) * log_1mq + jd * log_q +
                     detail::log_expm1(jd * (jd - 1.0) * inv2s2);
    terms.push_back(t);
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double t : terms) mx = std::max(mx, t);
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  const double log_s = mx + std::log(s);
  return detail::log1p_exp(log_s) / (l - 1.0);
}

inline RdpCurve subsampled_gaussian_curve(double sigma, double rate,
                                          const std::vector<double>& orders =
                                              default_orders()) {
  RdpCurve c;
  c.orders = orders;
  c.values.reserve(orders.size());
  for (double o : orders) {
    const int oi = static_cast<int>(o);
    if (static_cast<double>(oi) != o) {
      throw InvalidArgument("subsampled_gaussian_curve: orders must be integers");
    }
    c.values.push_back(rdp_subsampled_gaussian(sigma, rate, oi));
  }
  return c;
}

// RDP adds under composition.
inline RdpCurve compose(const RdpCurve& c, std::size_t steps) {
  RdpCurve out = c;
  for (double& v : out.values) v *= static_cast<double>(steps);
  return out;
}

struct DpConversion {
  double epsilon = 0.0;
  double argmin_order = 0.0;
};

/// epsilon(delta) = min over the grid of rho(l) + log(1/delta)/(l-1).
inline DpConversion rdp_to_dp(const RdpCurve& c, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidArgument("rdp_to_dp: delta must be in (0, 1)");
  }
  if (c.orders.empty() || c.orders.size() != c.values.size()) {
    throw InvalidArgument("rdp_to_dp: empty or ragged curve");
  }
  DpConversion best{std::numeric_limits<double>::infinity(), 0.0};
  const double log_inv_delta = std::log(1.0 / delta);
  for (std::size_t i = 0; i < c.orders.size(); ++i) {
    const double eps = c.values[i] + log_inv_delta / (c.orders[i] - 1.0);
    if (eps < best.epsilon) best = {eps, c.orders[i]};
  }
  return best;
}

struct PrivacyLedger {
  std::size_t steps_composed = 0;
  double sigma = 0.0;
  double rate = 0.0;
  RdpCurve curve;
  double epsilon = 0.0;
  double delta = 0.0;
  double argmin_order = 0.0;
};

/// Accounts T * K privatized steps. Each step releases one privatized
/// gradient per client whether it touches one factor or both.
inline PrivacyLedger account_steps(double sigma, double rate, double delta,
                                   std::size_t steps) {
  if (!(sigma > 0.0)) {
    throw InvalidArgument("account: sigma = 0 is non-private, no epsilon exists");
  }
  PrivacyLedger led;
  led.steps_composed = steps;
  led.sigma = sigma;
  led.rate = rate;
  led.delta = delta;
  led.curve = compose(subsampled_gaussian_curve(sigma, rate), steps);
  const DpConversion conv = rdp_to_dp(led.curve, delta);
  led.epsilon = conv.epsilon;
  led.argmin_order = conv.argmin_order;
  return led;
}

inline PrivacyLedger account_training(const PrivacySpec& spec,
                                      std::size_t t_rounds,
                                      std::size_t k_steps) {
  return account_steps(spec.sigma, spec.batch_fraction, spec.delta,
                       t_rounds * k_steps);
}

/// Running epsilon after each of 1..n_steps steps, sharing one per-step
/// curve.
class RunningAccountant {
 public:
  RunningAccountant(double sigma, double rate, double delta)
      : delta_(delta), step_curve_(subsampled_gaussian_curve(sigma, rate)) {}

  double epsilon_after(std::size_t steps) const {
    return rdp_to_dp(compose(step_curve_, steps), delta_).epsilon;
  }

 private:
  double delta_;
  RdpCurve step_curve_;
};

/// A sigma in [1e-2, 1e3] with |eps(sigma) - target| <= 1e-3 * target,
/// found by bisection in log sigma.
inline double calibrate_sigma(double epsilon_target, double delta,
                              std::size_t t_rounds, std::size_t k_steps,
                              double rate) {
  if (!(epsilon_target > 0.0)) {
    throw InvalidArgument("calibrate_sigma: epsilon_target must be > 0");
  }
  const std::size_t steps = t_rounds * k_steps;
  if (steps == 0) throw InvalidArgument("calibrate_sigma: no steps to account");
  auto eps_at = [&](double s) {
    return account_steps(s, rate, delta, steps).epsilon;
  };
  double lo = 1e-2;
  double hi = 1e3;
  const double eps_lo = eps_at(lo);
  const double eps_hi = eps_at(hi);
  if (eps_hi > epsilon_target || eps_lo < epsilon_target) {
    throw InvalidArgument(fmt::format(
        "calibrate_sigma: target {} outside [{}, {}] reachable for sigma in "
        "[1e-2, 1e3]",
        epsilon_target, eps_hi, eps_lo));
  }
  const double tol = 1e-3 * epsilon_target;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double e = eps_at(mid);
    if (std::abs(e - epsilon_target) <= tol) return mid;
    // Larger sigma, smaller epsilon.
    if (e > epsilon_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  throw NumericFailure("calibrate_sigma: bisection did not converge");
}

struct ServerView {
  double epsilon = 0.0;
  double delta = 0.0;
};

// Guarantee toward a third party observing the server:
// eps_s = eps * sqrt(N / q), delta_s = (delta / 2)(1 / q + 1).
inline ServerView server_view(double epsilon, double delta,
                              std::size_t n_clients, double client_rate) {
  if (!(client_rate > 0.0 && client_rate <= 1.0)) {
    throw InvalidArgument("server_view: client_rate must be in (0, 1]");
  }
  return {epsilon * std::sqrt(static_cast<double>(n_clients) / client_rate),
          (delta / 2.0) * (1.0 / client_rate + 1.0)};
}

}  // namespace lalora
