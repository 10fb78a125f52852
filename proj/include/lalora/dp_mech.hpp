// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "lalora/numkit/matrix.hpp"
#include "lalora/numkit/rng.hpp"

namespace lalora {

/// Parameters of the per-sample Gaussian mechanism.
///
/// sigma = 0 is the non-private mode: privatize() returns the clipped mean
/// and the accountant refuses to report an epsilon.
struct PrivacySpec {
  double clip_c = 1.0;
  double sigma = 0.0;
  double batch_fraction = 0.1;       // b
  std::size_t local_dataset_size = 1;  // R
  double delta = 1e-5;
  std::optional<double> epsilon_target;

  bool is_private() const { return sigma > 0.0; }

  // Nominal mini-batch size floor(b * R).
  std::size_t batch_size() const {
    return static_cast<std::size_t>(
        std::floor(batch_fraction * static_cast<double>(local_dataset_size)));
  }

  // bR, the denominator of the noise scale.
  double noise_denominator() const {
    return batch_fraction * static_cast<double>(local_dataset_size);
  }

  void validate() const {
    if (!(clip_c > 0.0)) throw InvalidArgument("PrivacySpec: clip_c must be > 0");
    if (!(sigma >= 0.0)) throw InvalidArgument("PrivacySpec: sigma must be >= 0");
    if (!(batch_fraction > 0.0 && batch_fraction <= 1.0)) {
      throw InvalidArgument("PrivacySpec: batch_fraction must be in (0, 1]");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
      throw InvalidArgument("PrivacySpec: delta must be in (0, 1)");
    }
    if (batch_size() < 1) {
      throw InvalidArgument(fmt::format(
          "PrivacySpec: b*R = {}*{} < 1", batch_fraction, local_dataset_size));
    }
    if (epsilon_target && !(*epsilon_target > 0.0)) {
      throw InvalidArgument("PrivacySpec: epsilon_target must be > 0");
    }
  }
};

/// g / max(1, ||g||_F / c).
inline DenseMatrix clip(const DenseMatrix& g, double c) {
  if (!(c > 0.0)) throw InvalidArgument("clip: bound must be positive");
  const double norm = frobenius_norm(g);
  if (norm <= c) return g;
  return (c / norm) * g;
}

/// (1/n) sum_j clip(g_j) + (C / (bR)) * N(0, sigma^2), with n the number of
/// samples actually supplied.
inline DenseMatrix privatize(const std::vector<DenseMatrix>& per_sample,
                             const PrivacySpec& spec, SeededRng& rng) {
  if (per_sample.empty()) throw InvalidArgument("privatize: no samples");
  DenseMatrix acc(per_sample.front().rows(), per_sample.front().cols());
  for (const auto& g : per_sample) {
    if (!g.same_shape(acc)) {
      throw DimensionMismatch(fmt::format("privatize: sample shape {} vs {}",
                                          g.shape_string(), acc.shape_string()));
    }
    acc += clip(g, spec.clip_c);
  }
  DenseMatrix out = (1.0 / static_cast<double>(per_sample.size())) * acc;
  if (spec.sigma > 0.0) {
    const double scale = spec.clip_c / spec.noise_denominator();
    out += gaussian_fill(out.rows(), out.cols(), rng, scale * spec.sigma);
  }
  return out;
}

struct NoiseDecomposition {
  DenseMatrix linear_b_term;  // N_B A
  DenseMatrix linear_a_term;  // B N_A
  DenseMatrix cross_term;     // N_B N_A
  DenseMatrix total;          // (B + N_B)(A + N_A) - B A
};

inline NoiseDecomposition noise_decomposition(const DenseMatrix& b,
                                              const DenseMatrix& a,
                                              const DenseMatrix& n_b,
                                              const DenseMatrix& n_a) {
  if (!b.same_shape(n_b) || !a.same_shape(n_a) || b.cols() != a.rows()) {
    throw DimensionMismatch(fmt::format(
        "noise_decomposition: B {} N_B {} A {} N_A {}", b.shape_string(),
        n_b.shape_string(), a.shape_string(), n_a.shape_string()));
  }
  NoiseDecomposition d;
  d.linear_b_term = matmul(n_b, a);
  d.linear_a_term = matmul(b, n_a);
  d.cross_term = matmul(n_b, n_a);
  d.total = matmul(b + n_b, a + n_a) - matmul(b, a);
  return d;
}

enum class NoisyFactor { kBNoisy, kANoisy };

/// Perturbation of BA when only one factor carries noise: N_B A or B N_A.
/// No product of two noise matrices can appear.
inline DenseMatrix alternating_perturbation(NoisyFactor which,
                                            const DenseMatrix& b,
                                            const DenseMatrix& a,
                                            const DenseMatrix& noise) {
  if (which == NoisyFactor::kBNoisy) {
    if (!noise.same_shape(b)) {
      throw DimensionMismatch("alternating_perturbation: noise shape vs B");
    }
    return matmul(noise, a);
  }
  if (!noise.same_shape(a)) {
    throw DimensionMismatch("alternating_perturbation: noise shape vs A");
  }
  return matmul(b, noise);
}

/// Offline clip-bound calibration: the median of per-sample gradient norms
/// collected in a pilot run. Feeding the result back as a fixed clip_c keeps
/// the accounting valid; adapting C during private training would not.
inline double median_clip_bound(std::vector<double> norms) {
  if (norms.empty()) throw InvalidArgument("median_clip_bound: no norms");
  std::sort(norms.begin(), norms.end());
  const std::size_t n = norms.size();
  return n % 2 == 1 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
}

}  // namespace lalora
