// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>

#include <gtest/gtest.h>

#include "lalora/dp_mech.hpp"

using namespace lalora;

TEST(Clip, ScalesDownOnlyAboveBound) {
  const auto g = DenseMatrix::from_rows({{3, 4}});
  EXPECT_EQ(clip(g, 10.0), g);
  const auto c = clip(g, 1.0);
  EXPECT_NEAR(frobenius_norm(c), 1.0, 1e-15);
  EXPECT_NEAR(c(0, 0), 0.6, 1e-15);
  EXPECT_THROW(clip(g, 0.0), InvalidArgument);
}

TEST(Clip, ContractionAndIdempotence) {
  SeededRng rng(1);
  for (int t = 0; t < 500; ++t) {
    const auto g = gaussian_fill(3, 4, rng, std::exp(2 * rng.normal()));
    const double c = 0.1 + rng.uniform() * 3;
    const auto k = clip(g, c);
    EXPECT_LE(frobenius_norm(k), std::min(frobenius_norm(g), c) * (1 + 1e-15));
    EXPECT_LE(relative_error(clip(k, c), k), 4e-16);
  }
}

TEST(Privatize, SigmaZeroIsClippedMean) {
  PrivacySpec spec;
  spec.clip_c = 10.0;
  spec.batch_fraction = 0.5;
  spec.local_dataset_size = 4;
  SeededRng rng(2);
  const auto g1 = DenseMatrix::from_rows({{1, 2}});
  const auto g2 = DenseMatrix::from_rows({{3, 0}});
  EXPECT_EQ(privatize({g1, g2}, spec, rng), DenseMatrix::from_rows({{2, 1}}));
  EXPECT_EQ(rng.counter(), 0u);
  EXPECT_THROW(privatize({}, spec, rng), InvalidArgument);
  EXPECT_THROW(privatize({g1, DenseMatrix(2, 1)}, spec, rng), DimensionMismatch);
}

TEST(Privatize, NoiseScaleIsCSigmaOverBR) {
  PrivacySpec spec;
  spec.clip_c = 2.0;
  spec.sigma = 3.0;
  spec.batch_fraction = 0.1;
  spec.local_dataset_size = 50;  // bR = 5
  SeededRng rng(3);
  const std::vector<DenseMatrix> zero{DenseMatrix(100, 100)};
  const auto out = privatize(zero, spec, rng);
  const double var = frobenius_norm_sq(out) / static_cast<double>(out.size());
  const double want = std::pow(2.0 * 3.0 / 5.0, 2);
  EXPECT_NEAR(var, want, 0.03 * want);
}

TEST(Privatize, SensitivityBound) {
  PrivacySpec spec;
  spec.clip_c = 1.0;
  spec.batch_fraction = 0.25;
  spec.local_dataset_size = 16;  // bR = 4
  SeededRng rng(4);
  std::vector<DenseMatrix> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(gaussian_fill(3, 3, rng, 5.0));
  const auto base = privatize(batch, spec, rng);
  std::vector<DenseMatrix> swapped = batch;
  swapped.back() = gaussian_fill(3, 3, rng, 50.0);
  const auto other = privatize(swapped, spec, rng);
  // Replacing one of bR samples moves the mean by at most 2C / (bR).
  EXPECT_LE(frobenius_norm(other - base), 2.0 * spec.clip_c / 4.0 + 1e-15);
}

TEST(PrivacySpec, Validation) {
  PrivacySpec s;
  s.local_dataset_size = 100;
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.batch_size(), 10u);
  s.batch_fraction = 0.001;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.batch_fraction = 1.5;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = PrivacySpec{};
  s.local_dataset_size = 100;
  s.delta = 1.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.delta = 1e-5;
  s.epsilon_target = -1.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(NoiseDecomposition, TermsSumToTotal) {
  SeededRng rng(5);
  const auto b = gaussian_fill(6, 2, rng, 1.0), a = gaussian_fill(2, 7, rng, 1.0);
  const auto nb = gaussian_fill(6, 2, rng, 0.3), na = gaussian_fill(2, 7, rng, 0.3);
  const auto d = noise_decomposition(b, a, nb, na);
  EXPECT_LE(relative_error(d.linear_a_term + d.linear_b_term + d.cross_term, d.total), 1e-14);
  EXPECT_THROW(noise_decomposition(b, a, na, nb), DimensionMismatch);
}

TEST(AlternatingPerturbation, NoCrossTermBitExact) {
  SeededRng rng(6);
  for (int t = 0; t < 100; ++t) {
    const auto b = gaussian_fill(5, 3, rng, 1.0), a = gaussian_fill(3, 4, rng, 1.0);
    const auto nb = gaussian_fill(5, 3, rng, 1.0), na = gaussian_fill(3, 4, rng, 1.0);
    EXPECT_EQ(alternating_perturbation(NoisyFactor::kBNoisy, b, a, nb), matmul(nb, a));
    EXPECT_EQ(alternating_perturbation(NoisyFactor::kANoisy, b, a, na), matmul(b, na));
  }
  EXPECT_THROW(alternating_perturbation(NoisyFactor::kBNoisy, DenseMatrix(5, 3),
                                        DenseMatrix(3, 4), DenseMatrix(3, 4)),
               DimensionMismatch);
}

TEST(MedianClip, OddEven) {
  EXPECT_EQ(median_clip_bound({3, 1, 2}), 2.0);
  EXPECT_EQ(median_clip_bound({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median_clip_bound({}), InvalidArgument);
}
