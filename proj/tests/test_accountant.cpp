// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>

#include <gtest/gtest.h>

#include "lalora/accountant.hpp"
#include "oracles.hpp"

using namespace lalora;

TEST(RdpGaussian, Formula) {
  EXPECT_EQ(rdp_gaussian(1.0, 2.0), 1.0);
  EXPECT_EQ(rdp_gaussian(2.0, 2.0), 0.25);
  EXPECT_THROW(rdp_gaussian(0.0, 2.0), InvalidArgument);
  EXPECT_THROW(rdp_gaussian(1.0, 1.0), InvalidArgument);
}

TEST(RdpSubsampled, RateEdgeCases) {
  EXPECT_EQ(rdp_subsampled_gaussian(1.0, 0.0, 5), 0.0);
  // Full batch: the series collapses to the plain Gaussian mechanism.
  for (int l : {2, 3, 8}) {
    EXPECT_NEAR(rdp_subsampled_gaussian(1.3, 1.0, l), rdp_gaussian(1.3, l), 1e-12);
  }
  EXPECT_THROW(rdp_subsampled_gaussian(1.0, 0.1, 1), InvalidArgument);
  EXPECT_THROW(rdp_subsampled_gaussian(1.0, 1.1, 2), InvalidArgument);
}

TEST(RdpSubsampled, MatchesHighPrecisionSeries) {
  for (double sigma : {0.7, 1.0, 2.0, 5.0}) {
    for (double q : {0.001, 0.01, 0.1, 0.5}) {
      for (int l : {2, 3, 8, 32, 64}) {
        const double got = rdp_subsampled_gaussian(sigma, q, l);
        const double want = oracle::rdp_series_mp(sigma, q, l);
        EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, want)) << sigma << " " << q << " " << l;
      }
    }
  }
}

TEST(RdpSubsampled, NondecreasingInOrder) {
  for (double sigma : {0.5, 1.0, 4.0}) {
    for (double q : {0.01, 0.2}) {
      const auto c = subsampled_gaussian_curve(sigma, q);
      for (std::size_t i = 1; i < c.values.size(); ++i) {
        ASSERT_GE(c.values[i], c.values[i - 1] * (1 - 1e-12));
      }
    }
  }
}

TEST(Compose, Additive) {
  const auto c = subsampled_gaussian_curve(1.0, 0.1);
  const auto c0 = compose(c, 0);
  for (double v : c0.values) EXPECT_EQ(v, 0.0);
  const auto c2 = compose(c, 2);
  for (std::size_t i = 0; i < c.values.size(); ++i) EXPECT_EQ(c2.values[i], 2 * c.values[i]);
  const auto ab = compose(compose(c, 3), 5);
  const auto direct = compose(c, 15);
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    EXPECT_NEAR(ab.values[i], direct.values[i], 1e-12 * direct.values[i]);
  }
}

TEST(RdpToDp, DirectSubstitution) {
  const RdpCurve c{{2.0}, {1.0}};
  const auto d = rdp_to_dp(c, std::exp(-1.0));
  EXPECT_NEAR(d.epsilon, 2.0, 1e-15);
  EXPECT_EQ(d.argmin_order, 2.0);
  RdpCurve zero{default_orders(), std::vector<double>(511, 0.0)};
  EXPECT_NEAR(rdp_to_dp(zero, 1e-5).epsilon, std::log(1e5) / 511.0, 1e-15);
  EXPECT_THROW(rdp_to_dp(c, 0.0), InvalidArgument);
}

TEST(RdpToDp, GridCloseToFineSearch) {
  // One Gaussian step, sigma = 1.
  const auto c = subsampled_gaussian_curve(1.0, 1.0);
  const double grid = rdp_to_dp(c, 1e-5).epsilon;
  double fine = INFINITY;
  for (double l = 1.01; l < 512; l += 0.01) {
    fine = std::min(fine, l / 2.0 + std::log(1e5) / (l - 1.0));
  }
  EXPECT_NEAR(grid, fine, 0.01 * fine);
}

TEST(Accounting, MonotoneInSigmaAndSteps) {
  double prev = INFINITY;
  for (double sigma : {0.5, 0.8, 1.0, 2.0, 4.0}) {
    const double e = account_steps(sigma, 0.05, 1e-5, 500).epsilon;
    EXPECT_LT(e, prev);
    prev = e;
  }
  prev = 0.0;
  for (std::size_t steps : {1u, 10u, 100u, 1000u}) {
    const double e = account_steps(1.0, 0.05, 1e-5, steps).epsilon;
    EXPECT_GT(e, prev);
    prev = e;
  }
  EXPECT_LT(account_steps(1.0, 0.01, 1e-5, 100).epsilon,
            account_steps(1.0, 0.05, 1e-5, 100).epsilon);
  EXPECT_THROW(account_steps(0.0, 0.1, 1e-5, 1), InvalidArgument);
}

TEST(Accounting, PaperSigmaOrdering) {
  // b = 16 / 781: epsilon must decrease through the listed sigmas.
  const double b = 16.0 / 781.0;
  const double e1 = account_steps(0.195, b, 1e-5, 2000).epsilon;
  const double e2 = account_steps(0.29, b, 1e-5, 2000).epsilon;
  const double e3 = account_steps(0.56, b, 1e-5, 2000).epsilon;
  EXPECT_GT(e1, e2);
  EXPECT_GT(e2, e3);
}

TEST(Accounting, TrainingComposesTK) {
  PrivacySpec spec;
  spec.sigma = 1.2;
  spec.batch_fraction = 0.05;
  const auto led = account_training(spec, 7, 3);
  EXPECT_EQ(led.steps_composed, 21u);
  EXPECT_EQ(led.epsilon, account_steps(1.2, 0.05, 1e-5, 21).epsilon);
  RunningAccountant run(1.2, 0.05, 1e-5);
  EXPECT_EQ(run.epsilon_after(21), led.epsilon);
}

TEST(Calibrate, RoundTripAndMonotone) {
  double prev_sigma = INFINITY;
  for (double eps : {1.0, 2.0, 3.0}) {
    const double sigma = calibrate_sigma(eps, 1e-5, 50, 20, 0.02);
    const double back = account_steps(sigma, 0.02, 1e-5, 1000).epsilon;
    EXPECT_NEAR(back, eps, 0.01 * eps);
    EXPECT_LT(sigma, prev_sigma);
    prev_sigma = sigma;
  }
  EXPECT_GT(calibrate_sigma(1.0, 1e-5, 100, 20, 0.02), calibrate_sigma(1.0, 1e-5, 50, 20, 0.02));
  EXPECT_THROW(calibrate_sigma(1e-9, 1e-5, 50, 20, 0.02), InvalidArgument);
  EXPECT_THROW(calibrate_sigma(0.0, 1e-5, 50, 20, 0.02), InvalidArgument);
}

TEST(ServerView, Arithmetic) {
  const auto v = server_view(1.0, 1e-5, 8, 0.5);
  EXPECT_EQ(v.epsilon, 4.0);
  EXPECT_DOUBLE_EQ(v.delta, 0.5e-5 * 3.0);
  EXPECT_THROW(server_view(1.0, 1e-5, 8, 0.0), InvalidArgument);
}
