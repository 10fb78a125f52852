// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "lalora/numkit/conv.hpp"
#include "lalora/numkit/linalg.hpp"
#include "lalora/numkit/matrix.hpp"
#include "lalora/numkit/rng.hpp"
#include "oracles.hpp"

using namespace lalora;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  SeededRng rng(seed);
  return gaussian_fill(r, c, rng, 1.0);
}

DenseMatrix random_spd(std::size_t n, std::uint64_t seed) {
  const DenseMatrix m = random_matrix(n + 3, n, seed);
  DenseMatrix g = matmul(transpose(m), m);
  for (std::size_t i = 0; i < n; ++i) g(i, i) += 0.1;
  return g;
}

}  // namespace

TEST(DenseMatrix, FromDataRejectsBadInput) {
  EXPECT_THROW(DenseMatrix::from_data(2, 2, {1, 2, 3}), DimensionMismatch);
  EXPECT_THROW(DenseMatrix::from_data(1, 2, {1, NAN}), InvalidArgument);
  EXPECT_THROW(DenseMatrix::from_data(1, 1, {INFINITY}), InvalidArgument);
  EXPECT_THROW(DenseMatrix::from_rows({{1, 2}, {3}}), DimensionMismatch);
}

TEST(DenseMatrix, MatmulSmallExample) {
  const auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
  const auto b = DenseMatrix::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b), DenseMatrix::from_rows({{19, 22}, {43, 50}}));
  EXPECT_THROW(matmul(a, DenseMatrix(3, 2)), DimensionMismatch);
}

TEST(DenseMatrix, MatmulMatchesNaiveOracle) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    SeededRng rng(s);
    const std::size_t m = 1 + rng.below(20), k = 1 + rng.below(20), n = 1 + rng.below(20);
    const auto a = random_matrix(m, k, 100 + s);
    const auto b = random_matrix(k, n, 200 + s);
    EXPECT_LE(relative_error(matmul(a, b), oracle::naive_matmul(a, b)), 1e-14);
  }
}

TEST(DenseMatrix, MatmulIsBitReproducible) {
  const auto a = random_matrix(17, 9, 1);
  const auto b = random_matrix(9, 13, 2);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
}

TEST(DenseMatrix, TransposeIdentityAndNorms) {
  const auto a = random_matrix(5, 7, 3);
  EXPECT_EQ(transpose(transpose(a)), a);
  EXPECT_EQ(matmul(DenseMatrix::identity(5), a), a);
  const auto v = a.values();
  std::vector<double> sq;
  for (double x : v) sq.push_back(x * x);
  EXPECT_NEAR(frobenius_norm_sq(a), oracle::compensated_sum(sq), 1e-12);
  EXPECT_NEAR(frobenius_dot(a, a), frobenius_norm_sq(a), 1e-12);
  EXPECT_DOUBLE_EQ(trace(DenseMatrix::identity(4)), 4.0);
  EXPECT_EQ(max_abs(DenseMatrix::from_rows({{-3, 2}})), 3.0);
}

TEST(DenseMatrix, ArithmeticShapesChecked) {
  DenseMatrix a(2, 3), b(3, 2);
  EXPECT_THROW(a + b, DimensionMismatch);
  EXPECT_THROW(a - b, DimensionMismatch);
  EXPECT_THROW(axpy(1.0, b, a), DimensionMismatch);
  DenseMatrix c(2, 3, 1.0);
  axpy(2.0, c, a);
  EXPECT_EQ(a, DenseMatrix(2, 3, 2.0));
  EXPECT_FALSE(all_finite(DenseMatrix(1, 1, NAN)));
}

TEST(SeededRng, SameKeySameStream) {
  SeededRng a(42, {1, 2, 3, Purpose::kNoiseA});
  SeededRng b(42, {1, 2, 3, Purpose::kNoiseA});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SeededRng, DistinctKeysDistinctStreams) {
  std::set<std::uint64_t> first;
  for (std::uint64_t c = 0; c < 4; ++c) {
    for (std::uint64_t t = 0; t < 4; ++t) {
      for (std::uint64_t k = 0; k < 4; ++k) {
        for (auto p : {Purpose::kNoiseA, Purpose::kNoiseB, Purpose::kBatch}) {
          SeededRng r(7, {c, t, k, p});
          first.insert(r.next_u64());
        }
      }
    }
  }
  EXPECT_EQ(first.size(), 4u * 4u * 4u * 3u);
  EXPECT_NE(SeededRng(1).next_u64(), SeededRng(2).next_u64());
}

TEST(SeededRng, DeriveIgnoresParentPosition) {
  SeededRng root(9);
  SeededRng d1 = root.derive(1, 1, 1, Purpose::kBatch);
  for (int i = 0; i < 10; ++i) root.next_u64();
  SeededRng d2 = root.derive(1, 1, 1, Purpose::kBatch);
  EXPECT_EQ(d1.next_u64(), d2.next_u64());
}

TEST(SeededRng, UniformAndNormalMoments) {
  SeededRng rng(3);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(SeededRng, BelowIsUniform) {
  SeededRng rng(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
  EXPECT_THROW(rng.below(0), InvalidArgument);
}

TEST(SeededRng, GammaVariateMean) {
  for (double shape : {0.1, 0.5, 1.0, 3.0}) {
    SeededRng rng(11);
    double s = 0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) s += std::exp(rng.log_gamma_variate(shape));
    EXPECT_NEAR(s / n, shape, 0.05 * shape + 0.01) << shape;
  }
}

TEST(SeededRng, SamplingWithoutReplacement) {
  SeededRng rng(1);
  const std::vector<int> pool{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto s = sample_without_replacement(pool, 6, rng);
  EXPECT_EQ(std::set<int>(s.begin(), s.end()).size(), 6u);
  EXPECT_THROW(sample_without_replacement(pool, 11, rng), InvalidArgument);
  auto sh = shuffled(pool, rng);
  std::sort(sh.begin(), sh.end());
  EXPECT_EQ(sh, pool);
}

TEST(SeededRng, GaussianFillZeroStd) {
  SeededRng rng(1);
  EXPECT_EQ(gaussian_fill(3, 3, rng, 0.0), DenseMatrix(3, 3));
  EXPECT_EQ(rng.counter(), 0u);
  EXPECT_THROW(gaussian_fill(1, 1, rng, -1.0), InvalidArgument);
}

TEST(SolveSpd, MatchesEigenLlt) {
  for (std::size_t n : {1u, 2u, 5u, 16u, 40u}) {
    const auto g = random_spd(n, n);
    const auto rhs = random_matrix(n, 3, n + 1);
    const auto x = solve_spd(g, rhs);
    const Eigen::MatrixXd ref = oracle::to_eigen(g).llt().solve(oracle::to_eigen(rhs));
    EXPECT_LE(relative_error(x, oracle::from_eigen(ref)), 1e-10) << n;
    EXPECT_LE(relative_error(matmul(g, x), rhs), 1e-10);
  }
}

TEST(SolveSpd, RightSolve) {
  const auto g = random_spd(4, 1);
  const auto rhs = random_matrix(6, 4, 2);
  const auto x = solve_spd_right(g, rhs);
  EXPECT_LE(relative_error(matmul(x, g), rhs), 1e-10);
}

TEST(SolveSpd, RejectsSingularAndAsymmetric) {
  const auto v = random_matrix(4, 1, 3);
  const auto rank1 = matmul(v, transpose(v));
  EXPECT_THROW(solve_spd(rank1, DenseMatrix(4, 1, 1.0)), NotSpd);
  auto asym = random_spd(3, 4);
  asym(0, 1) += 1.0;
  EXPECT_THROW(solve_spd(asym, DenseMatrix(3, 1)), InvalidArgument);
  EXPECT_THROW(solve_spd(DenseMatrix(2, 3), DenseMatrix(2, 1)), DimensionMismatch);
  EXPECT_THROW(solve_spd(DenseMatrix::identity(513), DenseMatrix(513, 1)), InvalidArgument);
}

TEST(SolveSpd, RidgeIsOptIn) {
  const auto v = random_matrix(3, 2, 5);
  const auto g = matmul(v, transpose(v));  // rank 2 of 3
  EXPECT_THROW(solve_spd(g, DenseMatrix(3, 1, 1.0)), NotSpd);
  EXPECT_NO_THROW(solve_spd(g, DenseMatrix(3, 1, 1.0), {.ridge = true}));
}

TEST(PowerIteration, KnownSpectrum) {
  DenseMatrix d(4, 4);
  d(0, 0) = 1;
  d(1, 1) = 7;
  d(2, 2) = 3;
  d(3, 3) = 2;
  const auto res = power_iteration(d, 500, 1e-12);
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.eigenvalue, 7.0, 1e-8);
}

TEST(PowerIteration, MatchesEigenOnRandomSpd) {
  const auto g = random_spd(20, 8);
  const auto res = power_iteration(g, 5000, 1e-12);
  EXPECT_NEAR(res.eigenvalue, oracle::max_eigenvalue_sym(g),
              1e-6 * oracle::max_eigenvalue_sym(g));
}

TEST(SpectralNorm, MatchesSvd) {
  const auto m = random_matrix(9, 6, 4);
  EXPECT_NEAR(spectral_norm(m), oracle::spectral_norm(m), 1e-6 * oracle::spectral_norm(m));
}

TEST(OrthonormalColumns, GramIsIdentity) {
  const auto q = orthonormal_columns(random_matrix(12, 5, 6));
  EXPECT_LE(max_abs(matmul(transpose(q), q) - DenseMatrix::identity(5)), 1e-13);
}

TEST(Conv1d, MatchesPaddedOracle) {
  SeededRng rng(2);
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 31u}) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    for (const auto& k : {std::vector<double>{0.25, 0.5, 0.25},
                          std::vector<double>{1, 4, 6, 4, 1},
                          std::vector<double>{0.1, -0.3, 2.0, 0.7, 0.2}}) {
      for (bool mirror : {true, false}) {
        const auto mode = mirror ? Padding::kSymmetric : Padding::kReplicate;
        const auto got = conv1d_symmetric(x, k, mode);
        const auto want = oracle::padded_conv(x, k, mirror);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(got[i], want[i], 1e-13);
      }
    }
  }
}

TEST(Conv1d, EdgeImpulse) {
  const std::vector<double> x{1, 0, 0, 0, 0};
  const std::vector<double> g5{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  EXPECT_EQ(conv1d_symmetric(x, g5, Padding::kSymmetric)[0], 10.0 / 16);
  EXPECT_EQ(conv1d_symmetric(x, g5, Padding::kReplicate)[0], 11.0 / 16);
}

TEST(Conv1d, ConstantSignalExact) {
  const std::vector<double> g5{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  SeededRng rng(8);
  for (int t = 0; t < 1000; ++t) {
    const double c = rng.normal() * std::pow(10.0, rng.normal() * 3);
    const std::vector<double> x(7, c);
    for (double v : conv1d_symmetric(x, g5)) ASSERT_EQ(v, c);
  }
}

TEST(Conv1d, RejectsBadArguments) {
  const std::vector<double> x{1, 2};
  EXPECT_THROW(conv1d_symmetric(x, std::vector<double>{0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(conv1d_symmetric(std::vector<double>{}, std::vector<double>{1.0}),
               InvalidArgument);
}
