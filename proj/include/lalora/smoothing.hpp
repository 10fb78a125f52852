// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lalora/numkit/conv.hpp"
#include "lalora/numkit/matrix.hpp"

namespace lalora {

enum class FilterKind { kNone, kBinomial3, kBinomial5, kBinomial7, kGaussian };

inline std::string_view to_string(FilterKind k) {
  switch (k) {
    case FilterKind::kNone: return "none";
    case FilterKind::kBinomial3: return "binomial3";
    case FilterKind::kBinomial5: return "binomial5";
    case FilterKind::kBinomial7: return "binomial7";
    case FilterKind::kGaussian: return "gaussian";
  }
  return "none";
}

inline FilterKind parse_filter_kind(std::string_view s) {
  if (s == "none") return FilterKind::kNone;
  if (s == "binomial3") return FilterKind::kBinomial3;
  if (s == "binomial5") return FilterKind::kBinomial5;
  if (s == "binomial7") return FilterKind::kBinomial7;
  if (s == "gaussian") return FilterKind::kGaussian;
  throw InvalidArgument("unknown filter kind '" + std::string(s) + "'");
}

/// Normalized, symmetric, odd-length low-pass kernel.
struct SmoothingKernel {
  std::vector<double> taps;
  FilterKind kind = FilterKind::kBinomial5;
  double sigma_s = 0.0;  // Gaussian only
  Padding padding = Padding::kSymmetric;

  std::size_t width() const { return taps.size(); }
  double energy() const {
    double e = 0.0;
    for (double t : taps) e += t * t;
    return e;
  }
};

/// Binomial taps C(w-1, i) / 2^(w-1). The powers of two make every tap
/// exactly representable.
inline SmoothingKernel binomial_kernel(std::size_t width) {
  SmoothingKernel k;
  switch (width) {
    case 3:
      k.kind = FilterKind::kBinomial3;
      k.taps = {1.0, 2.0, 1.0};
      break;
    case 5:
      k.kind = FilterKind::kBinomial5;
      k.taps = {1.0, 4.0, 6.0, 4.0, 1.0};
      break;
    case 7:
      k.kind = FilterKind::kBinomial7;
      k.taps = {1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0};
      break;
    default:
      throw InvalidArgument(fmt::format(
          "binomial_kernel: width {} unsupported (3, 5 or 7)", width));
  }
  const double denom = std::ldexp(1.0, static_cast<int>(width) - 1);
  for (double& t : k.taps) t /= denom;
  return k;
}

/// Truncated Gaussian exp(-i^2 / (2 sigma_s^2)) on [-radius, radius],
/// renormalized. sigma_s is measured in tap-index units.
inline SmoothingKernel gaussian_kernel(double sigma_s, std::size_t radius = 2) {
  if (!(sigma_s > 0.0)) {
    throw InvalidArgument("gaussian_kernel: sigma_s must be positive");
  }
  if (radius < 1) throw InvalidArgument("gaussian_kernel: radius must be >= 1");
  SmoothingKernel k;
  k.kind = FilterKind::kGaussian;
  k.sigma_s = sigma_s;
  const auto rad = static_cast<std::ptrdiff_t>(radius);
  for (std::ptrdiff_t i = -rad; i <= rad; ++i) {
    const double x = static_cast<double>(i);
    k.taps.push_back(std::exp(-x * x / (2.0 * sigma_s * sigma_s)));
  }
  // Sum outward-in so that symmetric pairs are added together.
  double sum = k.taps[radius];
  for (std::size_t j = radius; j-- > 0;) sum += k.taps[j] + k.taps[2 * radius - j];
  for (double& t : k.taps) t /= sum;
  return k;
}

/// Kernel for a filter kind, or nothing when the filter is off.
inline std::optional<SmoothingKernel> make_kernel(FilterKind kind,
                                                  double sigma_s = 1.0,
                                                  std::size_t radius = 2) {
  switch (kind) {
    case FilterKind::kNone: return std::nullopt;
    case FilterKind::kBinomial3: return binomial_kernel(3);
    case FilterKind::kBinomial5: return binomial_kernel(5);
    case FilterKind::kBinomial7: return binomial_kernel(7);
    case FilterKind::kGaussian: return gaussian_kernel(sigma_s, radius);
  }
  return std::nullopt;
}

/// Smooths each of the r rows of an r x n A-gradient along the input
/// features. Rows are never mixed.
inline DenseMatrix smooth_grad_a(const DenseMatrix& grad_a,
                                 const SmoothingKernel& kernel) {
  DenseMatrix out(grad_a.rows(), grad_a.cols());
  if (grad_a.cols() == 0) return out;
  for (std::size_t i = 0; i < grad_a.rows(); ++i) {
    const auto row = conv1d_symmetric(grad_a.row(i), kernel.taps, kernel.padding);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

/// Smooths each of the r columns of an m x r B-gradient along the outputs.
inline DenseMatrix smooth_grad_b(const DenseMatrix& grad_b,
                                 const SmoothingKernel& kernel) {
  DenseMatrix out(grad_b.rows(), grad_b.cols());
  if (grad_b.rows() == 0) return out;
  std::vector<double> col(grad_b.rows());
  for (std::size_t j = 0; j < grad_b.cols(); ++j) {
    for (std::size_t i = 0; i < grad_b.rows(); ++i) col[i] = grad_b(i, j);
    const auto sm = conv1d_symmetric(col, kernel.taps, kernel.padding);
    for (std::size_t i = 0; i < grad_b.rows(); ++i) out(i, j) = sm[i];
  }
  return out;
}

}  // namespace lalora
