// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lalora/errors.hpp"

namespace lalora {

enum class Padding {
  // Whole-sample mirror that repeats the edge: (c b a | a b c | c b a).
  kSymmetric,
  // Edge value repeated: (a a a | a b c | c c c).
  kReplicate,
};

namespace detail {

// Maps an out-of-range index onto [0, n).
inline std::size_t pad_index(std::ptrdiff_t i, std::size_t n, Padding mode) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  if (mode == Padding::kReplicate) {
    if (i < 0) return 0;
    if (i >= len) return n - 1;
    return static_cast<std::size_t>(i);
  }
  const std::ptrdiff_t period = 2 * len;
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  if (k >= len) k = period - 1 - k;
  return static_cast<std::size_t>(k);
}

}  // namespace detail

/// Same-length 1D convolution with an odd-length kernel.
///
/// Kernels used here are symmetric, so convolution and correlation agree:
/// out[i] = sum_j kernel[j] * x[i + j - h] with h = len(kernel) / 2 and
/// out-of-range samples supplied by `mode`. Kernels longer than the signal
/// are handled by repeated reflection.
///
/// For a kernel summing to one (within 1e-14) the sum is evaluated in
/// centred form, x[i] + sum_{j != h} kernel[j] * (x[i + j - h] - x[i]),
/// which leaves a constant signal bit-for-bit unchanged.
inline std::vector<double> conv1d_symmetric(std::span<const double> signal,
                                            std::span<const double> kernel,
                                            Padding mode = Padding::kSymmetric) {
  if (signal.empty()) throw InvalidArgument("conv1d_symmetric: empty signal");
  if (kernel.size() % 2 == 0) {
    throw InvalidArgument("conv1d_symmetric: kernel length must be odd");
  }
  const std::size_t n = signal.size();
  const std::size_t h = kernel.size() / 2;
  double ksum = 0.0;
  for (double k : kernel) ksum += k;
  const bool centred = std::abs(ksum - 1.0) <= 1e-14;

  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = signal[i];
    double acc = 0.0;
    for (std::size_t j = 0; j < kernel.size(); ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + j) -
                                 static_cast<std::ptrdiff_t>(h);
      const double xs = signal[detail::pad_index(src, n, mode)];
      if (centred) {
        if (j != h) acc += kernel[j] * (xs - xi);
      } else {
        acc += kernel[j] * xs;
      }
    }
    out[i] = centred ? xi + acc : acc;
  }
  return out;
}

}  // namespace lalora
