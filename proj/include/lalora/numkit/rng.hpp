// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "lalora/numkit/matrix.hpp"

namespace lalora {

/// What a random stream is used for. Part of the stream key, so two
/// purposes at the same (client, round, step) never share draws.
enum class Purpose : std::uint64_t {
  kGeneric = 0,
  kInit = 1,
  kPartition = 2,
  kClientSample = 3,
  kBatch = 4,
  kNoiseA = 5,
  kNoiseB = 6,
  kData = 7,
  kProbe = 8,
  kSweep = 9,
  kHessian = 10,
};

struct StreamKey {
  std::uint64_t client = 0;
  std::uint64_t round = 0;
  std::uint64_t step = 0;
  Purpose purpose = Purpose::kGeneric;
};

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t absorb(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ mix64(v + kGolden));
}

}  // namespace detail

/// Counter-based random stream.
///
/// A stream is identified by (master seed, client, round, step, purpose).
/// Draw i of a stream is a pure function of that key and i, so any client
/// step can be replayed without replaying the run that preceded it.
/// Gaussians use the Box-Muller transform on consecutive uniform pairs.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-ctr/box-muller";

  explicit SeededRng(std::uint64_t master_seed, StreamKey key = {})
      : seed_(master_seed), key_(key) {
    std::uint64_t h = detail::mix64(master_seed ^ 0x6c616c6f7261ULL);
    h = detail::absorb(h, key.client);
    h = detail::absorb(h, key.round);
    h = detail::absorb(h, key.step);
    h = detail::absorb(h, static_cast<std::uint64_t>(key.purpose));
    stream_ = h;
  }

  // A sibling stream under the same master seed.
  SeededRng derive(StreamKey key) const { return SeededRng(seed_, key); }
  SeededRng derive(std::uint64_t client, std::uint64_t round,
                   std::uint64_t step, Purpose purpose) const {
    return SeededRng(seed_, StreamKey{client, round, step, purpose});
  }

  std::uint64_t master_seed() const { return seed_; }
  const StreamKey& key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    const std::uint64_t c = counter_++;
    return detail::mix64(stream_ + detail::mix64((c + 1) * detail::kGolden));
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("SeededRng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Gamma(shape, 1) by Marsaglia-Tsang; returns log of the draw so that
  // tiny shapes (Dirichlet with small concentration) do not underflow.
  double log_gamma_variate(double shape) {
    if (shape <= 0.0) {
      throw InvalidArgument("log_gamma_variate: shape must be positive");
    }
    if (shape < 1.0) {
      const double boost = std::log(uniform()) / shape;
      return log_gamma_variate(shape + 1.0) + boost;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return std::log(d) + std::log(v);
      }
    }
  }

 private:
  std::uint64_t seed_;
  StreamKey key_;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// rows x cols matrix of i.i.d. N(0, std^2) draws. std = 0 gives zeros
/// without consuming the stream.
inline DenseMatrix gaussian_fill(std::size_t rows, std::size_t cols,
                                 SeededRng& rng, double std_dev) {
  if (!(std_dev >= 0.0)) {
    throw InvalidArgument("gaussian_fill: std must be non-negative");
  }
  DenseMatrix m(rows, cols);
  if (std_dev == 0.0) return m;
  for (double& v : m.data()) v = std_dev * rng.normal();
  return m;
}

// Fisher-Yates on a copy.
template <class T>
std::vector<T> shuffled(std::vector<T> items, SeededRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
  return items;
}

/// k distinct elements of `pool`, uniformly without replacement, in draw
/// order (partial Fisher-Yates).
template <class T>
std::vector<T> sample_without_replacement(const std::vector<T>& pool,
                                          std::size_t k, SeededRng& rng) {
  if (k > pool.size()) {
    throw InvalidArgument(fmt::format(
        "sample_without_replacement: k={} exceeds pool size {}", k,
        pool.size()));
  }
  std::vector<T> items = pool;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  return items;
}

}  // namespace lalora
