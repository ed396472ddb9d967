// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic randomness for the whole toolkit. Every random draw flows
// from one root seed through counter-based key derivation: a stream key is
// the hash of (root, tag, indices...), so any oracle call can be replayed
// in isolation and concurrent clients never share a stream.

#ifndef FEDBILEVEL_RNG_HPP_
#define FEDBILEVEL_RNG_HPP_

#include <cstdint>
#include <random>

#include "fedbilevel/types.hpp"

namespace fedbilevel {

// splitmix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// derive_seed(root, i, j, ...) folds any number of indices into one key.
template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t first,
                                    Rest... rest) {
  if constexpr (sizeof...(rest) == 0) {
    return seed_mix(root, first);
  } else {
    return derive_seed(seed_mix(root, first), rest...);
  }
}

// Tags keeping unrelated draw purposes in disjoint streams.
namespace seed_tag {
constexpr std::uint64_t kProblemGen = 0x01;
constexpr std::uint64_t kInitPoint = 0x02;
constexpr std::uint64_t kInitEstimators = 0x03;
constexpr std::uint64_t kIterZetaV = 0x04;   // sample for the v update
constexpr std::uint64_t kIterXiBar = 0x05;   // composite sample for the w update
constexpr std::uint64_t kSelectOutput = 0x06;
constexpr std::uint64_t kRepetition = 0x07;
constexpr std::uint64_t kPartition = 0x08;
constexpr std::uint64_t kDataGen = 0x09;
constexpr std::uint64_t kProbePoints = 0x0A;
}  // namespace seed_tag

// One deterministic random stream. Construction is cheap enough to make a
// fresh stream per oracle call, which keeps oracles pure in (inputs, seed).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(mix64(seed)) {}

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  double gamma(double shape) {
    return std::gamma_distribution<double>(shape, 1.0)(engine_);
  }

  // Uniform integer in {0, ..., n-1}.
  std::uint64_t uniform_int(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  Vector gaussian_vector(Eigen::Index n, double scale = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal();
    return v;
  }

  // Symmetric matrix with N(0, scale^2) diagonal and N(0, scale^2/2)
  // off-diagonal entries, i.e. (E + E^T)/2 for i.i.d. E.
  Matrix symmetric_gaussian(Eigen::Index n, double scale);

  Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedbilevel

#endif  // FEDBILEVEL_RNG_HPP_
