// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_DATASET_HPP_
#define FEDBILEVEL_DATASET_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "fedbilevel/types.hpp"

namespace fedbilevel {

// Row-per-sample feature matrix with one numeric label per row.
// Classification tasks store labels in {0, 1}.
struct Dataset {
  Matrix features;  // n x d
  Vector labels;    // n

  int num_samples() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  Dataset subset(const std::vector<int>& indices) const;
};

// CSV layout: header `feature_0,...,feature_{d-1},label`, one row per sample.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& data, const std::string& path);

// Binary classification with a random linear teacher: features are standard
// normal, label = 1 when x'w + label_noise * e > 0.
struct SyntheticClassificationOptions {
  int num_samples = 100;
  int dim = 10;
  double label_noise = 0.1;
  std::uint64_t seed = 0;
};
Dataset synthetic_classification(const SyntheticClassificationOptions& opt);

// Linear regression targets t = z'theta + noise * e with standard normal z.
Dataset synthetic_regression(int num_samples, const Vector& theta, double noise,
                             std::uint64_t seed);

// Flips exactly round(rate * n) binary labels, chosen uniformly per seed.
struct CorruptionResult {
  Dataset data;
  std::vector<int> flipped;  // sorted indices of corrupted rows
};
CorruptionResult flip_labels(const Dataset& data, double rate,
                             std::uint64_t seed);

enum class PartitionMode { kIid, kSortedLabel, kDirichlet };

PartitionMode parse_partition_mode(const std::string& name);
std::string partition_mode_name(PartitionMode mode);

// Splits the pool into M disjoint client datasets covering it exactly.
// iid: random round-robin deal, sizes differ by at most one.
// sorted_label: contiguous chunks after a stable sort by label.
// dirichlet: per-label client proportions drawn from Dirichlet(alpha, ..., alpha).
std::vector<Dataset> partition_dataset(const Dataset& pool, int num_clients,
                                       PartitionMode mode, std::uint64_t seed,
                                       double alpha = 1.0);

// Same assignment as partition_dataset, as sorted pool-row indices per client.
std::vector<std::vector<int>> partition_indices(const Dataset& pool,
                                                int num_clients,
                                                PartitionMode mode,
                                                std::uint64_t seed,
                                                double alpha = 1.0);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_DATASET_HPP_
