// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_METALEARN_HPP_
#define FEDBILEVEL_METALEARN_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "fedbilevel/dataset.hpp"
#include "fedbilevel/problem.hpp"
#include "fedbilevel/quadratic.hpp"

namespace fedbilevel {

// Distributed meta-learning with linear-regression tasks. Client m owns a
// task with its own parameter block y^m (dimension = task feature count);
// the shared parameter x anchors every block through the regularizer
// (omega/2) * ||y^m - W_m x||^2.
//
//   g^m(x, y) = (1/2n_tr) ||Z_tr y^m - t_tr||^2 + (omega/2) ||y^m - W_m x||^2
//   f^m(x, y) = (1/2n_te) ||Z_te y^m - t_te||^2   (up to a constant)
//
// Both levels are quadratic, so the instance lowers to a block-separable
// QuadraticBilevelSpec and every closed-form oracle applies.
struct MetaLearnTask {
  Dataset train;  // regression rows: features Z, targets in labels
  Dataset test;
};

struct MetaLearnSpec {
  std::vector<MetaLearnTask> tasks;  // one per client
  int shared_dim = 0;                // dimension of x
  double omega = 1.0;                // anchor strength; lower-level mu >= omega
  std::vector<Matrix> maps;          // W_m, task_dim x shared_dim
  double sigma = 0.0;                // oracle noise scale
};

// Lowers the spec to block matrices. Client m's lower gradient touches only
// block y^m by construction.
QuadraticBilevelSpec metalearn_quadratic_spec(const MetaLearnSpec& spec);

std::unique_ptr<BilevelProblem> make_metalearn_problem(const MetaLearnSpec& spec);

// Synthetic tasks: a hidden shared parameter x* and per-client maps W_m give
// task truths W_m x* + task_shift; train/test splits are sampled regressions.
struct MetaLearnDemoOptions {
  int num_clients = 4;
  int shared_dim = 5;
  int task_dim = 3;
  int train_per_task = 25;
  int test_per_task = 25;
  double omega = 1.0;
  double task_spread = 0.1;  // scale of per-task deviation from W_m x*
  double noise = 0.1;        // regression label noise
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

MetaLearnSpec make_metalearn_demo_spec(const MetaLearnDemoOptions& opt);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_METALEARN_HPP_
