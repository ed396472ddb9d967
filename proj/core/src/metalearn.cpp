// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/metalearn.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include <Eigen/QR>

#include "fedbilevel/rng.hpp"

namespace fedbilevel {
namespace {

void validate_spec(const MetaLearnSpec& spec) {
  if (spec.tasks.empty()) {
    throw std::invalid_argument("metalearn: need at least one task");
  }
  if (spec.shared_dim < 1) {
    throw std::invalid_argument("metalearn: shared_dim must be >= 1");
  }
  if (!(spec.omega > 0.0)) {
    throw std::invalid_argument(
        "metalearn: omega must be > 0 (strong convexity of the lower level)");
  }
  if (spec.maps.size() != spec.tasks.size()) {
    throw std::invalid_argument("metalearn: one map W_m per task required");
  }
  for (std::size_t m = 0; m < spec.tasks.size(); ++m) {
    const MetaLearnTask& task = spec.tasks[m];
    if (task.train.num_samples() == 0 || task.test.num_samples() == 0) {
      throw std::invalid_argument("metalearn: empty task dataset");
    }
    if (task.train.dim() != task.test.dim()) {
      throw std::invalid_argument(
          "metalearn: train/test feature dims differ within a task");
    }
    if (spec.maps[m].rows() != task.train.dim() ||
        spec.maps[m].cols() != spec.shared_dim) {
      throw std::invalid_argument("metalearn: map W_m has the wrong shape");
    }
  }
}

Matrix gram(const Dataset& data) {
  return data.features.transpose() * data.features /
         static_cast<double>(data.num_samples());
}

Vector moment(const Dataset& data) {
  return data.features.transpose() * data.labels /
         static_cast<double>(data.num_samples());
}

}  // namespace

QuadraticBilevelSpec metalearn_quadratic_spec(const MetaLearnSpec& spec) {
  validate_spec(spec);
  const std::size_t M = spec.tasks.size();
  std::vector<Matrix> Q_blocks(M), P_blocks(M), S_blocks(M);
  std::vector<Vector> r_blocks(M), u_blocks(M);
  for (std::size_t m = 0; m < M; ++m) {
    const MetaLearnTask& task = spec.tasks[m];
    const int p_m = task.train.dim();
    Q_blocks[m] = gram(task.train) +
                  spec.omega * Matrix::Identity(p_m, p_m);
    P_blocks[m] = spec.omega * spec.maps[m];
    r_blocks[m] = moment(task.train);
    S_blocks[m] = gram(task.test);
    // u_m solves S_m u = Z'.t/n; the right side lies in range(S_m), so the
    // minimum-norm solution reproduces the test loss up to a constant.
    u_blocks[m] = S_blocks[m]
                      .completeOrthogonalDecomposition()
                      .solve(moment(task.test));
  }
  return quadratic_from_blocks(Q_blocks, P_blocks, r_blocks, S_blocks,
                               u_blocks, spec.sigma);
}

std::unique_ptr<BilevelProblem> make_metalearn_problem(
    const MetaLearnSpec& spec) {
  return std::make_unique<QuadraticProblem>(metalearn_quadratic_spec(spec));
}

MetaLearnSpec make_metalearn_demo_spec(const MetaLearnDemoOptions& opt) {
  if (opt.num_clients < 1 || opt.shared_dim < 1 || opt.task_dim < 1 ||
      opt.train_per_task < 1 || opt.test_per_task < 1) {
    throw std::invalid_argument("metalearn demo: sizes must be positive");
  }
  MetaLearnSpec spec;
  spec.shared_dim = opt.shared_dim;
  spec.omega = opt.omega;
  spec.sigma = opt.sigma;

  RngStream rng(derive_seed(opt.seed, seed_tag::kProblemGen));
  const Vector x_star = rng.gaussian_vector(opt.shared_dim, 1.0);
  for (int m = 0; m < opt.num_clients; ++m) {
    Matrix W(opt.task_dim, opt.shared_dim);
    for (int i = 0; i < opt.task_dim; ++i) {
      for (int j = 0; j < opt.shared_dim; ++j) {
        W(i, j) = rng.normal() / std::sqrt(static_cast<double>(opt.shared_dim));
      }
    }
    const Vector theta =
        W * x_star + rng.gaussian_vector(opt.task_dim, opt.task_spread);
    MetaLearnTask task;
    task.train = synthetic_regression(
        opt.train_per_task, theta, opt.noise,
        derive_seed(opt.seed, seed_tag::kDataGen, static_cast<std::uint64_t>(m),
                    0));
    task.test = synthetic_regression(
        opt.test_per_task, theta, opt.noise,
        derive_seed(opt.seed, seed_tag::kDataGen, static_cast<std::uint64_t>(m),
                    1));
    spec.tasks.push_back(std::move(task));
    spec.maps.push_back(std::move(W));
  }
  return spec;
}

}  // namespace fedbilevel
