// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_HETEROGENEITY_HPP_
#define FEDBILEVEL_HETEROGENEITY_HPP_

#include <cstdint>

#include "fedbilevel/problem.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {

struct HeterogeneityReport {
  double delta_f_emp = 0.0;    // max pairwise gap of the upper x-gradients
  double delta_g_emp = 0.0;    // max pairwise gap of the lower y-gradients
  double delta_hat_emp = 0.0;  // max pairwise gap of the surrogate gradients
  double delta_hat_bound = 0.0;  // closed-form bound from the stated constants
  bool within_bound = false;     // delta_hat_emp^2 <= delta_hat_bound^2
  int num_probe_points = 0;
};

// Probes client disagreement with noiseless oracles. The first probe point is
// (x, y) itself; the rest add standard normal offsets drawn from `seed`.
// Surrogate gradients are formed by solving the lower Hessian system with
// conjugate gradients, so no instance-specific structure is required.
HeterogeneityReport measure_heterogeneity(const BilevelProblem& problem,
                                          const Vector& x, const Vector& y,
                                          int num_probe_points,
                                          std::uint64_t seed = 0);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_HETEROGENEITY_HPP_
