// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_CLIENT_HPP_
#define FEDBILEVEL_CLIENT_HPP_

#include <cstdint>

#include "fedbilevel/adaptive.hpp"
#include "fedbilevel/problem.hpp"
#include "fedbilevel/schedule.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {

// One client's iterates and variance-reduced estimators.
struct ClientState {
  Vector x;  // dim_upper
  Vector y;  // dim_lower
  Vector v;  // lower-gradient estimator, dim_lower
  Vector w;  // hypergradient estimator, dim_upper
  long long samples_used = 0;
};

// One local (non-sync) update:
//   yhat = y - lambda * v / B,   xhat = x - gamma * (w ./ A_diag),
//   y' = y + eta_t (yhat - y),   x' = x + eta_t (xhat - x).
// The equivalent single-stage form x' = x - gamma*eta_t*(w ./ A_diag) is
// checked against the result to 1e-15 relative to the iterate scale.
ClientState local_step(const ClientState& cs, const AdaptiveState& adapt,
                       double eta_t, const ScheduleConfig& cfg);

struct InitEstimates {
  Vector v1;  // dim_lower
  Vector w1;  // dim_upper
  long long samples = 0;  // q * (K + 2)
};

// Warm-start averages over q independent draws at the initial point:
// v1 averages the sampled lower gradients, w1 averages Neumann estimates.
// neumann_step = 0 selects the default 1/L_g.
InitEstimates init_estimators(const BilevelProblem& problem, int client,
                              const Vector& x1, const Vector& y1, long long q,
                              int K, double neumann_step, std::uint64_t seed);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_CLIENT_HPP_
