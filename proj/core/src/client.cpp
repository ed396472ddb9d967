// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/client.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fedbilevel/hypergrad.hpp"
#include "fedbilevel/rng.hpp"

namespace fedbilevel {

ClientState local_step(const ClientState& cs, const AdaptiveState& adapt,
                       double eta_t, const ScheduleConfig& cfg) {
  if (!(eta_t > 0.0) || eta_t > 1.0) {
    throw std::invalid_argument("local_step: eta_t must lie in (0, 1]");
  }
  require_dim(cs.w, adapt.A_diag.size(), "w");
  const Vector yhat = cs.y - (cfg.lambda / adapt.B_scalar) * cs.v;
  const Vector xhat = cs.x - cfg.gamma * cs.w.cwiseQuotient(adapt.A_diag);

  ClientState next = cs;
  next.y = cs.y + eta_t * (yhat - cs.y);
  next.x = cs.x + eta_t * (xhat - cs.x);

  // Single-stage form of the same update; agreement is a structural
  // identity, so any larger deviation flags a broken state.
  const Vector x_direct =
      cs.x - (cfg.gamma * eta_t) * cs.w.cwiseQuotient(adapt.A_diag);
  const Vector y_direct = cs.y - (cfg.lambda * eta_t / adapt.B_scalar) * cs.v;
  // Rounding in the two-stage form scales with the intermediate target as
  // well as the iterate, so both enter the tolerance.
  const double scale_x = 1.0 + std::max(cs.x.cwiseAbs().maxCoeff(),
                                        xhat.cwiseAbs().maxCoeff());
  const double scale_y = 1.0 + std::max(cs.y.cwiseAbs().maxCoeff(),
                                        yhat.cwiseAbs().maxCoeff());
  if ((next.x - x_direct).cwiseAbs().maxCoeff() > 1e-15 * scale_x ||
      (next.y - y_direct).cwiseAbs().maxCoeff() > 1e-15 * scale_y) {
    throw NumericalError("local_step: two-stage and direct forms disagree");
  }
  return next;
}

InitEstimates init_estimators(const BilevelProblem& problem, int client,
                              const Vector& x1, const Vector& y1, long long q,
                              int K, double neumann_step, std::uint64_t seed) {
  if (q < 1) throw std::invalid_argument("init_estimators: q must be >= 1");
  require_dim(x1, problem.dim_upper(), "x1");
  require_dim(y1, problem.dim_lower(), "y1");

  NeumannConfig nc;
  nc.K = K;
  nc.step = neumann_step;

  InitEstimates out;
  out.v1 = Vector::Zero(problem.dim_lower());
  out.w1 = Vector::Zero(problem.dim_upper());
  for (long long i = 0; i < q; ++i) {
    const std::uint64_t zeta_seed = derive_seed(
        seed, seed_tag::kInitEstimators, static_cast<std::uint64_t>(i), 0);
    out.v1 += problem.sample_partials(client, x1, y1, zeta_seed).grad_y_g;
    nc.seed = derive_seed(seed, seed_tag::kInitEstimators,
                          static_cast<std::uint64_t>(i), 1);
    out.w1 += neumann_hypergrad(problem, client, x1, y1, nc).value;
  }
  out.v1 /= static_cast<double>(q);
  out.w1 /= static_cast<double>(q);
  out.samples = q * (static_cast<long long>(K) + 2);
  return out;
}

}  // namespace fedbilevel
