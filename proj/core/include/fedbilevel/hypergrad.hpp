// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_HYPERGRAD_HPP_
#define FEDBILEVEL_HYPERGRAD_HPP_

#include <cstdint>
#include <string>

#include "fedbilevel/problem.hpp"
#include "fedbilevel/quadratic.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {

// Truncated Neumann-series hypergradient estimator settings.
struct NeumannConfig {
  int K = 1;          // series truncation, >= 1
  double step = 0.0;  // curvature step in (0, 1/L_g]; 0 selects 1/L_g
  std::uint64_t seed = 0;

  // Resolves the effective step for a problem with the given constants and
  // validates the (0, 1/L_g] requirement.
  double resolved_step(const ProblemConstants& c) const;
};

struct HypergradSample {
  Vector value;                // dim_upper
  int samples_consumed = 0;    // always K + 1: one xi plus K zeta draws
  int index_k = 0;             // realized truncation index in {0,...,K-1}
  std::uint64_t seed = 0;      // seed the sample was drawn from
};

// One draw of the estimator on one client:
//   grad_x f(x,y;xi)
//     - hvp_xy(zeta_0) [ K*step * prod_{i=1}^{k} (I - step*hvp_yy(zeta_i)) ]
//       grad_y f(x,y;xi)
// with k uniform on {0,...,K-1} and the product applied right-to-left as k
// Hessian-vector products (empty product when k = 0).
HypergradSample neumann_hypergrad(const BilevelProblem& problem, int client,
                                  const Vector& x, const Vector& y,
                                  const NeumannConfig& cfg);

// Mean of the estimator over all K values of k with one shared set of
// samples, i.e. the estimator with its truncation index integrated out:
//   grad_x f - hvp_xy(zeta_0) [ step * sum_{j=0}^{K-1}
//     prod_{i=1}^{j} (I - step*hvp_yy(zeta_i)) ] grad_y f.
Vector enumerated_neumann_mean(const BilevelProblem& problem, int client,
                               const Vector& x, const Vector& y,
                               const NeumannConfig& cfg);

// Estimator bias bound (C_gxy * C_fy / mu) * (1 - mu/L_g)^K.
double bias_bound(const ProblemConstants& c, int K);

struct EmpiricalBias {
  double bias = 0.0;            // norm of (sample mean - exact target)
  double standard_error = 0.0;  // Monte-Carlo standard error of the mean
  int num_samples = 0;
};

// Monte-Carlo bias of the estimator against exact_indirect_grad.
// Draw i uses a seed derived from (cfg.seed, i).  num_samples >= 1000.
EmpiricalBias empirical_bias(const QuadraticBilevelSpec& spec, int client,
                             const Vector& x, const Vector& y,
                             const NeumannConfig& cfg, int num_samples);

// K = max(1, ceil((L_g/mu) * ln(C_gxy*C_fy*T/mu))), which makes
// bias_bound(K) <= 1/T.  A nonpositive log argument falls back to K = 1;
// when `warning` is non-null the fallback reason is recorded there.
int choose_K(const ProblemConstants& c, long long T,
             std::string* warning = nullptr);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_HYPERGRAD_HPP_
