// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_ADAPTIVE_HPP_
#define FEDBILEVEL_ADAPTIVE_HPP_

#include <string>

#include "fedbilevel/schedule.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {

// Server-side preconditioner rules.  A is diagonal with floor rho; B is a
// bounded scalar multiple of the identity.
enum class AdaptiveRule {
  kNormScalar,  // a <- rho_t*a + (1-rho_t)*wbar^2,  b <- ... + (1-rho_t)*|vbar|
  kAdaBelief,   // accumulates squared deviations from the previous sync averages
  kAmsGrad,     // norm_scalar second moment with an elementwise running max
  kIdentity     // A = I, B = I (non-adaptive variant)
};

AdaptiveRule parse_adaptive_rule(const std::string& name);
std::string adaptive_rule_name(AdaptiveRule rule);

struct AdaptiveState {
  AdaptiveRule rule = AdaptiveRule::kNormScalar;
  Vector a;                 // dim_upper accumulator a_t
  double b = 0.0;           // scalar accumulator b_t (uncapped)
  Vector A_diag;            // diagonal of A_t, every entry >= rho
  double B_scalar = 0.0;    // min(b, b_hat) + rho
  Vector anchor_w;          // previous-sync averages (AdaBelief deviations)
  Vector anchor_v;
  long long clamp_events = 0;  // sync steps where the b_hat cap bound
};

// Fresh state with zero accumulators: A_1 = rho*I, B_1 = rho (identity rule:
// A_1 = I, B_1 = 1).
AdaptiveState init_adaptive(AdaptiveRule rule, int dim_upper, int dim_lower,
                            const ScheduleConfig& cfg);

// One sync-step matrix generation from the averaged estimators.  t and
// num_clients feed the smoothing factor when varrho tracks beta_t.
AdaptiveState update_adaptive(const AdaptiveState& state, const Vector& w_bar,
                              const Vector& v_bar, const ScheduleConfig& cfg,
                              long long t, int num_clients);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_ADAPTIVE_HPP_
