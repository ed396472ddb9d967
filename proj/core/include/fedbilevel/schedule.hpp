// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_SCHEDULE_HPP_
#define FEDBILEVEL_SCHEDULE_HPP_

#include <cstdint>

#include "fedbilevel/constants.hpp"

namespace fedbilevel {

// All tunables of the optimizer loop and its step-size schedules
//   eta_t = k * M^{1/3} / (n + t)^{1/3},
//   alpha_{t+1} = c1 * eta_t^2,  beta_{t+1} = c2 * eta_t^2.
// Fields set to 0 are resolved by with_defaults: n to max(2, ceil(M k^3), q^3),
// q to the smallest integer with q^3 >= T, K via choose_K, vartheta to c2/c1,
// tau to lambda/gamma.
struct ScheduleConfig {
  double k = 1.0;          // schedule numerator factor, > 0
  long long n = 0;         // schedule offset, >= 2 after defaulting
  double c1 = 1.0;         // alpha coefficient, > 0
  double c2 = 1.0;         // beta coefficient, > 0
  double gamma = 0.1;      // upper-level step, > 0
  double lambda = 0.1;     // lower-level step, > 0
  long long q = 0;         // sync period, >= 1 after defaulting
  long long T = 100;       // iterations, >= 1
  int K = 0;               // Neumann truncation, >= 1 after defaulting
  double rho = 0.01;       // adaptive-matrix floor, > 0
  double varrho = 0.9;     // adaptive smoothing factor in [0, 1)
  bool varrho_track_beta = false;  // use varrho_t = 1 - beta_{t+1} instead
  double vartheta = 0.0;   // ratio c2/c1 (reported in feasibility checks)
  double tau = 0.0;        // ratio lambda/gamma (reported in checks)
  double theta = 1.0;      // feasibility-condition parameter in (0, 1]
  double b_hat = 1000.0;   // cap on the b accumulator, > 0
  double neumann_step = 0.0;  // estimator curvature step; 0 selects 1/L_g
};

// Smallest integer q with q^3 >= T (integer-exact ceil(T^{1/3})).
long long recommended_q(long long T);

// Fills every 0-valued derived field.  `constants` may be null only when K
// is already set.
ScheduleConfig with_defaults(const ScheduleConfig& cfg, int num_clients,
                             const ProblemConstants* constants);

// Enforces the hard invariants: positivity, ranges, eta_0 <= 1,
// alpha_1 <= 1, beta_1 <= 1.  Throws ConfigError naming the violated
// inequality.  Call after with_defaults.
void validate_schedule(const ScheduleConfig& cfg, int num_clients);

// eta_t; strictly decreasing in t.
double eta(long long t, const ScheduleConfig& cfg, int num_clients);

// alpha_{t+1} and beta_{t+1}, the momentum weights applied at iteration t.
double alpha_next(long long t, const ScheduleConfig& cfg, int num_clients);
double beta_next(long long t, const ScheduleConfig& cfg, int num_clients);

// Smoothing factor used by the adaptive-matrix update at iteration t.
double resolve_varrho(const ScheduleConfig& cfg, long long t, int num_clients);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_SCHEDULE_HPP_
