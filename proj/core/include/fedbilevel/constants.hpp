// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_CONSTANTS_HPP_
#define FEDBILEVEL_CONSTANTS_HPP_

#include <string>

namespace fedbilevel {

// Regularity constants of a bilevel problem instance. For quadratic
// instances they are computed from the matrices; for data-driven instances
// they are estimated (power iteration, sampled gradient maxima). sigma is
// the per-coordinate noise scale of the stochastic oracles.
struct ProblemConstants {
  double mu = 1.0;     // strong convexity of the lower objective
  double L_g = 1.0;    // smoothness of the lower objective
  double L_f = 1.0;    // Lipschitz constant of the upper partial gradients
  double L_gxy = 0.0;  // Lipschitz constant of the cross Hessian
  double L_gyy = 0.0;  // Lipschitz constant of the lower Hessian
  double C_fy = 1.0;   // bound on the upper y-partial gradient
  double C_gxy = 1.0;  // bound on the cross Hessian norm
  double sigma = 0.0;  // stochastic-oracle noise scale (per coordinate)
  double delta_f = 0.0;  // inter-client heterogeneity of f gradients
  double delta_g = 0.0;  // inter-client heterogeneity of g derivatives

  // Throws std::invalid_argument if a basic requirement fails
  // (mu > 0, mu <= L_g, everything finite and nonnegative).
  void validate() const;
};

// Closed-form quantities derived from ProblemConstants. Each field has a
// single defining expression; tests recompute them independently.
struct DerivedConstants {
  double kappa = 0.0;      // Lipschitz constant of x -> y*(x)
  double L_y = 0.0;        // Lipschitz constant of x -> dy*(x)
  double L = 0.0;          // Lipschitz constant of the true hypergradient
  double L_bar = 0.0;      // tracking-error constant
  double L_hat = 0.0;      // Lipschitz constant of the surrogate gradient
  double L_K = 0.0;        // mean-square smoothness of the K-term estimator
  double delta_hat = 0.0;  // heterogeneity bound on surrogate gradients

  static DerivedConstants from(const ProblemConstants& c, int K);
};

std::string describe(const ProblemConstants& c);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_CONSTANTS_HPP_
