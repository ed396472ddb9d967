// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_PROBLEM_HPP_
#define FEDBILEVEL_PROBLEM_HPP_

#include <cstdint>

#include "fedbilevel/constants.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {

// One stochastic sample of the first-order partials at (x, y) on one client.
struct Partials {
  Vector grad_x_f;  // dim_upper
  Vector grad_y_f;  // dim_lower
  Vector grad_y_g;  // dim_lower
};

// Closed-form quantities a problem may expose when the lower level is
// solvable in closed form.  All methods are deterministic and noiseless.
class ExactOracles {
 public:
  virtual ~ExactOracles() = default;

  // y*(x): unique lower-level minimizer of the averaged objective.
  virtual Vector lower_solution(const Vector& x) const = 0;

  // dF/dx at x, with the lower level solved exactly.
  virtual Vector hypergradient(const Vector& x) const = 0;

  // Full single-level gradient surrogate at an arbitrary (x, y):
  // grad_x f(x, y) - hvp_xy(x, y) [hvp_yy(x, y)]^{-1} grad_y f(x, y),
  // averaged over clients.
  virtual Vector surrogate_gradient(const Vector& x, const Vector& y) const = 0;

  // Upper-level objective F(x) = (1/M) sum_m f^m(x, y*(x)).
  virtual double upper_value(const Vector& x) const = 0;
};

// A federated bilevel problem: M clients, each holding local objectives
// f^m(x, y) (upper) and g^m(x, y) (lower, strongly convex in y).
//
// All stochastic queries are seeded.  The same seed passed to the same
// method must reproduce the same sample realization; a sample drawn at the
// same seed but a different point must share its noise realization (the
// perturbation is a property of the seed, not of the evaluation point).
class BilevelProblem {
 public:
  virtual ~BilevelProblem() = default;

  virtual int dim_upper() const = 0;
  virtual int dim_lower() const = 0;
  virtual int num_clients() const = 0;

  // Smoothness / boundedness constants the problem advertises about itself.
  virtual const ProblemConstants& constants() const = 0;

  // Stochastic first-order partials on client m.
  virtual Partials sample_partials(int client, const Vector& x,
                                   const Vector& y,
                                   std::uint64_t seed) const = 0;

  // Stochastic Hessian-vector products on client m.
  // hvp_yy_g: v in R^{dim_lower} -> R^{dim_lower}, action of d2g/dy2.
  // hvp_xy_g: v in R^{dim_lower} -> R^{dim_upper}, action of d2g/dxdy.
  virtual Vector hvp_yy_g(int client, const Vector& x, const Vector& y,
                          const Vector& v, std::uint64_t seed) const = 0;
  virtual Vector hvp_xy_g(int client, const Vector& x, const Vector& y,
                          const Vector& v, std::uint64_t seed) const = 0;

  // Noiseless counterparts of the sampled queries.
  virtual Partials exact_partials(int client, const Vector& x,
                                  const Vector& y) const = 0;
  virtual Vector exact_hvp_yy(int client, const Vector& x, const Vector& y,
                              const Vector& v) const = 0;
  virtual Vector exact_hvp_xy(int client, const Vector& x, const Vector& y,
                              const Vector& v) const = 0;

  // Closed-form oracles, or nullptr when the problem cannot provide them.
  virtual const ExactOracles* exact() const { return nullptr; }

 protected:
  void check_client(int client) const {
    if (client < 0 || client >= num_clients()) {
      throw std::invalid_argument("client index out of range");
    }
  }
};

}  // namespace fedbilevel

#endif  // FEDBILEVEL_PROBLEM_HPP_
