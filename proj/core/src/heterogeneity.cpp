// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/heterogeneity.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "fedbilevel/constants.hpp"
#include "fedbilevel/rng.hpp"

namespace fedbilevel {
namespace {

// Solves H z = b with H the (strongly convex) lower Hessian at (x, y),
// accessed only through Hessian-vector products.
Vector solve_lower_hessian(const BilevelProblem& problem, int client,
                           const Vector& x, const Vector& y, const Vector& b) {
  Vector z = Vector::Zero(b.size());
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  const double tol = 1e-14 * (1.0 + b.squaredNorm());
  const int max_iters = 20 * static_cast<int>(b.size()) + 50;
  for (int it = 0; it < max_iters && rr > tol; ++it) {
    const Vector hp = problem.exact_hvp_yy(client, x, y, p);
    const double denom = p.dot(hp);
    if (!(denom > 0.0)) {
      throw NumericalError(
          "measure_heterogeneity: lower Hessian not positive definite");
    }
    const double step = rr / denom;
    z += step * p;
    r -= step * hp;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return z;
}

Vector surrogate_gradient(const BilevelProblem& problem, int client,
                          const Vector& x, const Vector& y) {
  const Partials parts = problem.exact_partials(client, x, y);
  const Vector z = solve_lower_hessian(problem, client, x, y, parts.grad_y_f);
  return parts.grad_x_f - problem.exact_hvp_xy(client, x, y, z);
}

}  // namespace

HeterogeneityReport measure_heterogeneity(const BilevelProblem& problem,
                                          const Vector& x, const Vector& y,
                                          int num_probe_points,
                                          std::uint64_t seed) {
  if (num_probe_points < 1) {
    throw std::invalid_argument(
        "measure_heterogeneity: num_probe_points must be >= 1");
  }
  require_dim(x, problem.dim_upper(), "x");
  require_dim(y, problem.dim_lower(), "y");
  const int M = problem.num_clients();

  RngStream rng(derive_seed(seed, seed_tag::kProbePoints));
  std::vector<Vector> xs, ys;
  xs.reserve(static_cast<std::size_t>(num_probe_points));
  ys.reserve(static_cast<std::size_t>(num_probe_points));
  xs.push_back(x);
  ys.push_back(y);
  for (int i = 1; i < num_probe_points; ++i) {
    xs.push_back(x + rng.gaussian_vector(problem.dim_upper(), 1.0));
    ys.push_back(y + rng.gaussian_vector(problem.dim_lower(), 1.0));
  }

  HeterogeneityReport report;
  report.num_probe_points = num_probe_points;
  for (int i = 0; i < num_probe_points; ++i) {
    std::vector<Partials> parts;
    std::vector<Vector> surrogates;
    parts.reserve(static_cast<std::size_t>(M));
    surrogates.reserve(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      parts.push_back(problem.exact_partials(m, xs[static_cast<std::size_t>(i)],
                                             ys[static_cast<std::size_t>(i)]));
      surrogates.push_back(surrogate_gradient(
          problem, m, xs[static_cast<std::size_t>(i)],
          ys[static_cast<std::size_t>(i)]));
    }
    for (int m = 0; m < M; ++m) {
      for (int j = m + 1; j < M; ++j) {
        const auto mi = static_cast<std::size_t>(m);
        const auto ji = static_cast<std::size_t>(j);
        report.delta_f_emp =
            std::max(report.delta_f_emp,
                     (parts[mi].grad_x_f - parts[ji].grad_x_f).norm());
        report.delta_g_emp =
            std::max(report.delta_g_emp,
                     (parts[mi].grad_y_g - parts[ji].grad_y_g).norm());
        report.delta_hat_emp = std::max(
            report.delta_hat_emp, (surrogates[mi] - surrogates[ji]).norm());
      }
    }
  }

  const ProblemConstants& c = problem.constants();
  report.delta_hat_bound = DerivedConstants::from(c, 1).delta_hat;
  report.within_bound =
      report.delta_hat_emp * report.delta_hat_emp <=
      report.delta_hat_bound * report.delta_hat_bound + 1e-9;
  return report;
}

}  // namespace fedbilevel
