// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedbilevel/client.hpp"
#include "fedbilevel/quadratic.hpp"
#include "fedbilevel/rng.hpp"

using namespace fedbilevel;

namespace {

AdaptiveState manual_adapt(const Vector& A_diag, double B_scalar) {
  AdaptiveState s;
  s.A_diag = A_diag;
  s.B_scalar = B_scalar;
  s.a = Vector::Zero(A_diag.size());
  s.anchor_w = Vector::Zero(A_diag.size());
  s.anchor_v = Vector::Zero(1);
  return s;
}

}  // namespace

TEST_CASE("local_step scalar hand case") {
  ClientState cs;
  cs.x = Vector::Zero(1);
  cs.y = Vector::Zero(1);
  cs.v = Vector::Constant(1, 2.0);
  cs.w = Vector::Zero(1);
  ScheduleConfig cfg;
  cfg.lambda = 0.1;
  cfg.gamma = 0.1;
  const AdaptiveState adapt = manual_adapt(Vector::Ones(1), 1.0);
  const ClientState next = local_step(cs, adapt, 0.5, cfg);
  // y' = y - lambda*eta*v/B = -0.1*0.5*2 = -0.1.
  CHECK(next.y[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(next.x[0] == 0.0);
}

TEST_CASE("local_step elementwise division by A_diag") {
  ClientState cs;
  cs.x = Vector::Zero(2);
  cs.y = Vector::Zero(2);
  cs.v = Vector::Zero(2);
  cs.w = Vector(2);
  cs.w << 2.0, 4.0;
  Vector A(2);
  A << 2.0, 4.0;
  ScheduleConfig cfg;
  cfg.gamma = 1.0;
  const ClientState next = local_step(cs, manual_adapt(A, 1.0), 1.0, cfg);
  CHECK(next.x[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(next.x[1] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("local_step with identity matrices and eta = 1 is plain descent") {
  RngStream rng(5);
  ClientState cs;
  cs.x = rng.gaussian_vector(3);
  cs.y = rng.gaussian_vector(4);
  cs.v = rng.gaussian_vector(4);
  cs.w = rng.gaussian_vector(3);
  ScheduleConfig cfg;
  cfg.gamma = 0.3;
  cfg.lambda = 0.2;
  AdaptiveState adapt = manual_adapt(Vector::Ones(3), 1.0);
  const ClientState next = local_step(cs, adapt, 1.0, cfg);
  CHECK((next.x - (cs.x - 0.3 * cs.w)).norm() < 1e-15);
  CHECK((next.y - (cs.y - 0.2 * cs.v)).norm() < 1e-15);
}

TEST_CASE("two-stage form equals the single-stage form on random inputs") {
  RngStream rng(9);
  ScheduleConfig cfg;
  cfg.gamma = 0.17;
  cfg.lambda = 0.31;
  for (int trial = 0; trial < 200; ++trial) {
    ClientState cs;
    cs.x = rng.gaussian_vector(6, 3.0);
    cs.y = rng.gaussian_vector(5, 3.0);
    cs.v = rng.gaussian_vector(5, 2.0);
    cs.w = rng.gaussian_vector(6, 2.0);
    Vector A(6);
    for (int i = 0; i < 6; ++i) A[i] = 0.05 + std::abs(rng.normal());
    const double B = 0.05 + std::abs(rng.normal());
    const double eta_t = 0.05 + 0.95 * rng.uniform();
    const ClientState next = local_step(cs, manual_adapt(A, B), eta_t, cfg);
    const Vector x_direct = cs.x - cfg.gamma * eta_t * cs.w.cwiseQuotient(A);
    const Vector y_direct = cs.y - (cfg.lambda * eta_t / B) * cs.v;
    const double sx = 1.0 + cs.x.cwiseAbs().maxCoeff();
    const double sy = 1.0 + cs.y.cwiseAbs().maxCoeff();
    CHECK((next.x - x_direct).cwiseAbs().maxCoeff() <= 1e-15 * sx);
    CHECK((next.y - y_direct).cwiseAbs().maxCoeff() <= 1e-15 * sy);
  }
}

TEST_CASE("local_step rejects eta outside (0, 1]") {
  ClientState cs;
  cs.x = Vector::Zero(1);
  cs.y = Vector::Zero(1);
  cs.v = Vector::Zero(1);
  cs.w = Vector::Zero(1);
  ScheduleConfig cfg;
  const AdaptiveState adapt = manual_adapt(Vector::Ones(1), 1.0);
  CHECK_THROWS_AS(local_step(cs, adapt, 0.0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(local_step(cs, adapt, 1.5, cfg), std::invalid_argument);
}

TEST_CASE("init_estimators counts q*(K+2) samples and is exact when noiseless") {
  QuadraticRandomOptions opt;
  opt.num_clients = 2;
  opt.dim_upper = 3;
  opt.dim_lower = 3;
  opt.sigma = 0.0;
  opt.seed = 11;
  const QuadraticProblem problem(random_quadratic_spec(opt));
  RngStream rng(2);
  const Vector x1 = rng.gaussian_vector(3);
  const Vector y1 = rng.gaussian_vector(3);

  const InitEstimates one = init_estimators(problem, 0, x1, y1, 1, 4, 0.0, 77);
  CHECK(one.samples == 6);  // K + 2 with q = 1
  const InitEstimates many = init_estimators(problem, 0, x1, y1, 9, 4, 0.0, 77);
  CHECK(many.samples == 9 * 6);

  // sigma = 0 makes every lower-gradient draw exact, so the average is too.
  const Vector exact = problem.exact_partials(0, x1, y1).grad_y_g;
  CHECK((one.v1 - exact).norm() < 1e-14);
  CHECK((many.v1 - exact).norm() < 1e-14);

  // Same seed, same result.
  const InitEstimates again = init_estimators(problem, 0, x1, y1, 9, 4, 0.0, 77);
  CHECK((again.v1 - many.v1).norm() == 0.0);
  CHECK((again.w1 - many.w1).norm() == 0.0);

  CHECK_THROWS_AS(init_estimators(problem, 0, x1, y1, 0, 4, 0.0, 77),
                  std::invalid_argument);
}

TEST_CASE("init_estimators variance decays like 1/q") {
  QuadraticRandomOptions opt;
  opt.num_clients = 1;
  opt.dim_upper = 2;
  opt.dim_lower = 2;
  opt.sigma = 0.5;
  opt.seed = 3;
  const QuadraticProblem problem(random_quadratic_spec(opt));
  const Vector x1 = Vector::Zero(2);
  const Vector y1 = Vector::Zero(2);
  const Vector exact = problem.exact_partials(0, x1, y1).grad_y_g;

  const int reps = 10000;
  std::vector<double> variance;
  for (long long q : {1LL, 4LL, 16LL}) {
    double sum_sq = 0.0;
    for (int r = 0; r < reps; ++r) {
      const InitEstimates est = init_estimators(
          problem, 0, x1, y1, q, 1, 0.0,
          derive_seed(900u, static_cast<std::uint64_t>(q),
                      static_cast<std::uint64_t>(r)));
      sum_sq += (est.v1 - exact).squaredNorm();
    }
    variance.push_back(sum_sq / reps);
  }
  // E||v1 - exact||^2 = dim * sigma^2 / q = 0.5 / q here.
  CHECK(variance[0] == doctest::Approx(0.5).epsilon(0.1));
  CHECK(variance[0] / variance[1] == doctest::Approx(4.0).epsilon(0.15));
  CHECK(variance[1] / variance[2] == doctest::Approx(4.0).epsilon(0.15));
}
