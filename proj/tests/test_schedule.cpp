// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "fedbilevel/hypergrad.hpp"
#include "fedbilevel/schedule.hpp"
#include "fedbilevel/types.hpp"

using namespace fedbilevel;

TEST_CASE("eta closed form at hand-checked points") {
  ScheduleConfig cfg;
  cfg.k = 1.0;
  cfg.n = 8;
  // eta_0 = 1 * 1^{1/3} / 8^{1/3} = 1/2.
  CHECK(eta(0, cfg, 1) == doctest::Approx(0.5).epsilon(1e-15));
  // M = 8 doubles the numerator: eta_0 = 2/2 = 1.
  CHECK(eta(0, cfg, 8) == doctest::Approx(1.0).epsilon(1e-15));
  // t = 19 shifts the denominator: 1/27^{1/3} = 1/3.
  CHECK(eta(19, cfg, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("alpha and beta are c1, c2 times eta squared") {
  ScheduleConfig cfg;
  cfg.k = 1.0;
  cfg.n = 8;
  cfg.c1 = 0.25;
  cfg.c2 = 0.75;
  for (long long t : {0LL, 1LL, 10LL, 500LL}) {
    const double e = eta(t, cfg, 2);
    CHECK(alpha_next(t, cfg, 2) == doctest::Approx(cfg.c1 * e * e).epsilon(1e-15));
    CHECK(beta_next(t, cfg, 2) == doctest::Approx(cfg.c2 * e * e).epsilon(1e-15));
    // The ratio alpha/beta is the constant c1/c2 at every t.
    CHECK(alpha_next(t, cfg, 2) / beta_next(t, cfg, 2) ==
          doctest::Approx(cfg.c1 / cfg.c2).epsilon(1e-15));
  }
}

TEST_CASE("monotone decrease of eta, alpha, beta") {
  ScheduleConfig cfg;
  cfg.k = 1.3;
  cfg.n = 64;
  cfg.c1 = 0.9;
  cfg.c2 = 1.1;
  double prev_eta = 2.0, prev_a = 2.0, prev_b = 2.0;
  for (long long t = 0; t <= 2000; t += 7) {
    const double e = eta(t, cfg, 4);
    const double a = alpha_next(t, cfg, 4);
    const double b = beta_next(t, cfg, 4);
    CHECK(e < prev_eta);
    CHECK(a < prev_a);
    CHECK(b < prev_b);
    prev_eta = e;
    prev_a = a;
    prev_b = b;
  }
}

TEST_CASE("recommended_q is the integer cube-root ceiling") {
  CHECK(recommended_q(1) == 1);
  CHECK(recommended_q(8) == 2);
  CHECK(recommended_q(9) == 3);
  CHECK(recommended_q(27) == 3);
  CHECK(recommended_q(28) == 4);
  CHECK(recommended_q(1000) == 10);
  CHECK(recommended_q(1001) == 11);
  CHECK(recommended_q(20000) == 28);
  for (long long T = 1; T <= 3000; ++T) {
    const long long q = recommended_q(T);
    CHECK(q * q * q >= T);
    if (q > 1) CHECK((q - 1) * (q - 1) * (q - 1) < T);
  }
  CHECK_THROWS_AS(recommended_q(0), std::invalid_argument);
}

TEST_CASE("with_defaults resolves n, q, vartheta, tau") {
  ScheduleConfig cfg;
  cfg.T = 1000;
  cfg.k = 2.0;
  cfg.K = 3;
  cfg.c1 = 2.0;
  cfg.c2 = 1.0;
  cfg.gamma = 0.2;
  cfg.lambda = 0.05;
  const ScheduleConfig out = with_defaults(cfg, 4, nullptr);
  CHECK(out.q == 10);
  // n = max(2, ceil(M k^3), q^3) = max(2, 32, 1000).
  CHECK(out.n == 1000);
  CHECK(out.vartheta == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.tau == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("with_defaults picks n = M k^3 when it dominates q^3") {
  ScheduleConfig cfg;
  cfg.T = 8;
  cfg.k = 3.0;
  cfg.K = 1;
  const ScheduleConfig out = with_defaults(cfg, 10, nullptr);
  CHECK(out.q == 2);
  CHECK(out.n == 270);  // ceil(10 * 27) > q^3 = 8
}

TEST_CASE("with_defaults chooses K from the constants when unset") {
  ScheduleConfig cfg;
  cfg.T = 21;
  ProblemConstants c;  // mu = L_g = C_gxy = C_fy = 1
  const ScheduleConfig out = with_defaults(cfg, 1, &c);
  CHECK(out.K == choose_K(c, 21));
  CHECK(out.K == 4);
}

TEST_CASE("with_defaults without constants requires K") {
  ScheduleConfig cfg;
  cfg.T = 10;
  CHECK_THROWS_AS(with_defaults(cfg, 1, nullptr), ConfigError);
  cfg.K = 2;
  CHECK_NOTHROW(with_defaults(cfg, 1, nullptr));
}

TEST_CASE("validate_schedule names the violated inequality") {
  ScheduleConfig cfg;
  cfg.T = 100;
  cfg.K = 1;
  cfg.q = 5;
  cfg.n = 2;  // eta_0 = k M^{1/3} / 2^{1/3} > 1 for M = 8
  cfg.k = 1.0;
  try {
    validate_schedule(cfg, 8);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("eta_0") != std::string::npos);
  }

  // alpha_1 = c1 eta_0^2 > 1 while eta_0 <= 1.
  cfg.n = 8;
  cfg.c1 = 100.0;
  try {
    validate_schedule(cfg, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("alpha_1") != std::string::npos);
  }

  cfg.c1 = 1.0;
  cfg.c2 = 100.0;
  try {
    validate_schedule(cfg, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("beta_1") != std::string::npos);
  }
}

TEST_CASE("validate_schedule accepts a defaulted config and keeps eta <= 1") {
  ScheduleConfig cfg;
  cfg.T = 500;
  cfg.K = 2;
  for (int M : {1, 3, 8}) {
    const ScheduleConfig out = with_defaults(cfg, M, nullptr);
    CHECK_NOTHROW(validate_schedule(out, M));
    for (long long t = 0; t <= out.T; ++t) {
      CHECK(eta(t, out, M) <= 1.0 + 1e-15);
      CHECK(alpha_next(t, out, M) <= 1.0 + 1e-15);
      CHECK(beta_next(t, out, M) <= 1.0 + 1e-15);
    }
  }
}

TEST_CASE("validate_schedule basic range errors") {
  ScheduleConfig bad;
  bad.K = 1;
  bad.q = 1;
  bad.n = 8;
  bad.gamma = 0.0;
  CHECK_THROWS_AS(validate_schedule(bad, 1), ConfigError);
  bad.gamma = 0.1;
  bad.varrho = 1.0;
  CHECK_THROWS_AS(validate_schedule(bad, 1), ConfigError);
  bad.varrho = 0.9;
  bad.theta = 1.5;
  CHECK_THROWS_AS(validate_schedule(bad, 1), ConfigError);
}

TEST_CASE("resolve_varrho constant or tracking one minus beta") {
  ScheduleConfig cfg;
  cfg.n = 64;
  cfg.c2 = 0.5;
  cfg.varrho = 0.9;
  CHECK(resolve_varrho(cfg, 3, 2) == 0.9);
  cfg.varrho_track_beta = true;
  const double expect = 1.0 - beta_next(3, cfg, 2);
  CHECK(resolve_varrho(cfg, 3, 2) == doctest::Approx(expect).epsilon(1e-15));
}
