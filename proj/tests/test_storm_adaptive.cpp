// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "fedbilevel/adaptive.hpp"
#include "fedbilevel/rng.hpp"
#include "fedbilevel/storm.hpp"
#include "fedbilevel/types.hpp"

using namespace fedbilevel;

namespace {

Vector vec1(double a) {
  Vector v(1);
  v << a;
  return v;
}

HypergradSample sample_of(double value, std::uint64_t seed) {
  HypergradSample s;
  s.value = vec1(value);
  s.samples_consumed = 2;
  s.index_k = 0;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("storm_update_v closed-form cases") {
  const Vector v_old = vec1(2.0), g_old = vec1(1.0), g_new = vec1(0.0);
  // alpha = 1 drops the correction entirely.
  CHECK(storm_update_v(v_old, g_new, g_old, 1.0)[0] == 0.0);
  // A perfectly tracking estimator passes the new gradient through.
  CHECK(storm_update_v(g_old, g_new, g_old, 0.3)[0] == g_new[0]);
  // Hand arithmetic: 0 + 0.5 * (2 - 1) = 0.5.
  CHECK(storm_update_v(v_old, g_new, g_old, 0.5)[0] ==
        doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("storm_update_v validates alpha and dimensions") {
  const Vector v = vec1(1.0);
  CHECK_THROWS_AS(storm_update_v(v, v, v, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(storm_update_v(v, v, v, 1.5), std::invalid_argument);
  Vector v2(2);
  v2 << 1.0, 2.0;
  CHECK_THROWS_AS(storm_update_v(v, v2, v, 0.5), std::invalid_argument);
}

TEST_CASE("storm_update_w closed-form cases") {
  const Vector w_old = vec1(4.0);
  const HypergradSample hg_old = sample_of(2.0, 7);
  const HypergradSample hg_new = sample_of(1.0, 7);
  CHECK(storm_update_w(w_old, hg_new, hg_old, 1.0)[0] == 1.0);
  CHECK(storm_update_w(hg_old.value, hg_new, hg_old, 0.6)[0] == hg_new.value[0]);
  // 1 + 0.75 * (4 - 2) = 2.5.
  CHECK(storm_update_w(w_old, hg_new, hg_old, 0.25)[0] ==
        doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("storm_update_w rejects mismatched composite samples") {
  const Vector w_old = vec1(4.0);
  const HypergradSample hg_old = sample_of(2.0, 7);
  const HypergradSample hg_new = sample_of(1.0, 8);  // different seed
  CHECK_THROWS_AS(storm_update_w(w_old, hg_new, hg_old, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(storm_update_w(w_old, sample_of(1.0, 7), hg_old, 0.0),
                  std::invalid_argument);
}

TEST_CASE("alpha = 1 telescopes to the plain stochastic gradient") {
  // v_{t+1} = g_new + (1-1)(...) = g_new for every t, whatever the history.
  RngStream rng(3);
  Vector v = rng.gaussian_vector(5);
  for (int t = 0; t < 20; ++t) {
    const Vector g_new = rng.gaussian_vector(5);
    const Vector g_old = rng.gaussian_vector(5);
    v = storm_update_v(v, g_new, g_old, 1.0);
    CHECK((v - g_new).norm() == 0.0);
  }
}

TEST_CASE("init_adaptive starts at the floor") {
  ScheduleConfig cfg;
  cfg.rho = 0.25;
  const AdaptiveState s =
      init_adaptive(AdaptiveRule::kNormScalar, 3, 2, cfg);
  CHECK(s.a.norm() == 0.0);
  CHECK(s.b == 0.0);
  CHECK(s.A_diag.minCoeff() == 0.25);
  CHECK(s.A_diag.maxCoeff() == 0.25);
  CHECK(s.B_scalar == 0.25);
  CHECK(s.anchor_w.norm() == 0.0);
  CHECK(s.anchor_v.norm() == 0.0);

  const AdaptiveState id = init_adaptive(AdaptiveRule::kIdentity, 3, 2, cfg);
  CHECK(id.A_diag.minCoeff() == 1.0);
  CHECK(id.B_scalar == 1.0);
  CHECK_THROWS_AS(init_adaptive(AdaptiveRule::kIdentity, 0, 2, cfg),
                  std::invalid_argument);
}

TEST_CASE("norm_scalar update with zero smoothing is the plain magnitude") {
  ScheduleConfig cfg;
  cfg.rho = 0.1;
  cfg.varrho = 0.0;
  AdaptiveState s = init_adaptive(AdaptiveRule::kNormScalar, 2, 2, cfg);
  Vector w(2), v(2);
  w << 3.0, 4.0;
  v << 3.0, 4.0;
  s = update_adaptive(s, w, v, cfg, 0, 1);
  CHECK(s.A_diag[0] == doctest::Approx(3.1).epsilon(1e-15));
  CHECK(s.A_diag[1] == doctest::Approx(4.1).epsilon(1e-15));
  CHECK(s.B_scalar == doctest::Approx(5.1).epsilon(1e-15));  // ||v|| = 5
}

TEST_CASE("adabelief deviation vanishes when the average repeats") {
  ScheduleConfig cfg;
  cfg.rho = 0.01;
  cfg.varrho = 0.9;
  AdaptiveState s = init_adaptive(AdaptiveRule::kAdaBelief, 2, 2, cfg);
  Vector w(2), v(2);
  w << 1.0, -2.0;
  v << 0.5, 0.5;
  s = update_adaptive(s, w, v, cfg, 0, 1);  // anchors now (w, v)
  const Vector a_before = s.a;
  const AdaptiveState s2 = update_adaptive(s, w, v, cfg, 1, 1);
  for (int i = 0; i < 2; ++i) {
    CHECK(s2.a[i] == doctest::Approx(0.9 * a_before[i]).epsilon(1e-15));
    CHECK(s2.A_diag[i] ==
          doctest::Approx(std::sqrt(0.9 * a_before[i]) + cfg.rho).epsilon(1e-12));
  }
  CHECK(s2.anchor_w == w);
}

TEST_CASE("amsgrad accumulator never decreases") {
  ScheduleConfig cfg;
  cfg.rho = 0.05;
  cfg.varrho = 0.5;
  AdaptiveState s = init_adaptive(AdaptiveRule::kAmsGrad, 4, 3, cfg);
  RngStream rng(17);
  Vector prev_a = s.a;
  for (int t = 0; t < 50; ++t) {
    s = update_adaptive(s, rng.gaussian_vector(4), rng.gaussian_vector(3), cfg,
                        t, 1);
    for (int i = 0; i < 4; ++i) CHECK(s.a[i] >= prev_a[i]);
    prev_a = s.a;
  }
}

TEST_CASE("identity rule pins both matrices to one") {
  ScheduleConfig cfg;
  AdaptiveState s = init_adaptive(AdaptiveRule::kIdentity, 3, 3, cfg);
  RngStream rng(23);
  for (int t = 0; t < 10; ++t) {
    s = update_adaptive(s, rng.gaussian_vector(3) * 100.0,
                        rng.gaussian_vector(3) * 100.0, cfg, t, 1);
    CHECK(s.A_diag.minCoeff() == 1.0);
    CHECK(s.A_diag.maxCoeff() == 1.0);
    CHECK(s.B_scalar == 1.0);
  }
}

TEST_CASE("matrix bounds hold over a thousand random updates per rule") {
  ScheduleConfig cfg;
  cfg.rho = 0.02;
  cfg.b_hat = 3.0;  // small cap so the clamp path is exercised
  cfg.varrho = 0.7;
  for (AdaptiveRule rule : {AdaptiveRule::kNormScalar, AdaptiveRule::kAdaBelief,
                            AdaptiveRule::kAmsGrad}) {
    AdaptiveState s = init_adaptive(rule, 6, 4, cfg);
    RngStream rng(100 + static_cast<int>(rule));
    for (int t = 0; t < 1000; ++t) {
      const double scale = std::exp(2.0 * rng.normal());
      s = update_adaptive(s, rng.gaussian_vector(6, scale),
                          rng.gaussian_vector(4, scale), cfg, t, 2);
      CHECK(s.A_diag.minCoeff() >= cfg.rho);
      CHECK(s.B_scalar >= cfg.rho);
      CHECK(s.B_scalar <= cfg.b_hat + cfg.rho);
    }
    CHECK(s.clamp_events > 0);  // the heavy-tailed scales must bind the cap
  }
}

TEST_CASE("clamp cap binds and is counted") {
  ScheduleConfig cfg;
  cfg.rho = 0.1;
  cfg.b_hat = 1.0;
  cfg.varrho = 0.0;
  AdaptiveState s = init_adaptive(AdaptiveRule::kNormScalar, 1, 2, cfg);
  Vector v(2);
  v << 30.0, 40.0;  // ||v|| = 50 > b_hat
  s = update_adaptive(s, vec1(0.0), v, cfg, 0, 1);
  CHECK(s.b == doctest::Approx(50.0));         // raw accumulator keeps running
  CHECK(s.B_scalar == doctest::Approx(1.1));   // published value is capped
  CHECK(s.clamp_events == 1);
}

TEST_CASE("update_adaptive rejects non-finite averages") {
  ScheduleConfig cfg;
  AdaptiveState s = init_adaptive(AdaptiveRule::kNormScalar, 2, 2, cfg);
  Vector bad(2);
  bad << 1.0, std::nan("");
  CHECK_THROWS_AS(update_adaptive(s, bad, Vector::Zero(2), cfg, 0, 1),
                  NumericalError);
  CHECK_THROWS_AS(update_adaptive(s, Vector::Zero(2), bad, cfg, 0, 1),
                  NumericalError);
}

TEST_CASE("varrho can track one minus beta") {
  ScheduleConfig cfg;
  cfg.rho = 0.1;
  cfg.n = 64;
  cfg.c2 = 0.5;
  cfg.varrho_track_beta = true;
  AdaptiveState s = init_adaptive(AdaptiveRule::kNormScalar, 1, 1, cfg);
  const double vr = 1.0 - beta_next(5, cfg, 2);
  const AdaptiveState s2 =
      update_adaptive(s, vec1(2.0), vec1(3.0), cfg, 5, 2);
  CHECK(s2.a[0] == doctest::Approx((1.0 - vr) * 4.0).epsilon(1e-14));
  CHECK(s2.b == doctest::Approx((1.0 - vr) * 3.0).epsilon(1e-14));
}

TEST_CASE("rule names round-trip through the parser") {
  for (AdaptiveRule rule : {AdaptiveRule::kNormScalar, AdaptiveRule::kAdaBelief,
                            AdaptiveRule::kAmsGrad, AdaptiveRule::kIdentity}) {
    CHECK(parse_adaptive_rule(adaptive_rule_name(rule)) == rule);
  }
  CHECK_THROWS_AS(parse_adaptive_rule("adam"), ConfigError);
}
