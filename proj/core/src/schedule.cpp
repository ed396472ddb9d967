// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedbilevel/hypergrad.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("schedule: " + message);
}

}  // namespace

long long recommended_q(long long T) {
  if (T < 1) throw std::invalid_argument("recommended_q: T must be >= 1");
  long long q = static_cast<long long>(std::llround(std::cbrt(double(T))));
  if (q < 1) q = 1;
  while (q * q * q < T) ++q;
  while (q > 1 && (q - 1) * (q - 1) * (q - 1) >= T) --q;
  return q;
}

ScheduleConfig with_defaults(const ScheduleConfig& cfg, int num_clients,
                             const ProblemConstants* constants) {
  require(num_clients >= 1, "need at least one client");
  require(cfg.T >= 1, "T must be >= 1");
  ScheduleConfig out = cfg;
  if (out.q == 0) out.q = recommended_q(out.T);
  require(out.q >= 1, "q must be >= 1");
  if (out.n == 0) {
    const long long mk3 = static_cast<long long>(
        std::ceil(num_clients * out.k * out.k * out.k));
    out.n = std::max<long long>({2, mk3, out.q * out.q * out.q});
  }
  if (out.K == 0) {
    require(constants != nullptr,
            "K unset and no problem constants available to choose it");
    out.K = choose_K(*constants, out.T);
  }
  if (out.vartheta == 0.0 && out.c1 > 0.0) out.vartheta = out.c2 / out.c1;
  if (out.tau == 0.0 && out.gamma > 0.0) out.tau = out.lambda / out.gamma;
  return out;
}

void validate_schedule(const ScheduleConfig& cfg, int num_clients) {
  require(num_clients >= 1, "need at least one client");
  require(cfg.T >= 1, "T must be >= 1");
  require(cfg.q >= 1, "q must be >= 1");
  require(cfg.K >= 1, "K must be >= 1");
  require(cfg.k > 0.0 && std::isfinite(cfg.k), "k must be finite > 0");
  require(cfg.n >= 2, "n must be >= 2");
  require(cfg.c1 > 0.0 && std::isfinite(cfg.c1), "c1 must be finite > 0");
  require(cfg.c2 > 0.0 && std::isfinite(cfg.c2), "c2 must be finite > 0");
  require(cfg.gamma > 0.0 && std::isfinite(cfg.gamma),
          "gamma must be finite > 0");
  require(cfg.lambda > 0.0 && std::isfinite(cfg.lambda),
          "lambda must be finite > 0");
  require(cfg.rho > 0.0 && std::isfinite(cfg.rho), "rho must be finite > 0");
  require(cfg.varrho >= 0.0 && cfg.varrho < 1.0,
          "varrho must lie in [0, 1)");
  require(cfg.theta > 0.0 && cfg.theta <= 1.0, "theta must lie in (0, 1]");
  require(cfg.b_hat > 0.0 && std::isfinite(cfg.b_hat),
          "b_hat must be finite > 0");
  require(cfg.neumann_step >= 0.0 && std::isfinite(cfg.neumann_step),
          "neumann_step must be finite >= 0");

  const double eta0 = eta(0, cfg, num_clients);
  require(eta0 <= 1.0,
          "eta_0 = k*M^{1/3}/n^{1/3} = " + std::to_string(eta0) +
              " exceeds 1 (raise n to at least M*k^3)");
  const double a1 = cfg.c1 * eta0 * eta0;
  require(a1 <= 1.0, "alpha_1 = c1*eta_0^2 = " + std::to_string(a1) +
                         " exceeds 1 (lower c1 or raise n)");
  const double b1 = cfg.c2 * eta0 * eta0;
  require(b1 <= 1.0, "beta_1 = c2*eta_0^2 = " + std::to_string(b1) +
                         " exceeds 1 (lower c2 or raise n)");
}

double eta(long long t, const ScheduleConfig& cfg, int num_clients) {
  return cfg.k * std::cbrt(double(num_clients)) /
         std::cbrt(double(cfg.n + t));
}

double alpha_next(long long t, const ScheduleConfig& cfg, int num_clients) {
  const double e = eta(t, cfg, num_clients);
  return cfg.c1 * e * e;
}

double beta_next(long long t, const ScheduleConfig& cfg, int num_clients) {
  const double e = eta(t, cfg, num_clients);
  return cfg.c2 * e * e;
}

double resolve_varrho(const ScheduleConfig& cfg, long long t, int num_clients) {
  if (!cfg.varrho_track_beta) return cfg.varrho;
  return 1.0 - beta_next(t, cfg, num_clients);
}

}  // namespace fedbilevel
