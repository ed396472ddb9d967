// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/adaptive.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedbilevel {

AdaptiveRule parse_adaptive_rule(const std::string& name) {
  if (name == "norm_scalar") return AdaptiveRule::kNormScalar;
  if (name == "adabelief") return AdaptiveRule::kAdaBelief;
  if (name == "amsgrad") return AdaptiveRule::kAmsGrad;
  if (name == "identity") return AdaptiveRule::kIdentity;
  throw ConfigError("unknown adaptive rule '" + name +
                    "' (expected norm_scalar, adabelief, amsgrad, or identity)");
}

std::string adaptive_rule_name(AdaptiveRule rule) {
  switch (rule) {
    case AdaptiveRule::kNormScalar:
      return "norm_scalar";
    case AdaptiveRule::kAdaBelief:
      return "adabelief";
    case AdaptiveRule::kAmsGrad:
      return "amsgrad";
    case AdaptiveRule::kIdentity:
      return "identity";
  }
  return "unknown";
}

AdaptiveState init_adaptive(AdaptiveRule rule, int dim_upper, int dim_lower,
                            const ScheduleConfig& cfg) {
  if (dim_upper < 1 || dim_lower < 1) {
    throw std::invalid_argument("init_adaptive: dimensions must be >= 1");
  }
  AdaptiveState s;
  s.rule = rule;
  s.a = Vector::Zero(dim_upper);
  s.b = 0.0;
  s.anchor_w = Vector::Zero(dim_upper);
  s.anchor_v = Vector::Zero(dim_lower);
  if (rule == AdaptiveRule::kIdentity) {
    s.A_diag = Vector::Ones(dim_upper);
    s.B_scalar = 1.0;
  } else {
    s.A_diag = Vector::Constant(dim_upper, cfg.rho);
    s.B_scalar = cfg.rho;
  }
  return s;
}

AdaptiveState update_adaptive(const AdaptiveState& state, const Vector& w_bar,
                              const Vector& v_bar, const ScheduleConfig& cfg,
                              long long t, int num_clients) {
  require_dim(w_bar, state.a.size(), "w_bar");
  require_dim(v_bar, state.anchor_v.size(), "v_bar");
  if (!w_bar.allFinite() || !v_bar.allFinite()) {
    throw NumericalError("update_adaptive: non-finite averaged estimator");
  }

  AdaptiveState next = state;
  if (state.rule == AdaptiveRule::kIdentity) {
    next.A_diag.setOnes();
    next.B_scalar = 1.0;
    return next;
  }

  const double vr = resolve_varrho(cfg, t, num_clients);
  switch (state.rule) {
    case AdaptiveRule::kNormScalar: {
      next.a = vr * state.a + (1.0 - vr) * w_bar.cwiseProduct(w_bar);
      next.b = vr * state.b + (1.0 - vr) * v_bar.norm();
      break;
    }
    case AdaptiveRule::kAdaBelief: {
      const Vector dw = w_bar - state.anchor_w;
      next.a = vr * state.a + (1.0 - vr) * dw.cwiseProduct(dw);
      next.b = vr * state.b + (1.0 - vr) * (v_bar - state.anchor_v).norm();
      next.anchor_w = w_bar;
      next.anchor_v = v_bar;
      break;
    }
    case AdaptiveRule::kAmsGrad: {
      const Vector candidate =
          vr * state.a + (1.0 - vr) * w_bar.cwiseProduct(w_bar);
      next.a = state.a.cwiseMax(candidate);
      next.b = vr * state.b + (1.0 - vr) * v_bar.norm();
      break;
    }
    case AdaptiveRule::kIdentity:
      break;  // handled above
  }
  next.A_diag = (next.a.cwiseSqrt().array() + cfg.rho).matrix();
  const double capped = std::min(next.b, cfg.b_hat);
  if (next.b > cfg.b_hat) ++next.clamp_events;
  next.B_scalar = capped + cfg.rho;
  return next;
}

}  // namespace fedbilevel
