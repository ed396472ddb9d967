// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_STORM_HPP_
#define FEDBILEVEL_STORM_HPP_

#include <stdexcept>

#include "fedbilevel/hypergrad.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {

// Momentum-based variance-reduced estimator updates.  Both gradients passed
// to one update must be evaluated with the same sample: grad_new at the new
// iterate and grad_old at the previous one.

inline Vector storm_update_v(const Vector& v_old, const Vector& grad_new,
                             const Vector& grad_old, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw std::invalid_argument("storm_update_v: alpha must lie in (0, 1]");
  }
  if (grad_new.size() != v_old.size() || grad_old.size() != v_old.size()) {
    throw std::invalid_argument("storm_update_v: dimension mismatch");
  }
  return grad_new + (1.0 - alpha) * (v_old - grad_old);
}

inline Vector storm_update_w(const Vector& w_old, const HypergradSample& hg_new,
                             const HypergradSample& hg_old, double beta) {
  if (!(beta > 0.0) || beta > 1.0) {
    throw std::invalid_argument("storm_update_w: beta must lie in (0, 1]");
  }
  if (hg_new.seed != hg_old.seed) {
    throw std::invalid_argument(
        "storm_update_w: estimates drawn from different composite samples");
  }
  if (hg_new.value.size() != w_old.size() ||
      hg_old.value.size() != w_old.size()) {
    throw std::invalid_argument("storm_update_w: dimension mismatch");
  }
  return hg_new.value + (1.0 - beta) * (w_old - hg_old.value);
}

}  // namespace fedbilevel

#endif  // FEDBILEVEL_STORM_HPP_
