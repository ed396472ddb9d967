// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/hypergrad.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedbilevel/rng.hpp"

namespace fedbilevel {
namespace {

// Seed-stream tags local to one estimator call.
constexpr std::uint64_t kIndexTag = 0x21;
constexpr std::uint64_t kXiTag = 0x22;
constexpr std::uint64_t kZetaTag = 0x23;

std::uint64_t zeta_seed(const NeumannConfig& cfg, int i) {
  return derive_seed(cfg.seed, kZetaTag, static_cast<std::uint64_t>(i));
}

}  // namespace

double NeumannConfig::resolved_step(const ProblemConstants& c) const {
  if (K < 1) throw std::invalid_argument("NeumannConfig: K must be >= 1");
  const double cap = 1.0 / c.L_g;
  const double s = step == 0.0 ? cap : step;
  if (!(s > 0.0) || s > cap) {
    throw std::invalid_argument(
        "NeumannConfig: step must lie in (0, 1/L_g]");
  }
  return s;
}

HypergradSample neumann_hypergrad(const BilevelProblem& problem, int client,
                                  const Vector& x, const Vector& y,
                                  const NeumannConfig& cfg) {
  require_dim(x, problem.dim_upper(), "x");
  require_dim(y, problem.dim_lower(), "y");
  const double step = cfg.resolved_step(problem.constants());

  RngStream index_rng(derive_seed(cfg.seed, kIndexTag, client));
  const int k = static_cast<int>(index_rng.uniform_int(cfg.K));

  const Partials p = problem.sample_partials(client, x, y,
                                             derive_seed(cfg.seed, kXiTag));
  Vector z = p.grad_y_f;
  for (int i = k; i >= 1; --i) {
    z -= step * problem.hvp_yy_g(client, x, y, z, zeta_seed(cfg, i));
  }
  z *= cfg.K * step;

  HypergradSample out;
  out.value = p.grad_x_f - problem.hvp_xy_g(client, x, y, z, zeta_seed(cfg, 0));
  out.samples_consumed = cfg.K + 1;
  out.index_k = k;
  out.seed = cfg.seed;
  return out;
}

Vector enumerated_neumann_mean(const BilevelProblem& problem, int client,
                               const Vector& x, const Vector& y,
                               const NeumannConfig& cfg) {
  require_dim(x, problem.dim_upper(), "x");
  require_dim(y, problem.dim_lower(), "y");
  const double step = cfg.resolved_step(problem.constants());

  const Partials p = problem.sample_partials(client, x, y,
                                             derive_seed(cfg.seed, kXiTag));
  Vector prefix = p.grad_y_f;  // prod_{i=1}^{j} (...) grad_y_f, j = 0
  Vector total = prefix;
  for (int j = 1; j < cfg.K; ++j) {
    prefix -= step * problem.hvp_yy_g(client, x, y, prefix, zeta_seed(cfg, j));
    total += prefix;
  }
  total *= step;
  return p.grad_x_f - problem.hvp_xy_g(client, x, y, total, zeta_seed(cfg, 0));
}

double bias_bound(const ProblemConstants& c, int K) {
  if (K < 1) throw std::invalid_argument("bias_bound: K must be >= 1");
  c.validate();
  return (c.C_gxy * c.C_fy / c.mu) * std::pow(1.0 - c.mu / c.L_g, K);
}

EmpiricalBias empirical_bias(const QuadraticBilevelSpec& spec, int client,
                             const Vector& x, const Vector& y,
                             const NeumannConfig& cfg, int num_samples) {
  if (num_samples < 1000) {
    throw std::invalid_argument("empirical_bias: need at least 1000 samples");
  }
  const QuadraticProblem problem(spec);
  const Vector target = exact_indirect_grad(spec, client, x, y);

  std::vector<Vector> draws;
  draws.reserve(num_samples);
  Vector mean = Vector::Zero(problem.dim_upper());
  for (int i = 0; i < num_samples; ++i) {
    NeumannConfig draw_cfg = cfg;
    draw_cfg.seed = derive_seed(cfg.seed, seed_tag::kRepetition,
                                static_cast<std::uint64_t>(i));
    draws.push_back(neumann_hypergrad(problem, client, x, y, draw_cfg).value);
    mean += draws.back();
  }
  mean /= num_samples;

  double sq_dev = 0.0;
  for (const Vector& d : draws) sq_dev += (d - mean).squaredNorm();

  EmpiricalBias out;
  out.bias = (mean - target).norm();
  out.standard_error = num_samples > 1
                           ? std::sqrt(sq_dev / (static_cast<double>(num_samples) *
                                                 (num_samples - 1)))
                           : 0.0;
  out.num_samples = num_samples;
  return out;
}

int choose_K(const ProblemConstants& c, long long T, std::string* warning) {
  if (T < 1) throw std::invalid_argument("choose_K: T must be >= 1");
  c.validate();
  const double arg = c.C_gxy * c.C_fy * static_cast<double>(T) / c.mu;
  if (!(arg > 1.0)) {
    if (warning != nullptr) {
      *warning = "choose_K: log argument " + std::to_string(arg) +
                 " is not > 1; falling back to K = 1";
    }
    return 1;
  }
  const double raw = (c.L_g / c.mu) * std::log(arg);
  const int k = static_cast<int>(std::ceil(raw));
  return k < 1 ? 1 : k;
}

}  // namespace fedbilevel
