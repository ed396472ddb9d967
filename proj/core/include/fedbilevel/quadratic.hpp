// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_QUADRATIC_HPP_
#define FEDBILEVEL_QUADRATIC_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "fedbilevel/problem.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {

// Per-client quadratic bilevel instance:
//   g^m(x, y) = 1/2 y'Q_m y - y'P_m x - y'r_m
//   f^m(x, y) = 1/2 (y - u_m)'S_m(y - u_m) + 1/2 x'R_m x
// with additive Gaussian sampling noise of scale sigma on every sampled
// partial derivative and Hessian entry (yy Hessian noise symmetrized).
//
// Closed forms used throughout (derived once, tested against finite
// differences): grad_y g = Qy - Px - r, hvp_yy(v) = Qv, hvp_xy(v) = -P'v,
// grad_x f = Rx, grad_y f = S(y - u), y*(x) = Qbar^{-1}(Pbar x + rbar).
struct QuadraticBilevelSpec {
  std::vector<Matrix> Q;  // p x p, symmetric positive definite
  std::vector<Matrix> P;  // p x d
  std::vector<Vector> r;  // p
  std::vector<Matrix> S;  // p x p, symmetric positive semidefinite
  std::vector<Vector> u;  // p
  std::vector<Matrix> R;  // d x d, symmetric positive semidefinite
  double sigma = 0.0;

  // Block-separable layout (meta-learning assembly): client m's objectives
  // touch only lower coordinates [block_start[m], block_start[m]+block_size[m]).
  // Spectral invariants are then enforced on each client's own block.
  bool block_separable = false;
  std::vector<int> block_start;
  std::vector<int> block_size;

  int num_clients() const { return static_cast<int>(Q.size()); }
  int dim_upper() const;
  int dim_lower() const;

  // Checks shapes, symmetry, positive (semi)definiteness.  Throws
  // std::invalid_argument on violation.
  void validate() const;

  // Smallest/largest eigenvalue of Q_m over the client's support
  // (full space, or the client's block when block_separable).
  double q_eig_min(int client) const;
  double q_eig_max(int client) const;
};

// Exact constants from the spec matrices.  Curvature constants (mu, L_g,
// L_f, C_gxy) are global; gradient-magnitude and heterogeneity constants
// (C_fy, delta_f, delta_g) are unbounded for quadratics and are reported
// over the ball of the given radius around the origin in x and around u_m
// in y.
ProblemConstants quadratic_constants(const QuadraticBilevelSpec& spec,
                                     double radius = 10.0);

// y*(x) = Qbar^{-1}(Pbar x + rbar) for the averaged lower objective.
Vector exact_lower_solution(const QuadraticBilevelSpec& spec, const Vector& x);

// Gradient of F(x) = (1/M) sum_m f^m(x, y*(x)).
Vector exact_hypergradient(const QuadraticBilevelSpec& spec, const Vector& x);

// Client m's deterministic single-level surrogate gradient at (x, y):
// grad_x f^m - [d2g^m/dxdy] [d2g^m/dy2]^{-1} grad_y f^m.
Vector exact_indirect_grad(const QuadraticBilevelSpec& spec, int client,
                           const Vector& x, const Vector& y);

// F(x) with the lower level solved exactly.
double exact_upper_value(const QuadraticBilevelSpec& spec, const Vector& x);

struct QuadraticRandomOptions {
  int num_clients = 1;
  int dim_upper = 2;
  int dim_lower = 2;
  double mu = 0.5;            // smallest Q eigenvalue (pinned exactly)
  double L_g = 1.0;           // largest Q eigenvalue (pinned exactly)
  double cross_norm = 1.0;    // spectral norm of every P_m
  double upper_scale = 1.0;   // spectral scale of S_m and R_m
  double heterogeneity = 1.0; // scale of the client-varying r_m, u_m
  double sigma = 0.0;
  bool shared_curvature = false;  // same Q, P, S, R on all clients
  std::uint64_t seed = 0;
};

// Random well-conditioned instance with the requested spectra.
QuadraticBilevelSpec random_quadratic_spec(const QuadraticRandomOptions& opt);

// The 1x1 sanity instance g = 1/2 y^2 - xy, f = 1/2 (y-1)^2 + 1/2 x^2,
// whose composed objective is F(x) = 1/2 (x-1)^2 + 1/2 x^2.
QuadraticBilevelSpec scalar_quadratic_spec();

// Assembles a block-separable spec from per-client blocks.  Block m of the
// lower space gets Q_blocks[m] (square), cross term P_blocks[m]
// (block_dim x dim_upper), offsets r_blocks[m], and upper-level data
// S_blocks[m], u_blocks[m] on the same block.  R_m defaults to zero.
QuadraticBilevelSpec quadratic_from_blocks(
    const std::vector<Matrix>& Q_blocks, const std::vector<Matrix>& P_blocks,
    const std::vector<Vector>& r_blocks, const std::vector<Matrix>& S_blocks,
    const std::vector<Vector>& u_blocks, double sigma = 0.0);

// BilevelProblem adapter over a QuadraticBilevelSpec.
class QuadraticProblem final : public BilevelProblem {
 public:
  explicit QuadraticProblem(QuadraticBilevelSpec spec,
                            double constants_radius = 10.0);
  ~QuadraticProblem() override;

  int dim_upper() const override { return spec_.dim_upper(); }
  int dim_lower() const override { return spec_.dim_lower(); }
  int num_clients() const override { return spec_.num_clients(); }
  const ProblemConstants& constants() const override { return constants_; }

  Partials sample_partials(int client, const Vector& x, const Vector& y,
                           std::uint64_t seed) const override;
  Vector hvp_yy_g(int client, const Vector& x, const Vector& y,
                  const Vector& v, std::uint64_t seed) const override;
  Vector hvp_xy_g(int client, const Vector& x, const Vector& y,
                  const Vector& v, std::uint64_t seed) const override;

  Partials exact_partials(int client, const Vector& x,
                          const Vector& y) const override;
  Vector exact_hvp_yy(int client, const Vector& x, const Vector& y,
                      const Vector& v) const override;
  Vector exact_hvp_xy(int client, const Vector& x, const Vector& y,
                      const Vector& v) const override;

  const ExactOracles* exact() const override;
  const QuadraticBilevelSpec& spec() const { return spec_; }

 private:
  class Oracle;

  QuadraticBilevelSpec spec_;
  ProblemConstants constants_;
  std::unique_ptr<Oracle> oracle_;
};

}  // namespace fedbilevel

#endif  // FEDBILEVEL_QUADRATIC_HPP_
