// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/quadratic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "fedbilevel/rng.hpp"

namespace fedbilevel {
namespace {

constexpr std::uint64_t kPartialsTag = 1;
constexpr std::uint64_t kHvpYyTag = 2;
constexpr std::uint64_t kHvpXyTag = 3;

void check_symmetric(const Matrix& m, const char* what) {
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument(std::string(what) + " is not symmetric");
  }
}

double eig_min(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double eig_max(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

Matrix support_block(const QuadraticBilevelSpec& spec, int client,
                     const Matrix& m) {
  if (!spec.block_separable) return m;
  const int s = spec.block_start[client];
  const int n = spec.block_size[client];
  return m.block(s, s, n, n);
}

Matrix averaged_q(const QuadraticBilevelSpec& spec) {
  Matrix qbar = Matrix::Zero(spec.dim_lower(), spec.dim_lower());
  for (const auto& q : spec.Q) qbar += q;
  return qbar / spec.num_clients();
}

void check_psd(const Matrix& m, const char* what) {
  check_symmetric(m, what);
  const double lo = eig_min(m);
  const double scale = std::max(1.0, std::abs(eig_max(m)));
  if (lo < -1e-10 * scale) {
    throw std::invalid_argument(std::string(what) +
                                " is not positive semidefinite");
  }
}

}  // namespace

int QuadraticBilevelSpec::dim_upper() const {
  if (P.empty()) throw std::invalid_argument("empty quadratic spec");
  return static_cast<int>(P[0].cols());
}

int QuadraticBilevelSpec::dim_lower() const {
  if (Q.empty()) throw std::invalid_argument("empty quadratic spec");
  return static_cast<int>(Q[0].rows());
}

double QuadraticBilevelSpec::q_eig_min(int client) const {
  return eig_min(support_block(*this, client, Q[client]));
}

double QuadraticBilevelSpec::q_eig_max(int client) const {
  return eig_max(support_block(*this, client, Q[client]));
}

void QuadraticBilevelSpec::validate() const {
  const std::size_t m = Q.size();
  if (m == 0) throw std::invalid_argument("quadratic spec has no clients");
  if (P.size() != m || r.size() != m || S.size() != m || u.size() != m ||
      R.size() != m) {
    throw std::invalid_argument("quadratic spec: per-client arrays disagree");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("quadratic spec: sigma must be finite >= 0");
  }
  const int p = dim_lower();
  const int d = dim_upper();
  if (p < 1 || d < 1) throw std::invalid_argument("quadratic spec: empty dims");

  if (block_separable) {
    if (block_start.size() != m || block_size.size() != m) {
      throw std::invalid_argument("quadratic spec: block layout arrays");
    }
    std::vector<char> covered(p, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const int s = block_start[i];
      const int n = block_size[i];
      if (s < 0 || n < 1 || s + n > p) {
        throw std::invalid_argument("quadratic spec: block out of range");
      }
      for (int j = s; j < s + n; ++j) {
        if (covered[j]) {
          throw std::invalid_argument("quadratic spec: overlapping blocks");
        }
        covered[j] = 1;
      }
    }
  }

  for (std::size_t i = 0; i < m; ++i) {
    if (Q[i].rows() != p || Q[i].cols() != p || S[i].rows() != p ||
        S[i].cols() != p || P[i].rows() != p || P[i].cols() != d ||
        R[i].rows() != d || R[i].cols() != d || r[i].size() != p ||
        u[i].size() != p) {
      throw std::invalid_argument("quadratic spec: shape mismatch");
    }
    check_symmetric(Q[i], "Q");
    check_psd(S[i], "S");
    check_psd(R[i], "R");
    if (q_eig_min(static_cast<int>(i)) <= 0.0) {
      throw std::invalid_argument(
          "quadratic spec: Q is not positive definite on its support");
    }
  }
}

ProblemConstants quadratic_constants(const QuadraticBilevelSpec& spec,
                                     double radius) {
  spec.validate();
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("constants radius must be finite > 0");
  }
  const int m = spec.num_clients();
  ProblemConstants c;
  c.sigma = spec.sigma;
  c.mu = spec.q_eig_min(0);
  c.L_g = spec.q_eig_max(0);
  c.C_gxy = 0.0;
  c.L_f = 0.0;
  c.C_fy = 0.0;
  c.L_gxy = 0.0;  // cross Hessian is constant in (x, y)
  c.L_gyy = 0.0;  // lower Hessian is constant in (x, y)
  for (int i = 0; i < m; ++i) {
    c.mu = std::min(c.mu, spec.q_eig_min(i));
    c.L_g = std::max(c.L_g, spec.q_eig_max(i));
    c.C_gxy = std::max(c.C_gxy, spectral_norm(spec.P[i]));
    const double s_norm = spectral_norm(spec.S[i]);
    const double r_norm = spectral_norm(spec.R[i]);
    c.L_f = std::max(c.L_f, std::max(s_norm, r_norm));
    c.C_fy = std::max(c.C_fy, s_norm * radius);
  }
  c.delta_f = 0.0;
  c.delta_g = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double df_x = spectral_norm(spec.R[i] - spec.R[j]) * radius;
      const double df_y = spectral_norm(spec.S[i] - spec.S[j]) * radius +
                          (spec.S[i] * spec.u[i] - spec.S[j] * spec.u[j]).norm();
      const double dq = spectral_norm(spec.Q[i] - spec.Q[j]);
      const double dp = spectral_norm(spec.P[i] - spec.P[j]);
      const double dg_grad =
          dq * radius + dp * radius + (spec.r[i] - spec.r[j]).norm();
      c.delta_f = std::max({c.delta_f, df_x, df_y});
      c.delta_g = std::max({c.delta_g, dg_grad, dq, dp});
    }
  }
  c.validate();
  return c;
}

namespace {

struct Averages {
  Matrix Pbar, Rbar, Sbar;
  Vector rbar, cbar;  // cbar = (1/M) sum S_m u_m
  Eigen::LLT<Matrix> Qbar_llt;
};

Averages compute_averages(const QuadraticBilevelSpec& spec) {
  const int m = spec.num_clients();
  const int p = spec.dim_lower();
  const int d = spec.dim_upper();
  Averages a;
  a.Pbar = Matrix::Zero(p, d);
  a.Rbar = Matrix::Zero(d, d);
  a.Sbar = Matrix::Zero(p, p);
  a.rbar = Vector::Zero(p);
  a.cbar = Vector::Zero(p);
  for (int i = 0; i < m; ++i) {
    a.Pbar += spec.P[i];
    a.Rbar += spec.R[i];
    a.Sbar += spec.S[i];
    a.rbar += spec.r[i];
    a.cbar += spec.S[i] * spec.u[i];
  }
  a.Pbar /= m;
  a.Rbar /= m;
  a.Sbar /= m;
  a.rbar /= m;
  a.cbar /= m;
  a.Qbar_llt.compute(averaged_q(spec));
  if (a.Qbar_llt.info() != Eigen::Success) {
    throw std::invalid_argument("averaged Q is not positive definite");
  }
  return a;
}

// Solves Q_m z = rhs on client m's support (full space unless block layout).
Vector solve_client_q(const QuadraticBilevelSpec& spec, int client,
                      const Vector& rhs) {
  if (!spec.block_separable) {
    return spec.Q[client].llt().solve(rhs);
  }
  const int s = spec.block_start[client];
  const int n = spec.block_size[client];
  Vector out = Vector::Zero(spec.dim_lower());
  out.segment(s, n) =
      spec.Q[client].block(s, s, n, n).llt().solve(rhs.segment(s, n));
  return out;
}

}  // namespace

Vector exact_lower_solution(const QuadraticBilevelSpec& spec, const Vector& x) {
  require_dim(x, spec.dim_upper(), "x");
  const Averages a = compute_averages(spec);
  return a.Qbar_llt.solve(a.Pbar * x + a.rbar);
}

Vector exact_hypergradient(const QuadraticBilevelSpec& spec, const Vector& x) {
  require_dim(x, spec.dim_upper(), "x");
  const Averages a = compute_averages(spec);
  const Vector ystar = a.Qbar_llt.solve(a.Pbar * x + a.rbar);
  const Vector z = a.Qbar_llt.solve(a.Sbar * ystar - a.cbar);
  return a.Rbar * x + a.Pbar.transpose() * z;
}

Vector exact_indirect_grad(const QuadraticBilevelSpec& spec, int client,
                           const Vector& x, const Vector& y) {
  if (client < 0 || client >= spec.num_clients()) {
    throw std::invalid_argument("client index out of range");
  }
  require_dim(x, spec.dim_upper(), "x");
  require_dim(y, spec.dim_lower(), "y");
  const Vector z =
      solve_client_q(spec, client, spec.S[client] * (y - spec.u[client]));
  return spec.R[client] * x + spec.P[client].transpose() * z;
}

double exact_upper_value(const QuadraticBilevelSpec& spec, const Vector& x) {
  require_dim(x, spec.dim_upper(), "x");
  const Vector ystar = exact_lower_solution(spec, x);
  double total = 0.0;
  for (int i = 0; i < spec.num_clients(); ++i) {
    const Vector dy = ystar - spec.u[i];
    total += 0.5 * dy.dot(spec.S[i] * dy) + 0.5 * x.dot(spec.R[i] * x);
  }
  return total / spec.num_clients();
}

namespace {

Matrix random_orthogonal(RngStream& rng, int n) {
  const Matrix g = rng.gaussian_matrix(n, n, 1.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  return q;
}

Matrix random_spd_with_range(RngStream& rng, int n, double lo, double hi) {
  Vector eigs(n);
  if (n == 1) {
    eigs(0) = hi;
  } else {
    eigs(0) = lo;
    eigs(n - 1) = hi;
    for (int i = 1; i + 1 < n; ++i) eigs(i) = lo + (hi - lo) * rng.uniform();
  }
  const Matrix v = random_orthogonal(rng, n);
  Matrix m = v * eigs.asDiagonal() * v.transpose();
  return 0.5 * (m + m.transpose());
}

Matrix random_psd_with_norm(RngStream& rng, int n, double norm) {
  if (norm == 0.0) return Matrix::Zero(n, n);
  const Matrix w = rng.gaussian_matrix(n, n, 1.0);
  Matrix m = w.transpose() * w / n;
  m = 0.5 * (m + m.transpose());
  const double top = eig_max(m);
  if (top <= 0.0) return Matrix::Identity(n, n) * norm;
  return m * (norm / top);
}

Matrix random_with_spectral_norm(RngStream& rng, int rows, int cols,
                                 double norm) {
  if (norm == 0.0) return Matrix::Zero(rows, cols);
  const Matrix g = rng.gaussian_matrix(rows, cols, 1.0);
  const double top = spectral_norm(g);
  if (top <= 0.0) return Matrix::Zero(rows, cols);
  return g * (norm / top);
}

}  // namespace

QuadraticBilevelSpec random_quadratic_spec(const QuadraticRandomOptions& opt) {
  if (opt.num_clients < 1 || opt.dim_upper < 1 || opt.dim_lower < 1) {
    throw std::invalid_argument("random quadratic: dims and M must be >= 1");
  }
  if (!(opt.mu > 0.0) || !(opt.L_g >= opt.mu)) {
    throw std::invalid_argument("random quadratic: need 0 < mu <= L_g");
  }
  if (opt.cross_norm < 0.0 || opt.upper_scale < 0.0 ||
      opt.heterogeneity < 0.0 || opt.sigma < 0.0) {
    throw std::invalid_argument("random quadratic: negative scale");
  }
  RngStream rng(derive_seed(opt.seed, seed_tag::kProblemGen));
  const int m = opt.num_clients;
  const int p = opt.dim_lower;
  const int d = opt.dim_upper;

  QuadraticBilevelSpec spec;
  spec.sigma = opt.sigma;
  spec.Q.reserve(m);
  spec.P.reserve(m);
  spec.S.reserve(m);
  spec.R.reserve(m);

  const int distinct = opt.shared_curvature ? 1 : m;
  for (int i = 0; i < distinct; ++i) {
    spec.Q.push_back(random_spd_with_range(rng, p, opt.mu, opt.L_g));
    spec.P.push_back(random_with_spectral_norm(rng, p, d, opt.cross_norm));
    spec.S.push_back(random_psd_with_norm(rng, p, opt.upper_scale));
    spec.R.push_back(random_psd_with_norm(rng, d, opt.upper_scale));
  }
  for (int i = distinct; i < m; ++i) {
    spec.Q.push_back(spec.Q[0]);
    spec.P.push_back(spec.P[0]);
    spec.S.push_back(spec.S[0]);
    spec.R.push_back(spec.R[0]);
  }
  for (int i = 0; i < m; ++i) {
    spec.r.push_back(rng.gaussian_vector(p, opt.heterogeneity));
    spec.u.push_back(rng.gaussian_vector(p, opt.heterogeneity));
  }
  spec.validate();
  return spec;
}

QuadraticBilevelSpec scalar_quadratic_spec() {
  QuadraticBilevelSpec spec;
  spec.Q = {Matrix::Identity(1, 1)};
  spec.P = {Matrix::Identity(1, 1)};
  spec.r = {Vector::Zero(1)};
  spec.S = {Matrix::Identity(1, 1)};
  spec.u = {Vector::Ones(1)};
  spec.R = {Matrix::Identity(1, 1)};
  spec.sigma = 0.0;
  return spec;
}

QuadraticBilevelSpec quadratic_from_blocks(
    const std::vector<Matrix>& Q_blocks, const std::vector<Matrix>& P_blocks,
    const std::vector<Vector>& r_blocks, const std::vector<Matrix>& S_blocks,
    const std::vector<Vector>& u_blocks, double sigma) {
  const std::size_t m = Q_blocks.size();
  if (m == 0 || P_blocks.size() != m || r_blocks.size() != m ||
      S_blocks.size() != m || u_blocks.size() != m) {
    throw std::invalid_argument("from_blocks: per-client arrays disagree");
  }
  const int d = static_cast<int>(P_blocks[0].cols());
  int p = 0;
  QuadraticBilevelSpec spec;
  spec.block_separable = true;
  for (std::size_t i = 0; i < m; ++i) {
    const int n = static_cast<int>(Q_blocks[i].rows());
    if (n < 1 || Q_blocks[i].cols() != n || S_blocks[i].rows() != n ||
        S_blocks[i].cols() != n || P_blocks[i].rows() != n ||
        P_blocks[i].cols() != d || r_blocks[i].size() != n ||
        u_blocks[i].size() != n) {
      throw std::invalid_argument("from_blocks: block shape mismatch");
    }
    spec.block_start.push_back(p);
    spec.block_size.push_back(n);
    p += n;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const int s = spec.block_start[i];
    const int n = spec.block_size[i];
    Matrix q = Matrix::Zero(p, p);
    Matrix sm = Matrix::Zero(p, p);
    Matrix pm = Matrix::Zero(p, d);
    Vector rv = Vector::Zero(p);
    Vector uv = Vector::Zero(p);
    q.block(s, s, n, n) = Q_blocks[i];
    sm.block(s, s, n, n) = S_blocks[i];
    pm.middleRows(s, n) = P_blocks[i];
    rv.segment(s, n) = r_blocks[i];
    uv.segment(s, n) = u_blocks[i];
    spec.Q.push_back(std::move(q));
    spec.S.push_back(std::move(sm));
    spec.P.push_back(std::move(pm));
    spec.r.push_back(std::move(rv));
    spec.u.push_back(std::move(uv));
    spec.R.push_back(Matrix::Zero(d, d));
  }
  spec.sigma = sigma;
  spec.validate();
  return spec;
}

class QuadraticProblem::Oracle final : public ExactOracles {
 public:
  Oracle(const QuadraticBilevelSpec* spec) : spec_(spec) {
    av_ = compute_averages(*spec);
  }

  Vector lower_solution(const Vector& x) const override {
    require_dim(x, spec_->dim_upper(), "x");
    return av_.Qbar_llt.solve(av_.Pbar * x + av_.rbar);
  }

  Vector hypergradient(const Vector& x) const override {
    require_dim(x, spec_->dim_upper(), "x");
    const Vector ystar = av_.Qbar_llt.solve(av_.Pbar * x + av_.rbar);
    const Vector z = av_.Qbar_llt.solve(av_.Sbar * ystar - av_.cbar);
    return av_.Rbar * x + av_.Pbar.transpose() * z;
  }

  Vector surrogate_gradient(const Vector& x, const Vector& y) const override {
    require_dim(x, spec_->dim_upper(), "x");
    require_dim(y, spec_->dim_lower(), "y");
    const Vector z = av_.Qbar_llt.solve(av_.Sbar * y - av_.cbar);
    return av_.Rbar * x + av_.Pbar.transpose() * z;
  }

  double upper_value(const Vector& x) const override {
    return exact_upper_value(*spec_, x);
  }

 private:
  const QuadraticBilevelSpec* spec_;
  Averages av_;
};

QuadraticProblem::QuadraticProblem(QuadraticBilevelSpec spec,
                                   double constants_radius)
    : spec_(std::move(spec)) {
  spec_.validate();
  constants_ = quadratic_constants(spec_, constants_radius);
  oracle_ = std::make_unique<Oracle>(&spec_);
}

QuadraticProblem::~QuadraticProblem() = default;

const ExactOracles* QuadraticProblem::exact() const { return oracle_.get(); }

Partials QuadraticProblem::exact_partials(int client, const Vector& x,
                                          const Vector& y) const {
  check_client(client);
  require_dim(x, dim_upper(), "x");
  require_dim(y, dim_lower(), "y");
  require_finite(x, "x");
  require_finite(y, "y");
  Partials p;
  p.grad_x_f = spec_.R[client] * x;
  p.grad_y_f = spec_.S[client] * (y - spec_.u[client]);
  p.grad_y_g = spec_.Q[client] * y - spec_.P[client] * x - spec_.r[client];
  return p;
}

Partials QuadraticProblem::sample_partials(int client, const Vector& x,
                                           const Vector& y,
                                           std::uint64_t seed) const {
  Partials p = exact_partials(client, x, y);
  if (spec_.sigma > 0.0) {
    RngStream rng(derive_seed(seed, kPartialsTag, client));
    p.grad_x_f += rng.gaussian_vector(dim_upper(), spec_.sigma);
    if (spec_.block_separable) {
      const int s = spec_.block_start[client];
      const int n = spec_.block_size[client];
      p.grad_y_f.segment(s, n) += rng.gaussian_vector(n, spec_.sigma);
      p.grad_y_g.segment(s, n) += rng.gaussian_vector(n, spec_.sigma);
    } else {
      p.grad_y_f += rng.gaussian_vector(dim_lower(), spec_.sigma);
      p.grad_y_g += rng.gaussian_vector(dim_lower(), spec_.sigma);
    }
  }
  return p;
}

Vector QuadraticProblem::exact_hvp_yy(int client, const Vector& x,
                                      const Vector& y, const Vector& v) const {
  check_client(client);
  require_dim(v, dim_lower(), "vec");
  require_finite(x, "x");
  require_finite(y, "y");
  (void)x;
  (void)y;
  return spec_.Q[client] * v;
}

Vector QuadraticProblem::hvp_yy_g(int client, const Vector& x, const Vector& y,
                                  const Vector& v, std::uint64_t seed) const {
  Vector out = exact_hvp_yy(client, x, y, v);
  if (spec_.sigma > 0.0) {
    RngStream rng(derive_seed(seed, kHvpYyTag, client));
    if (spec_.block_separable) {
      const int s = spec_.block_start[client];
      const int n = spec_.block_size[client];
      out.segment(s, n) +=
          rng.symmetric_gaussian(n, spec_.sigma) * v.segment(s, n);
    } else {
      out += rng.symmetric_gaussian(dim_lower(), spec_.sigma) * v;
    }
  }
  return out;
}

Vector QuadraticProblem::exact_hvp_xy(int client, const Vector& x,
                                      const Vector& y, const Vector& v) const {
  check_client(client);
  require_dim(v, dim_lower(), "vec");
  require_finite(x, "x");
  require_finite(y, "y");
  (void)x;
  (void)y;
  return -spec_.P[client].transpose() * v;
}

Vector QuadraticProblem::hvp_xy_g(int client, const Vector& x, const Vector& y,
                                  const Vector& v, std::uint64_t seed) const {
  Vector out = exact_hvp_xy(client, x, y, v);
  if (spec_.sigma > 0.0) {
    RngStream rng(derive_seed(seed, kHvpXyTag, client));
    if (spec_.block_separable) {
      const int s = spec_.block_start[client];
      const int n = spec_.block_size[client];
      out += rng.gaussian_matrix(dim_upper(), n, spec_.sigma) * v.segment(s, n);
    } else {
      out += rng.gaussian_matrix(dim_upper(), dim_lower(), spec_.sigma) * v;
    }
  }
  return out;
}

}  // namespace fedbilevel
