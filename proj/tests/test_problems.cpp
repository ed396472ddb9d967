// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedbilevel/constants.hpp"
#include "fedbilevel/dataset.hpp"
#include "fedbilevel/heterogeneity.hpp"
#include "fedbilevel/hyperclean.hpp"
#include "fedbilevel/metalearn.hpp"
#include "fedbilevel/quadratic.hpp"
#include "fedbilevel/rng.hpp"

using namespace fedbilevel;

namespace {

HyperCleanSpec small_hyperclean(int clients, int per_client, int dim,
                                std::uint64_t seed) {
  HyperCleanSpec spec;
  spec.nu = 0.05;
  spec.weight_fn = sigmoid;
  spec.weight_deriv = sigmoid_deriv;
  for (int m = 0; m < clients; ++m) {
    SyntheticClassificationOptions opt;
    opt.num_samples = per_client;
    opt.dim = dim;
    opt.label_noise = 0.2;
    opt.seed = derive_seed(seed, static_cast<std::uint64_t>(m), 0);
    spec.train.push_back(synthetic_classification(opt));
    opt.num_samples = per_client + 2;
    opt.seed = derive_seed(seed, static_cast<std::uint64_t>(m), 1);
    spec.val.push_back(synthetic_classification(opt));
  }
  return spec;
}

// Full-batch lower objective coded directly from its definition, used as the
// finite-difference reference for every hyper-cleaning derivative.
double lower_value_direct(const HyperCleanSpec& spec, int client,
                          const Vector& x, const Vector& y) {
  const Dataset& tr = spec.train[static_cast<std::size_t>(client)];
  double total = 0.0;
  for (int i = 0; i < tr.num_samples(); ++i) {
    const double s = tr.labels[i] > 0.5 ? 1.0 : -1.0;
    const double t = s * tr.features.row(i).dot(y);
    const double loss =
        t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
    total += sigmoid(x[hyperclean_x_index(spec, client, i)]) * loss;
  }
  return total / tr.num_samples() + spec.nu * y.squaredNorm();
}

}  // namespace

TEST_CASE("hyperclean construction rejects degenerate specs") {
  HyperCleanSpec spec = small_hyperclean(2, 5, 3, 1);

  HyperCleanSpec bad = spec;
  bad.nu = 0.0;
  CHECK_THROWS_AS(make_hyperclean_problem(bad), std::invalid_argument);

  bad = spec;
  bad.train.clear();
  bad.val.clear();
  CHECK_THROWS_AS(make_hyperclean_problem(bad), std::invalid_argument);

  bad = spec;
  bad.val.pop_back();
  CHECK_THROWS_AS(make_hyperclean_problem(bad), std::invalid_argument);

  bad = spec;
  bad.train[1] = Dataset{};
  CHECK_THROWS_AS(make_hyperclean_problem(bad), std::invalid_argument);

  bad = spec;
  bad.minibatch = 0;
  CHECK_THROWS_AS(make_hyperclean_problem(bad), std::invalid_argument);

  bad = spec;
  bad.weight_fn = [](double z) { return z; };  // not into (0, 1]
  bad.weight_deriv = [](double) { return 1.0; };
  CHECK_THROWS_AS(make_hyperclean_problem(bad), std::invalid_argument);
}

TEST_CASE("hyperclean at x = 0 is half the plain ridge logistic loss") {
  const HyperCleanSpec spec = small_hyperclean(2, 8, 4, 2);
  RngStream rng(11);
  const Vector y = rng.gaussian_vector(4);
  const Vector x = Vector::Zero(8 + 8);
  for (int m = 0; m < 2; ++m) {
    const double direct = 0.5 * logistic_loss(spec.train[m], y) +
                          spec.nu * y.squaredNorm();
    CHECK(hyperclean_lower_value(spec, m, x, y) ==
          doctest::Approx(direct).epsilon(1e-14));
    CHECK(hyperclean_upper_value(spec, m, y) ==
          doctest::Approx(logistic_loss(spec.val[m], y)).epsilon(1e-14));
  }
}

TEST_CASE("hyperclean exact partials match finite differences") {
  const HyperCleanSpec spec = small_hyperclean(2, 6, 3, 3);
  const auto problem = make_hyperclean_problem(spec);
  RngStream rng(21);
  const Vector x = rng.gaussian_vector(problem->dim_upper(), 0.5);
  const Vector y = rng.gaussian_vector(3, 0.5);
  const double h = 1e-6;

  for (int m = 0; m < 2; ++m) {
    const Partials parts = problem->exact_partials(m, x, y);
    CHECK(parts.grad_x_f.norm() == 0.0);  // f does not touch x

    for (int j = 0; j < 3; ++j) {
      Vector yp = y, ym = y;
      yp[j] += h;
      ym[j] -= h;
      const double fd_g = (lower_value_direct(spec, m, x, yp) -
                           lower_value_direct(spec, m, x, ym)) /
                          (2.0 * h);
      CHECK(parts.grad_y_g[j] == doctest::Approx(fd_g).epsilon(1e-6));
      const double fd_f = (logistic_loss(spec.val[m], yp) -
                           logistic_loss(spec.val[m], ym)) /
                          (2.0 * h);
      CHECK(parts.grad_y_f[j] == doctest::Approx(fd_f).epsilon(1e-6));
    }
  }
}

TEST_CASE("hyperclean Hessian-vector products match finite differences") {
  const HyperCleanSpec spec = small_hyperclean(2, 5, 3, 4);
  const auto problem = make_hyperclean_problem(spec);
  RngStream rng(22);
  const Vector x = rng.gaussian_vector(problem->dim_upper(), 0.5);
  const Vector y = rng.gaussian_vector(3, 0.5);
  const Vector v = rng.gaussian_vector(3);

  for (int m = 0; m < 2; ++m) {
    // yy block: directional difference of the exact y-gradient.
    const double h = 1e-6;
    const Partials plus = problem->exact_partials(m, x, y + h * v);
    const Partials minus = problem->exact_partials(m, x, y - h * v);
    const Vector fd = (plus.grad_y_g - minus.grad_y_g) / (2.0 * h);
    const Vector hvp = problem->exact_hvp_yy(m, x, y, v);
    CHECK((hvp - fd).norm() <= 1e-5 * (1.0 + hvp.norm()));

    // xy block: mixed second difference of the scalar objective.
    const Vector cross = problem->exact_hvp_xy(m, x, y, v);
    const double s = 1e-4;
    for (int gi = 0; gi < problem->dim_upper(); ++gi) {
      Vector xp = x, xm = x;
      xp[gi] += s;
      xm[gi] -= s;
      const double mixed =
          (lower_value_direct(spec, m, xp, y + s * v) -
           lower_value_direct(spec, m, xp, y - s * v) -
           lower_value_direct(spec, m, xm, y + s * v) +
           lower_value_direct(spec, m, xm, y - s * v)) /
          (4.0 * s * s);
      CHECK(cross[gi] == doctest::Approx(mixed).epsilon(2e-4));
    }
  }
}

TEST_CASE("hyperclean cross derivatives live only in the client's own block") {
  HyperCleanSpec spec = small_hyperclean(3, 4, 3, 5);
  spec.train[1] = spec.train[1].subset({0, 1, 2});  // unequal block sizes
  const auto problem = make_hyperclean_problem(spec);
  REQUIRE(problem->dim_upper() == 4 + 3 + 4);
  RngStream rng(23);
  const Vector x = rng.gaussian_vector(11, 0.5);
  const Vector y = rng.gaussian_vector(3, 0.5);
  const Vector v = rng.gaussian_vector(3);

  const int offsets[3] = {0, 4, 7};
  const int sizes[3] = {4, 3, 4};
  for (int m = 0; m < 3; ++m) {
    const Vector cross = problem->exact_hvp_xy(m, x, y, v);
    for (int gi = 0; gi < 11; ++gi) {
      const bool inside = gi >= offsets[m] && gi < offsets[m] + sizes[m];
      if (!inside) CHECK(cross[gi] == 0.0);
    }
    CHECK(cross.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("hyperclean_x_index walks the concatenated layout") {
  HyperCleanSpec spec = small_hyperclean(2, 4, 3, 6);
  spec.train[0] = spec.train[0].subset({0, 1, 2});  // sizes (3, 4)
  CHECK(hyperclean_x_index(spec, 0, 0) == 0);
  CHECK(hyperclean_x_index(spec, 0, 2) == 2);
  CHECK(hyperclean_x_index(spec, 1, 0) == 3);
  CHECK(hyperclean_x_index(spec, 1, 3) == 6);
  CHECK_THROWS_AS(hyperclean_x_index(spec, 0, 3), std::invalid_argument);
  CHECK_THROWS_AS(hyperclean_x_index(spec, 2, 0), std::invalid_argument);
  CHECK_THROWS_AS(hyperclean_x_index(spec, -1, 0), std::invalid_argument);
}

TEST_CASE("hyperclean lower Hessian is uniformly strongly convex") {
  const HyperCleanSpec spec = small_hyperclean(2, 10, 4, 7);
  const auto problem = make_hyperclean_problem(spec);
  const ProblemConstants& c = problem->constants();
  CHECK(c.mu == doctest::Approx(2.0 * spec.nu).epsilon(1e-15));
  CHECK(c.L_g >= c.mu);

  RngStream rng(24);
  const Vector x = rng.gaussian_vector(problem->dim_upper(), 1.0);
  const Vector y = rng.gaussian_vector(4, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector v = rng.gaussian_vector(4);
    const int m = trial % 2;
    const double rayleigh =
        v.dot(problem->exact_hvp_yy(m, x, y, v)) / v.squaredNorm();
    CHECK(rayleigh >= c.mu - 1e-12);
    CHECK(rayleigh <= c.L_g + 1e-12);
  }
}

TEST_CASE("hyperclean sampled oracles are unbiased for the exact ones") {
  const HyperCleanSpec spec = small_hyperclean(1, 6, 3, 8);
  const auto problem = make_hyperclean_problem(spec);
  RngStream rng(25);
  const Vector x = rng.gaussian_vector(6, 0.5);
  const Vector y = rng.gaussian_vector(3, 0.5);
  const Vector v = rng.gaussian_vector(3);

  const Partials exact = problem->exact_partials(0, x, y);
  const Vector hyy = problem->exact_hvp_yy(0, x, y, v);
  const Vector hxy = problem->exact_hvp_xy(0, x, y, v);

  const int N = 20000;
  Vector sum_g = Vector::Zero(3), sum_f = Vector::Zero(3);
  Vector sumsq_g = Vector::Zero(3), sumsq_f = Vector::Zero(3);
  Vector sum_yy = Vector::Zero(3), sum_xy = Vector::Zero(6);
  Vector sumsq_yy = Vector::Zero(3), sumsq_xy = Vector::Zero(6);
  for (int s = 0; s < N; ++s) {
    const std::uint64_t seed = derive_seed(77u, static_cast<std::uint64_t>(s));
    const Partials p = problem->sample_partials(0, x, y, seed);
    CHECK(p.grad_x_f.norm() == 0.0);
    sum_g += p.grad_y_g;
    sumsq_g += p.grad_y_g.cwiseAbs2();
    sum_f += p.grad_y_f;
    sumsq_f += p.grad_y_f.cwiseAbs2();
    const Vector syy = problem->hvp_yy_g(0, x, y, v, seed);
    sum_yy += syy;
    sumsq_yy += syy.cwiseAbs2();
    const Vector sxy = problem->hvp_xy_g(0, x, y, v, seed);
    sum_xy += sxy;
    sumsq_xy += sxy.cwiseAbs2();
  }
  const auto check_mean = [&](const Vector& sum, const Vector& sumsq,
                              const Vector& target) {
    for (int j = 0; j < target.size(); ++j) {
      const double mean = sum[j] / N;
      const double var =
          std::max(sumsq[j] / N - mean * mean, 0.0) / (N - 1.0) * N;
      const double se = std::sqrt(var / N);
      CHECK(std::abs(mean - target[j]) <= 4.0 * se + 1e-12);
    }
  };
  check_mean(sum_g, sumsq_g, exact.grad_y_g);
  check_mean(sum_f, sumsq_f, exact.grad_y_f);
  check_mean(sum_yy, sumsq_yy, hyy);
  check_mean(sum_xy, sumsq_xy, hxy);

  // Same seed, same sample.
  const Partials a = problem->sample_partials(0, x, y, 9001);
  const Partials b = problem->sample_partials(0, x, y, 9001);
  CHECK((a.grad_y_g - b.grad_y_g).norm() == 0.0);
  CHECK((a.grad_y_f - b.grad_y_f).norm() == 0.0);
}

TEST_CASE("classification_accuracy scores sign agreement") {
  Dataset data;
  data.features = Matrix(4, 2);
  data.features << 1.0, 0.0,   //
      -1.0, 0.0,               //
      2.0, 0.0,                //
      -2.0, 0.0;
  data.labels = Vector(4);
  data.labels << 1, 0, 1, 1;
  Vector y(2);
  y << 1.0, 0.0;
  // Predictions 1, 0, 1, 0 vs labels 1, 0, 1, 1.
  CHECK(classification_accuracy(data, y) == doctest::Approx(0.75));
  CHECK(classification_accuracy(data, -y) == doctest::Approx(0.25));
}

TEST_CASE("hyperclean demo data aligns corruption flags with the x layout") {
  HyperCleanDemoOptions opt;
  opt.num_train = 60;
  opt.num_val = 40;
  opt.num_test = 50;
  opt.dim = 5;
  opt.num_clients = 3;
  opt.corruption_rate = 0.25;
  opt.seed = 31;
  const HyperCleanDemoData demo = make_hyperclean_demo_data(opt);

  int total_train = 0;
  for (const Dataset& d : demo.spec.train) total_train += d.num_samples();
  CHECK(total_train == 60);
  CHECK(demo.test.num_samples() == 50);
  CHECK(static_cast<int>(demo.corrupted.size()) == 60);

  int flagged = 0;
  for (char f : demo.corrupted) flagged += f ? 1 : 0;
  CHECK(flagged == 15);  // round(0.25 * 60)

  // Rebuilding with zero corruption keeps features and ordering fixed, so
  // labels must differ exactly at the flagged positions.
  HyperCleanDemoOptions clean_opt = opt;
  clean_opt.corruption_rate = 0.0;
  const HyperCleanDemoData clean = make_hyperclean_demo_data(clean_opt);
  int diffs = 0;
  for (int m = 0; m < 3; ++m) {
    const Dataset& a = demo.spec.train[m];
    const Dataset& b = clean.spec.train[m];
    REQUIRE(a.num_samples() == b.num_samples());
    CHECK((a.features - b.features).norm() == 0.0);
    for (int i = 0; i < a.num_samples(); ++i) {
      const int gi = hyperclean_x_index(demo.spec, m, i);
      const bool differs = a.labels[i] != b.labels[i];
      CHECK(differs == (demo.corrupted[gi] != 0));
      diffs += differs ? 1 : 0;
    }
  }
  CHECK(diffs == 15);

  // Determinism of the whole pipeline.
  const HyperCleanDemoData again = make_hyperclean_demo_data(opt);
  CHECK((again.spec.train[0].labels - demo.spec.train[0].labels).norm() == 0.0);
  CHECK((again.test.features - demo.test.features).norm() == 0.0);
}

TEST_CASE("metalearn spec validation names each violation") {
  MetaLearnDemoOptions opt;
  opt.num_clients = 2;
  opt.shared_dim = 3;
  opt.task_dim = 2;
  opt.seed = 41;
  const MetaLearnSpec good = make_metalearn_demo_spec(opt);
  CHECK_NOTHROW(metalearn_quadratic_spec(good));

  MetaLearnSpec bad = good;
  bad.omega = 0.0;
  CHECK_THROWS_AS(metalearn_quadratic_spec(bad), std::invalid_argument);

  bad = good;
  bad.tasks.clear();
  bad.maps.clear();
  CHECK_THROWS_AS(metalearn_quadratic_spec(bad), std::invalid_argument);

  bad = good;
  bad.maps.pop_back();
  CHECK_THROWS_AS(metalearn_quadratic_spec(bad), std::invalid_argument);

  bad = good;
  bad.maps[0] = Matrix::Zero(5, 5);  // wrong shape
  CHECK_THROWS_AS(metalearn_quadratic_spec(bad), std::invalid_argument);

  bad = good;
  bad.shared_dim = 0;
  CHECK_THROWS_AS(metalearn_quadratic_spec(bad), std::invalid_argument);
}

TEST_CASE("metalearn demo spec has the advertised shapes") {
  MetaLearnDemoOptions opt;
  opt.num_clients = 3;
  opt.shared_dim = 4;
  opt.task_dim = 2;
  opt.train_per_task = 12;
  opt.test_per_task = 9;
  opt.seed = 42;
  const MetaLearnSpec spec = make_metalearn_demo_spec(opt);
  REQUIRE(spec.tasks.size() == 3);
  REQUIRE(spec.maps.size() == 3);
  for (int m = 0; m < 3; ++m) {
    CHECK(spec.tasks[m].train.num_samples() == 12);
    CHECK(spec.tasks[m].test.num_samples() == 9);
    CHECK(spec.tasks[m].train.dim() == 2);
    CHECK(spec.maps[m].rows() == 2);
    CHECK(spec.maps[m].cols() == 4);
  }

  const auto problem = make_metalearn_problem(spec);
  CHECK(problem->num_clients() == 3);
  CHECK(problem->dim_upper() == 4);
  CHECK(problem->dim_lower() == 6);  // stacked task blocks
  CHECK(problem->exact() != nullptr);
}

TEST_CASE("metalearn oracles match the written objectives") {
  MetaLearnDemoOptions opt;
  opt.num_clients = 2;
  opt.shared_dim = 3;
  opt.task_dim = 2;
  opt.train_per_task = 8;
  opt.test_per_task = 7;
  opt.seed = 43;
  const MetaLearnSpec spec = make_metalearn_demo_spec(opt);
  const auto problem = make_metalearn_problem(spec);
  const int d = problem->dim_upper();
  const int p = problem->dim_lower();

  // Objectives coded directly from their definitions.
  const auto g_direct = [&](int m, const Vector& x, const Vector& y) {
    const MetaLearnTask& task = spec.tasks[static_cast<std::size_t>(m)];
    const Vector ym = y.segment(2 * m, 2);
    const Vector resid = task.train.features * ym - task.train.labels;
    const Vector anchor = ym - spec.maps[static_cast<std::size_t>(m)] * x;
    return resid.squaredNorm() / (2.0 * task.train.num_samples()) +
           0.5 * spec.omega * anchor.squaredNorm();
  };
  const auto f_direct = [&](int m, const Vector& y) {
    const MetaLearnTask& task = spec.tasks[static_cast<std::size_t>(m)];
    const Vector ym = y.segment(2 * m, 2);
    const Vector resid = task.test.features * ym - task.test.labels;
    return resid.squaredNorm() / (2.0 * task.test.num_samples());
  };

  RngStream rng(26);
  const Vector x = rng.gaussian_vector(d, 0.7);
  const Vector y = rng.gaussian_vector(p, 0.7);
  const double h = 1e-3;  // quadratic objectives: FD exact up to roundoff

  for (int m = 0; m < 2; ++m) {
    const Partials parts = problem->exact_partials(m, x, y);
    for (int j = 0; j < p; ++j) {
      Vector yp = y, ym_ = y;
      yp[j] += h;
      ym_[j] -= h;
      const double fd_g = (g_direct(m, x, yp) - g_direct(m, x, ym_)) / (2 * h);
      const double fd_f = (f_direct(m, yp) - f_direct(m, ym_)) / (2 * h);
      CHECK(parts.grad_y_g[j] == doctest::Approx(fd_g).epsilon(5e-9));
      // The model's f differs from the test loss by an additive constant
      // only, so the gradients agree.
      CHECK(parts.grad_y_f[j] == doctest::Approx(fd_f).epsilon(5e-9));
    }

    // Cross block via the mixed second difference of g.
    const Vector v = rng.gaussian_vector(p);
    const Vector cross = problem->exact_hvp_xy(m, x, y, v);
    for (int gi = 0; gi < d; ++gi) {
      Vector xp = x, xm = x;
      xp[gi] += h;
      xm[gi] -= h;
      const double mixed =
          (g_direct(m, xp, y + h * v) - g_direct(m, xp, y - h * v) -
           g_direct(m, xm, y + h * v) + g_direct(m, xm, y - h * v)) /
          (4.0 * h * h);
      CHECK(cross[gi] == doctest::Approx(mixed).epsilon(1e-6));
    }
  }
}

TEST_CASE("metalearn lower gradients touch only the client's block") {
  MetaLearnDemoOptions opt;
  opt.num_clients = 3;
  opt.shared_dim = 3;
  opt.task_dim = 2;
  opt.seed = 44;
  const MetaLearnSpec spec = make_metalearn_demo_spec(opt);
  const auto problem = make_metalearn_problem(spec);

  RngStream rng(27);
  const Vector x = rng.gaussian_vector(3);
  const Vector y = rng.gaussian_vector(6);
  for (int m = 0; m < 3; ++m) {
    const Partials parts = problem->exact_partials(m, x, y);
    const Vector hv = problem->exact_hvp_yy(m, x, y, rng.gaussian_vector(6));
    for (int j = 0; j < 6; ++j) {
      const bool inside = j >= 2 * m && j < 2 * (m + 1);
      if (!inside) {
        CHECK(parts.grad_y_g[j] == 0.0);
        CHECK(parts.grad_y_f[j] == 0.0);
        CHECK(hv[j] == 0.0);
      }
    }
    CHECK(parts.grad_y_g.cwiseAbs().maxCoeff() > 0.0);
  }

  const QuadraticBilevelSpec qspec = metalearn_quadratic_spec(spec);
  CHECK(qspec.block_separable);
  REQUIRE(qspec.block_start.size() == 3);
  for (int m = 0; m < 3; ++m) {
    CHECK(qspec.block_start[m] == 2 * m);
    CHECK(qspec.block_size[m] == 2);
    // Anchored block curvature keeps the lower level omega-strongly convex.
    CHECK(qspec.q_eig_min(m) >= spec.omega - 1e-12);
  }
}

TEST_CASE("metalearn with one client is a plain bilevel problem") {
  MetaLearnDemoOptions opt;
  opt.num_clients = 1;
  opt.shared_dim = 3;
  opt.task_dim = 2;
  opt.train_per_task = 10;
  opt.test_per_task = 10;
  opt.seed = 45;
  const MetaLearnSpec spec = make_metalearn_demo_spec(opt);
  const auto problem = make_metalearn_problem(spec);
  REQUIRE(problem->num_clients() == 1);
  const ExactOracles* oracle = problem->exact();
  REQUIRE(oracle != nullptr);

  // Hypergradient agrees with central differences of x -> F(x).
  RngStream rng(28);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector x = rng.gaussian_vector(3, 0.8);
    const Vector grad = oracle->hypergradient(x);
    const double h = 1e-4;
    for (int j = 0; j < 3; ++j) {
      Vector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (oracle->upper_value(xp) - oracle->upper_value(xm)) /
                        (2.0 * h);
      CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  // The model's upper value is the task test loss up to an x-independent
  // constant: differences between points must agree.
  const auto test_loss_at_ystar = [&](const Vector& x) {
    const Vector ystar = oracle->lower_solution(x);
    const Vector resid =
        spec.tasks[0].test.features * ystar - spec.tasks[0].test.labels;
    return resid.squaredNorm() / (2.0 * spec.tasks[0].test.num_samples());
  };
  const Vector x0 = rng.gaussian_vector(3), x1 = rng.gaussian_vector(3);
  const double model_diff = oracle->upper_value(x1) - oracle->upper_value(x0);
  const double loss_diff = test_loss_at_ystar(x1) - test_loss_at_ystar(x0);
  CHECK(model_diff == doctest::Approx(loss_diff).epsilon(1e-9));
}

TEST_CASE("heterogeneity of identical clients is zero") {
  QuadraticRandomOptions opt;
  opt.num_clients = 1;
  opt.dim_upper = 3;
  opt.dim_lower = 3;
  opt.seed = 51;
  QuadraticBilevelSpec spec = random_quadratic_spec(opt);
  spec.Q.push_back(spec.Q[0]);
  spec.P.push_back(spec.P[0]);
  spec.r.push_back(spec.r[0]);
  spec.S.push_back(spec.S[0]);
  spec.u.push_back(spec.u[0]);
  spec.R.push_back(spec.R[0]);
  const QuadraticProblem problem(spec);

  const HeterogeneityReport report = measure_heterogeneity(
      problem, Vector::Zero(3), Vector::Zero(3), 5, 3);
  CHECK(report.delta_f_emp == 0.0);
  CHECK(report.delta_g_emp == 0.0);
  CHECK(report.delta_hat_emp == 0.0);
  CHECK(report.within_bound);
  CHECK(report.num_probe_points == 5);
}

TEST_CASE("heterogeneity sees exactly the lower-level offset difference") {
  QuadraticRandomOptions opt;
  opt.num_clients = 1;
  opt.dim_upper = 3;
  opt.dim_lower = 4;
  opt.seed = 52;
  QuadraticBilevelSpec spec = random_quadratic_spec(opt);
  spec.Q.push_back(spec.Q[0]);
  spec.P.push_back(spec.P[0]);
  Vector shifted = spec.r[0];
  shifted[0] += 0.75;
  shifted[2] -= 0.5;
  spec.r.push_back(shifted);
  spec.S.push_back(spec.S[0]);
  spec.u.push_back(spec.u[0]);
  spec.R.push_back(spec.R[0]);
  const QuadraticProblem problem(spec);

  const HeterogeneityReport report = measure_heterogeneity(
      problem, Vector::Zero(3), Vector::Zero(4), 7, 4);
  const double expect = std::sqrt(0.75 * 0.75 + 0.5 * 0.5);
  CHECK(report.delta_g_emp == doctest::Approx(expect).epsilon(1e-12));
  // Upper objectives are identical; so are the surrogate maps, which do not
  // read r.
  CHECK(report.delta_f_emp == 0.0);
  CHECK(report.delta_hat_emp <= 1e-10);
}

TEST_CASE("measured surrogate heterogeneity obeys the closed-form bound") {
  QuadraticRandomOptions opt;
  opt.num_clients = 3;
  opt.dim_upper = 4;
  opt.dim_lower = 4;
  opt.seed = 53;
  const QuadraticProblem problem(random_quadratic_spec(opt));

  const HeterogeneityReport report = measure_heterogeneity(
      problem, Vector::Zero(4), Vector::Zero(4), 6, 5);
  CHECK(report.delta_f_emp > 0.0);
  CHECK(report.delta_g_emp > 0.0);
  CHECK(report.delta_hat_emp > 0.0);
  CHECK(report.within_bound);
  CHECK(report.delta_hat_emp * report.delta_hat_emp <=
        report.delta_hat_bound * report.delta_hat_bound + 1e-9);

  // The reported bound is the derived constant of the problem's own
  // advertised heterogeneity numbers.
  const double expect =
      DerivedConstants::from(problem.constants(), 1).delta_hat;
  CHECK(report.delta_hat_bound == doctest::Approx(expect).epsilon(1e-15));

  CHECK_THROWS_AS(measure_heterogeneity(problem, Vector::Zero(4),
                                        Vector::Zero(4), 0, 1),
                  std::invalid_argument);
}
