// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/hyperclean.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include <Eigen/Eigenvalues>

#include "fedbilevel/rng.hpp"

namespace fedbilevel {
namespace {

// Stream tags for the per-operation index draws.
constexpr std::uint64_t kPartialsTag = 1;
constexpr std::uint64_t kHvpYyTag = 2;
constexpr std::uint64_t kHvpXyTag = 3;

// max |d/dt sigma'(t)| = 1/(6*sqrt(3)), the third-derivative bound of the
// logistic loss and the curvature bound of the sigmoid weight map.
constexpr double kSigmoidCurvBound = 0.09622504486493764;

// Evaluation region radius used when a bound has no global constant.
constexpr double kBoundRadius = 10.0;

double loss_from_margin(double t) {
  return t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

// dl/dt = -sigma(-t), numerically stable on both tails.
double dloss_from_margin(double t) {
  return t >= 0.0 ? -std::exp(-t) / (1.0 + std::exp(-t))
                  : -1.0 / (1.0 + std::exp(t));
}

double d2loss_from_margin(double t) {
  const double s = sigmoid(t);
  return s * (1.0 - s);
}

double sign_label(double label) { return label > 0.5 ? 1.0 : -1.0; }

struct ClientStats {
  double maxa_train = 0.0;
  double gram_max_train = 0.0;   // lambda_max of (1/n) A'A over train
  double gram_max_val = 0.0;
  double maxa_val = 0.0;
  double sum_sq = 0.0;           // sum of ||a_i||^2 over train
  double sum_cube = 0.0;
  double sum_quart = 0.0;
};

ClientStats client_stats(const Dataset& train, const Dataset& val) {
  ClientStats s;
  for (int i = 0; i < train.num_samples(); ++i) {
    const double a = train.features.row(i).norm();
    s.maxa_train = std::max(s.maxa_train, a);
    s.sum_sq += a * a;
    s.sum_cube += a * a * a;
    s.sum_quart += a * a * a * a;
  }
  for (int j = 0; j < val.num_samples(); ++j) {
    s.maxa_val = std::max(s.maxa_val, val.features.row(j).norm());
  }
  const auto gram_max = [](const Dataset& data) {
    const Matrix gram = data.features.transpose() * data.features /
                        static_cast<double>(data.num_samples());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    return es.eigenvalues().maxCoeff();
  };
  s.gram_max_train = gram_max(train);
  s.gram_max_val = gram_max(val);
  return s;
}

class HyperCleanProblem final : public BilevelProblem {
 public:
  explicit HyperCleanProblem(HyperCleanSpec spec) : spec_(std::move(spec)) {
    validate();
    offsets_.reserve(spec_.train.size());
    int total = 0;
    for (const Dataset& d : spec_.train) {
      offsets_.push_back(total);
      total += d.num_samples();
    }
    dim_x_ = total;
    dim_y_ = spec_.train[0].dim();
    derive_constants();
  }

  int dim_upper() const override { return dim_x_; }
  int dim_lower() const override { return dim_y_; }
  int num_clients() const override {
    return static_cast<int>(spec_.train.size());
  }
  const ProblemConstants& constants() const override { return constants_; }

  Partials sample_partials(int client, const Vector& x, const Vector& y,
                           std::uint64_t seed) const override {
    check_query(client, x, y);
    const Dataset& tr = spec_.train[static_cast<std::size_t>(client)];
    const Dataset& va = spec_.val[static_cast<std::size_t>(client)];
    RngStream rng(derive_seed(seed, kPartialsTag,
                              static_cast<std::uint64_t>(client)));
    Partials out;
    out.grad_x_f = Vector::Zero(dim_x_);
    out.grad_y_f = Vector::Zero(dim_y_);
    out.grad_y_g = Vector::Zero(dim_y_);
    const double inv_b = 1.0 / spec_.minibatch;
    for (int b = 0; b < spec_.minibatch; ++b) {
      const int i = static_cast<int>(rng.uniform_int(tr.num_samples()));
      out.grad_y_g += inv_b * spec_.weight_fn(x[x_index(client, i)]) *
                      sample_loss_grad(tr, i, y);
    }
    for (int b = 0; b < spec_.minibatch; ++b) {
      const int j = static_cast<int>(rng.uniform_int(va.num_samples()));
      out.grad_y_f += inv_b * sample_loss_grad(va, j, y);
    }
    out.grad_y_g += 2.0 * spec_.nu * y;
    return out;
  }

  Vector hvp_yy_g(int client, const Vector& x, const Vector& y,
                  const Vector& v, std::uint64_t seed) const override {
    check_query(client, x, y);
    require_dim(v, dim_y_, "v");
    const Dataset& tr = spec_.train[static_cast<std::size_t>(client)];
    RngStream rng(derive_seed(seed, kHvpYyTag,
                              static_cast<std::uint64_t>(client)));
    Vector out = Vector::Zero(dim_y_);
    const double inv_b = 1.0 / spec_.minibatch;
    for (int b = 0; b < spec_.minibatch; ++b) {
      const int i = static_cast<int>(rng.uniform_int(tr.num_samples()));
      const auto a = tr.features.row(i);
      const double t = sign_label(tr.labels[i]) * a.dot(y);
      out += inv_b * spec_.weight_fn(x[x_index(client, i)]) *
             d2loss_from_margin(t) * a.dot(v) * a.transpose();
    }
    out += 2.0 * spec_.nu * v;
    return out;
  }

  Vector hvp_xy_g(int client, const Vector& x, const Vector& y,
                  const Vector& v, std::uint64_t seed) const override {
    check_query(client, x, y);
    require_dim(v, dim_y_, "v");
    const Dataset& tr = spec_.train[static_cast<std::size_t>(client)];
    RngStream rng(derive_seed(seed, kHvpXyTag,
                              static_cast<std::uint64_t>(client)));
    Vector out = Vector::Zero(dim_x_);
    const double inv_b = 1.0 / spec_.minibatch;
    for (int b = 0; b < spec_.minibatch; ++b) {
      const int i = static_cast<int>(rng.uniform_int(tr.num_samples()));
      const int gi = x_index(client, i);
      out[gi] += inv_b * spec_.weight_deriv(x[gi]) *
                 sample_loss_grad(tr, i, y).dot(v);
    }
    return out;
  }

  Partials exact_partials(int client, const Vector& x,
                          const Vector& y) const override {
    check_query(client, x, y);
    const Dataset& tr = spec_.train[static_cast<std::size_t>(client)];
    const Dataset& va = spec_.val[static_cast<std::size_t>(client)];
    Partials out;
    out.grad_x_f = Vector::Zero(dim_x_);
    out.grad_y_f = Vector::Zero(dim_y_);
    out.grad_y_g = Vector::Zero(dim_y_);
    for (int i = 0; i < tr.num_samples(); ++i) {
      out.grad_y_g += spec_.weight_fn(x[x_index(client, i)]) *
                      sample_loss_grad(tr, i, y);
    }
    out.grad_y_g /= tr.num_samples();
    out.grad_y_g += 2.0 * spec_.nu * y;
    for (int j = 0; j < va.num_samples(); ++j) {
      out.grad_y_f += sample_loss_grad(va, j, y);
    }
    out.grad_y_f /= va.num_samples();
    return out;
  }

  Vector exact_hvp_yy(int client, const Vector& x, const Vector& y,
                      const Vector& v) const override {
    check_query(client, x, y);
    require_dim(v, dim_y_, "v");
    const Dataset& tr = spec_.train[static_cast<std::size_t>(client)];
    Vector out = Vector::Zero(dim_y_);
    for (int i = 0; i < tr.num_samples(); ++i) {
      const auto a = tr.features.row(i);
      const double t = sign_label(tr.labels[i]) * a.dot(y);
      out += spec_.weight_fn(x[x_index(client, i)]) * d2loss_from_margin(t) *
             a.dot(v) * a.transpose();
    }
    out /= tr.num_samples();
    out += 2.0 * spec_.nu * v;
    return out;
  }

  Vector exact_hvp_xy(int client, const Vector& x, const Vector& y,
                      const Vector& v) const override {
    check_query(client, x, y);
    require_dim(v, dim_y_, "v");
    const Dataset& tr = spec_.train[static_cast<std::size_t>(client)];
    Vector out = Vector::Zero(dim_x_);
    for (int i = 0; i < tr.num_samples(); ++i) {
      const int gi = x_index(client, i);
      out[gi] = spec_.weight_deriv(x[gi]) * sample_loss_grad(tr, i, y).dot(v) /
                tr.num_samples();
    }
    return out;
  }

 private:
  int x_index(int client, int sample) const {
    return offsets_[static_cast<std::size_t>(client)] + sample;
  }

  void check_query(int client, const Vector& x, const Vector& y) const {
    check_client(client);
    require_dim(x, dim_x_, "x");
    require_dim(y, dim_y_, "y");
    require_finite(x, "x");
    require_finite(y, "y");
  }

  static Vector sample_loss_grad(const Dataset& data, int i, const Vector& y) {
    const double s = sign_label(data.labels[i]);
    const auto a = data.features.row(i);
    const double t = s * a.dot(y);
    return dloss_from_margin(t) * s * a.transpose();
  }

  void validate() const {
    if (spec_.train.empty() || spec_.train.size() != spec_.val.size()) {
      throw std::invalid_argument(
          "hyperclean: need matching nonempty train/val client lists");
    }
    if (!(spec_.nu > 0.0)) {
      throw std::invalid_argument(
          "hyperclean: nu must be > 0 (strong convexity of the lower level)");
    }
    if (spec_.minibatch < 1) {
      throw std::invalid_argument("hyperclean: minibatch must be >= 1");
    }
    if (!spec_.weight_fn || !spec_.weight_deriv) {
      throw std::invalid_argument("hyperclean: weight_fn not set");
    }
    const int d = spec_.train[0].dim();
    for (std::size_t m = 0; m < spec_.train.size(); ++m) {
      if (spec_.train[m].num_samples() == 0 || spec_.val[m].num_samples() == 0) {
        throw std::invalid_argument("hyperclean: empty client dataset");
      }
      if (spec_.train[m].dim() != d || spec_.val[m].dim() != d) {
        throw std::invalid_argument("hyperclean: inconsistent feature dims");
      }
    }
    for (double probe : {-4.0, -1.0, 0.0, 1.0, 4.0}) {
      const double w = spec_.weight_fn(probe);
      if (!(w > 0.0) || !(w <= 1.0)) {
        throw std::invalid_argument(
            "hyperclean: weight_fn must map into (0, 1]");
      }
    }
  }

  void derive_constants() {
    ProblemConstants c;
    c.mu = 2.0 * spec_.nu;
    double hess = 0.0, c_gxy = 0.0, c_fy = 0.0, l_f = 0.0;
    double l_gyy = 0.0, l_gxy = 0.0, maxa = 0.0;
    for (std::size_t m = 0; m < spec_.train.size(); ++m) {
      const ClientStats s = client_stats(spec_.train[m], spec_.val[m]);
      const double n = spec_.train[m].num_samples();
      // Per-sample bound: a single-sample lower Hessian is w_i l'' a_i a_i^T +
      // 2 nu I, so smoothness must cover max_i ||a_i||^2 / 4, not just the
      // averaged Gram. This keeps 1 / L_g a contraction for sampled chains.
      hess = std::max(hess, 0.25 * s.maxa_train * s.maxa_train + 2.0 * spec_.nu);
      c_gxy = std::max(c_gxy, 0.25 * std::sqrt(s.sum_sq) / n);
      c_fy = std::max(c_fy, s.maxa_val);
      l_f = std::max(l_f, 0.25 * s.gram_max_val);
      l_gyy = std::max(l_gyy, kSigmoidCurvBound * s.sum_cube / n +
                                  std::sqrt(s.sum_quart) / (16.0 * n));
      double frob = 0.0;
      for (int i = 0;
           i < spec_.train[m].num_samples(); ++i) {
        const double a = spec_.train[m].features.row(i).norm();
        const double row = 0.0625 * a * a + kSigmoidCurvBound * a;
        frob += row * row;
      }
      l_gxy = std::max(l_gxy, std::sqrt(frob) / n);
      maxa = std::max(maxa, std::max(s.maxa_train, s.maxa_val));
    }
    c.L_g = std::max(hess, c.mu);
    c.L_f = std::max(l_f, 1e-12);
    c.L_gxy = l_gxy;
    c.L_gyy = l_gyy;
    c.C_fy = std::max(c_fy, 1e-12);
    c.C_gxy = std::max(c_gxy, 1e-12);
    c.sigma = 2.0 * maxa + 2.0 * spec_.nu * kBoundRadius;
    c.delta_f = 2.0 * c.C_fy;
    c.delta_g = 2.0 * std::max({maxa, c.C_gxy, c.L_g - 2.0 * spec_.nu});
    c.validate();
    constants_ = c;
  }

  HyperCleanSpec spec_;
  std::vector<int> offsets_;
  int dim_x_ = 0;
  int dim_y_ = 0;
  ProblemConstants constants_;
};

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double sigmoid_deriv(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s);
}

std::unique_ptr<BilevelProblem> make_hyperclean_problem(
    const HyperCleanSpec& spec) {
  HyperCleanSpec resolved = spec;
  if (!resolved.weight_fn) resolved.weight_fn = sigmoid;
  if (!resolved.weight_deriv) resolved.weight_deriv = sigmoid_deriv;
  return std::make_unique<HyperCleanProblem>(std::move(resolved));
}

int hyperclean_x_index(const HyperCleanSpec& spec, int client, int sample) {
  if (client < 0 || client >= static_cast<int>(spec.train.size())) {
    throw std::invalid_argument("hyperclean_x_index: client out of range");
  }
  int offset = 0;
  for (int m = 0; m < client; ++m) {
    offset += spec.train[static_cast<std::size_t>(m)].num_samples();
  }
  if (sample < 0 ||
      sample >= spec.train[static_cast<std::size_t>(client)].num_samples()) {
    throw std::invalid_argument("hyperclean_x_index: sample out of range");
  }
  return offset + sample;
}

double hyperclean_lower_value(const HyperCleanSpec& spec, int client,
                              const Vector& x, const Vector& y) {
  const auto weight = spec.weight_fn ? spec.weight_fn : sigmoid;
  const Dataset& tr = spec.train.at(static_cast<std::size_t>(client));
  double total = 0.0;
  for (int i = 0; i < tr.num_samples(); ++i) {
    const double t = sign_label(tr.labels[i]) * tr.features.row(i).dot(y);
    total += weight(x[hyperclean_x_index(spec, client, i)]) *
             loss_from_margin(t);
  }
  return total / tr.num_samples() + spec.nu * y.squaredNorm();
}

double hyperclean_upper_value(const HyperCleanSpec& spec, int client,
                              const Vector& y) {
  return logistic_loss(spec.val.at(static_cast<std::size_t>(client)), y);
}

double logistic_loss(const Dataset& data, const Vector& y) {
  double total = 0.0;
  for (int i = 0; i < data.num_samples(); ++i) {
    total += loss_from_margin(sign_label(data.labels[i]) *
                              data.features.row(i).dot(y));
  }
  return total / data.num_samples();
}

double classification_accuracy(const Dataset& data, const Vector& y) {
  int correct = 0;
  for (int i = 0; i < data.num_samples(); ++i) {
    const double pred = data.features.row(i).dot(y) > 0.0 ? 1.0 : 0.0;
    if (pred == (data.labels[i] > 0.5 ? 1.0 : 0.0)) ++correct;
  }
  return static_cast<double>(correct) / data.num_samples();
}

HyperCleanDemoData make_hyperclean_demo_data(const HyperCleanDemoOptions& opt) {
  if (opt.num_train < opt.num_clients || opt.num_val < opt.num_clients ||
      opt.num_test < 1) {
    throw std::invalid_argument("hyperclean demo: splits too small");
  }
  SyntheticClassificationOptions gen;
  gen.num_samples = opt.num_train + opt.num_val + opt.num_test;
  gen.dim = opt.dim;
  gen.label_noise = opt.label_noise;
  gen.seed = derive_seed(opt.seed, seed_tag::kDataGen);
  const Dataset pool = synthetic_classification(gen);

  std::vector<int> idx_train(static_cast<std::size_t>(opt.num_train));
  std::vector<int> idx_val(static_cast<std::size_t>(opt.num_val));
  std::vector<int> idx_test(static_cast<std::size_t>(opt.num_test));
  for (int i = 0; i < opt.num_train; ++i) idx_train[i] = i;
  for (int i = 0; i < opt.num_val; ++i) idx_val[i] = opt.num_train + i;
  for (int i = 0; i < opt.num_test; ++i) {
    idx_test[i] = opt.num_train + opt.num_val + i;
  }
  Dataset train_pool = pool.subset(idx_train);
  const Dataset val_pool = pool.subset(idx_val);

  CorruptionResult corrupted = flip_labels(
      train_pool, opt.corruption_rate, derive_seed(opt.seed, seed_tag::kDataGen, 1));
  train_pool = corrupted.data;

  const auto train_parts =
      partition_indices(train_pool, opt.num_clients, PartitionMode::kIid,
                        derive_seed(opt.seed, seed_tag::kPartition, 0));
  const auto val_parts =
      partition_indices(val_pool, opt.num_clients, PartitionMode::kIid,
                        derive_seed(opt.seed, seed_tag::kPartition, 1));

  HyperCleanDemoData demo;
  demo.spec.nu = opt.nu;
  demo.spec.corruption_rate = opt.corruption_rate;
  demo.spec.weight_fn = sigmoid;
  demo.spec.weight_deriv = sigmoid_deriv;
  for (int m = 0; m < opt.num_clients; ++m) {
    demo.spec.train.push_back(
        train_pool.subset(train_parts[static_cast<std::size_t>(m)]));
    demo.spec.val.push_back(
        val_pool.subset(val_parts[static_cast<std::size_t>(m)]));
  }
  demo.test = pool.subset(idx_test);

  demo.corrupted.assign(static_cast<std::size_t>(opt.num_train), 0);
  std::size_t pos = 0;
  for (int m = 0; m < opt.num_clients; ++m) {
    for (int row : train_parts[static_cast<std::size_t>(m)]) {
      const bool flipped = std::binary_search(corrupted.flipped.begin(),
                                              corrupted.flipped.end(), row);
      demo.corrupted[pos++] = flipped ? 1 : 0;
    }
  }
  return demo;
}

}  // namespace fedbilevel
