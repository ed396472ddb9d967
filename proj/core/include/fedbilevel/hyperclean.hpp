// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_HYPERCLEAN_HPP_
#define FEDBILEVEL_HYPERCLEAN_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fedbilevel/dataset.hpp"
#include "fedbilevel/problem.hpp"

namespace fedbilevel {

double sigmoid(double z);
double sigmoid_deriv(double z);

// Data hyper-cleaning: the upper variable holds one reweighting parameter per
// training sample (all clients concatenated); the lower variable is a shared
// logistic-regression model. Client m's lower objective is its mean weighted
// training loss plus nu * ||y||^2; its upper objective is its mean validation
// loss, so grad_x f vanishes identically.
struct HyperCleanSpec {
  std::vector<Dataset> train;  // one per client, binary labels in {0,1}
  std::vector<Dataset> val;    // one per client
  double nu = 0.05;            // lower objective is 2*nu strongly convex
  double corruption_rate = 0.0;  // recorded for reports; flips happen upstream
  int minibatch = 1;
  // Per-sample weight map and its derivative; defaults to the logistic sigmoid.
  std::function<double(double)> weight_fn;
  std::function<double(double)> weight_deriv;
};

std::unique_ptr<BilevelProblem> make_hyperclean_problem(
    const HyperCleanSpec& spec);

// Index of sample j of client m inside the upper variable x.
int hyperclean_x_index(const HyperCleanSpec& spec, int client, int sample);

// Deterministic full-batch objective values, exposed for verification and for
// the demo's lower-only baseline.
double hyperclean_lower_value(const HyperCleanSpec& spec, int client,
                              const Vector& x, const Vector& y);
double hyperclean_upper_value(const HyperCleanSpec& spec, int client,
                              const Vector& y);

// Mean logistic loss of model y on a dataset.
double logistic_loss(const Dataset& data, const Vector& y);
// Fraction of samples whose sign prediction matches the {0,1} label.
double classification_accuracy(const Dataset& data, const Vector& y);

// Synthetic end-to-end instance: a labeled pool is split into train/val/test,
// train labels are flipped at `corruption_rate`, and train/val are dealt
// i.i.d. across clients. `corrupted` flags align with the x layout.
struct HyperCleanDemoOptions {
  int num_train = 500;
  int num_val = 200;
  int num_test = 500;
  int dim = 10;
  int num_clients = 4;
  double corruption_rate = 0.3;
  double nu = 0.05;
  double label_noise = 0.0;
  std::uint64_t seed = 0;
};

struct HyperCleanDemoData {
  HyperCleanSpec spec;
  Dataset test;
  std::vector<char> corrupted;  // size = total train samples, x-indexed
};

HyperCleanDemoData make_hyperclean_demo_data(const HyperCleanDemoOptions& opt);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_HYPERCLEAN_HPP_
