// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_FEDERATION_HPP_
#define FEDBILEVEL_FEDERATION_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fedbilevel/adaptive.hpp"
#include "fedbilevel/client.hpp"
#include "fedbilevel/problem.hpp"
#include "fedbilevel/schedule.hpp"
#include "fedbilevel/types.hpp"

namespace fedbilevel {

// Mean in ascending client-index order (one deterministic summation order).
Vector aggregate(const std::vector<Vector>& vectors);

struct ServerState {
  Vector x_bar, y_bar;  // averages taken at the last sync
  Vector v_bar, w_bar;
  AdaptiveState adapt;
  long long comm_rounds = 0;
  long long t = 0;  // iteration about to run
};

// One synchronization round at iteration server.t (requires t % q == 0):
// averages the client states, regenerates the adaptive matrices, takes the
// averaged update, and broadcasts the new (x, y) to every client.
void server_sync(ServerState& server, std::vector<ClientState>& clients,
                 const ScheduleConfig& cfg);

// Uniform draw over the x-average history; deterministic per seed.
Vector select_output(const std::vector<Vector>& xbar_history,
                     std::uint64_t seed);

struct TraceRow {
  long long t = 0;
  double eta = 0.0;
  std::optional<double> grad_norm_true;   // |grad F(xbar_t)|, oracle problems
  double grad_norm_wbar = 0.0;            // |wbar_t|
  std::optional<double> lower_gap;        // |ybar_t - y*(xbar_t)|
  std::optional<double> tracking_err_w;   // |wbar_t - surrogate(xbar_t, ybar_t)|
  long long samples_total = 0;            // cumulative, after iteration t
  long long comm_rounds = 0;              // cumulative, after iteration t
};

struct RunTrace {
  std::vector<TraceRow> rows;          // one per iteration t = 1..T
  std::vector<Vector> xbar_history;    // xbar_1..xbar_T (start-of-iteration)
  Vector selected_output;              // uniform draw over xbar_history
  long long selected_t = 0;            // 1-based iteration of the selection
  Vector best_output;                  // argmin gradient norm (diagnostic
  long long best_t = 0;                // only, not the algorithm's output)
  double wall_seconds = 0.0;
  long long samples_total = 0;
  long long comm_rounds = 0;
  ScheduleConfig schedule;             // fully resolved configuration
};

// Live view passed to the run observer at the start of every iteration
// t = 1..T, plus once more with final = true after the loop (exposing the
// state that iteration T produced).  A_diag/B_scalar are the matrices in
// force entering the iteration (sync steps regenerate them mid-step).
struct IterationView {
  long long t = 0;
  bool is_sync = false;
  bool final = false;
  double eta = 0.0;
  const Vector* x_bar = nullptr;
  const Vector* y_bar = nullptr;
  const Vector* v_bar = nullptr;
  const Vector* w_bar = nullptr;
  const Vector* A_diag = nullptr;
  double B_scalar = 0.0;
  const std::vector<ClientState>* clients = nullptr;
};

struct RunOptions {
  AdaptiveRule rule = AdaptiveRule::kNormScalar;
  std::uint64_t root_seed = 0;
  double init_scale = 1.0;      // x1, y1 ~ init_scale * N(0, I)
  const Vector* x1 = nullptr;   // explicit start point overrides the draw
  const Vector* y1 = nullptr;
  std::function<void(const IterationView&)> observer;
};

// Full optimizer loop: warm start, T iterations alternating local steps and
// periodic synchronization, per-iteration variance-reduced estimator
// updates, uniform output selection.  cfg may rely on with_defaults.
RunTrace run(const BilevelProblem& problem, const ScheduleConfig& cfg,
             const RunOptions& options);

RunTrace run(const BilevelProblem& problem, const ScheduleConfig& cfg,
             AdaptiveRule rule, std::uint64_t root_seed);

struct AccountingReport {
  long long recorded_samples = 0;
  long long expected_samples = 0;  // M * (q(K+2) + (K+2)T)
  long long recorded_comm_rounds = 0;
  long long expected_comm_rounds = 0;  // floor(T / q)
  long long recommended_q = 0;         // smallest q with q^3 >= T
  bool samples_match = false;
  bool comm_rounds_match = false;
};

// Cross-checks a finished trace against the closed-form sample and
// communication counts (batch size 1).
AccountingReport accounting(const RunTrace& trace, int num_clients);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_FEDERATION_HPP_
