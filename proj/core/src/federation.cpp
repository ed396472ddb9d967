// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/federation.hpp"

#include <chrono>
#include <stdexcept>
#include <string>
#include <utility>

#include "fedbilevel/hypergrad.hpp"
#include "fedbilevel/parallel.hpp"
#include "fedbilevel/rng.hpp"
#include "fedbilevel/storm.hpp"

namespace fedbilevel {
namespace {

struct SyncOutcome {
  AdaptiveState adapt;
  Vector x_next, y_next;
};

// Lines shared by server_sync and the run loop: regenerate matrices from the
// averaged estimators, then take the averaged two-stage update.
SyncOutcome apply_sync(const AdaptiveState& adapt, const Vector& xbar,
                       const Vector& ybar, const Vector& vbar,
                       const Vector& wbar, const ScheduleConfig& cfg,
                       long long t, int num_clients) {
  SyncOutcome o;
  o.adapt = update_adaptive(adapt, wbar, vbar, cfg, t, num_clients);
  const double eta_t = eta(t, cfg, num_clients);
  const Vector yhat = ybar - (cfg.lambda / o.adapt.B_scalar) * vbar;
  const Vector xhat = xbar - cfg.gamma * wbar.cwiseQuotient(o.adapt.A_diag);
  o.y_next = ybar + eta_t * (yhat - ybar);
  o.x_next = xbar + eta_t * (xhat - xbar);
  return o;
}

std::size_t select_output_index(std::size_t count, std::uint64_t seed) {
  RngStream rng(derive_seed(seed, seed_tag::kSelectOutput));
  return static_cast<std::size_t>(rng.uniform_int(count));
}

Vector mean_of(const std::vector<ClientState>& clients,
               Vector ClientState::* field) {
  Vector sum = clients[0].*field;
  for (std::size_t m = 1; m < clients.size(); ++m) sum += clients[m].*field;
  return sum / static_cast<double>(clients.size());
}

}  // namespace

Vector aggregate(const std::vector<Vector>& vectors) {
  if (vectors.empty()) {
    throw std::invalid_argument("aggregate: no vectors");
  }
  Vector sum = vectors[0];
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    if (vectors[i].size() != sum.size()) {
      throw std::invalid_argument("aggregate: dimension mismatch");
    }
    sum += vectors[i];
  }
  return sum / static_cast<double>(vectors.size());
}

void server_sync(ServerState& server, std::vector<ClientState>& clients,
                 const ScheduleConfig& cfg) {
  if (clients.empty()) {
    throw std::invalid_argument("server_sync: no clients");
  }
  if (cfg.q < 1 || server.t % cfg.q != 0) {
    throw std::logic_error("server_sync: called off-schedule (t % q != 0)");
  }
  const int num_clients = static_cast<int>(clients.size());
  server.v_bar = mean_of(clients, &ClientState::v);
  server.w_bar = mean_of(clients, &ClientState::w);
  server.y_bar = mean_of(clients, &ClientState::y);
  server.x_bar = mean_of(clients, &ClientState::x);
  SyncOutcome o = apply_sync(server.adapt, server.x_bar, server.y_bar,
                             server.v_bar, server.w_bar, cfg, server.t,
                             num_clients);
  server.adapt = std::move(o.adapt);
  for (auto& c : clients) {
    c.x = o.x_next;
    c.y = o.y_next;
  }
  ++server.comm_rounds;
}

Vector select_output(const std::vector<Vector>& xbar_history,
                     std::uint64_t seed) {
  if (xbar_history.empty()) {
    throw std::invalid_argument("select_output: empty history");
  }
  return xbar_history[select_output_index(xbar_history.size(), seed)];
}

RunTrace run(const BilevelProblem& problem, const ScheduleConfig& cfg0,
             const RunOptions& options) {
  const auto clock_start = std::chrono::steady_clock::now();
  const int num_clients = problem.num_clients();
  const int d = problem.dim_upper();
  const int p = problem.dim_lower();
  const ScheduleConfig cfg =
      with_defaults(cfg0, num_clients, &problem.constants());
  validate_schedule(cfg, num_clients);

  RngStream init_rng(derive_seed(options.root_seed, seed_tag::kInitPoint));
  Vector x1 = init_rng.gaussian_vector(d, options.init_scale);
  Vector y1 = init_rng.gaussian_vector(p, options.init_scale);
  if (options.x1 != nullptr) {
    require_dim(*options.x1, d, "x1");
    x1 = *options.x1;
  }
  if (options.y1 != nullptr) {
    require_dim(*options.y1, p, "y1");
    y1 = *options.y1;
  }

  std::vector<ClientState> clients(static_cast<std::size_t>(num_clients));
  for (int m = 0; m < num_clients; ++m) {
    ClientState& c = clients[static_cast<std::size_t>(m)];
    c.x = x1;
    c.y = y1;
    InitEstimates init = init_estimators(
        problem, m, x1, y1, cfg.q, cfg.K, cfg.neumann_step,
        derive_seed(options.root_seed, seed_tag::kInitEstimators,
                    static_cast<std::uint64_t>(m)));
    c.v = std::move(init.v1);
    c.w = std::move(init.w1);
    c.samples_used = init.samples;
  }

  AdaptiveState adapt = init_adaptive(options.rule, d, p, cfg);
  const ExactOracles* oracle = problem.exact();

  RunTrace trace;
  trace.schedule = cfg;
  trace.rows.reserve(static_cast<std::size_t>(cfg.T));
  trace.xbar_history.reserve(static_cast<std::size_t>(cfg.T));
  long long comm_rounds = 0;

  std::vector<Vector> old_x(static_cast<std::size_t>(num_clients));
  std::vector<Vector> old_y(static_cast<std::size_t>(num_clients));

  const auto observe = [&](long long t, bool is_sync, bool final,
                           double eta_t, const Vector& xbar,
                           const Vector& ybar, const Vector& vbar,
                           const Vector& wbar) {
    if (!options.observer) return;
    IterationView view;
    view.t = t;
    view.is_sync = is_sync;
    view.final = final;
    view.eta = eta_t;
    view.x_bar = &xbar;
    view.y_bar = &ybar;
    view.v_bar = &vbar;
    view.w_bar = &wbar;
    view.A_diag = &adapt.A_diag;
    view.B_scalar = adapt.B_scalar;
    view.clients = &clients;
    options.observer(view);
  };

  for (long long t = 1; t <= cfg.T; ++t) {
    const bool is_sync = (t % cfg.q == 0);
    const double eta_t = eta(t, cfg, num_clients);
    const Vector xbar = mean_of(clients, &ClientState::x);
    const Vector ybar = mean_of(clients, &ClientState::y);
    const Vector vbar = mean_of(clients, &ClientState::v);
    const Vector wbar = mean_of(clients, &ClientState::w);
    observe(t, is_sync, false, eta_t, xbar, ybar, vbar, wbar);

    TraceRow row;
    row.t = t;
    row.eta = eta_t;
    row.grad_norm_wbar = wbar.norm();
    if (oracle != nullptr) {
      row.grad_norm_true = oracle->hypergradient(xbar).norm();
      row.lower_gap = (ybar - oracle->lower_solution(xbar)).norm();
      row.tracking_err_w = (wbar - oracle->surrogate_gradient(xbar, ybar)).norm();
    }
    trace.xbar_history.push_back(xbar);

    for (int m = 0; m < num_clients; ++m) {
      old_x[static_cast<std::size_t>(m)] = clients[static_cast<std::size_t>(m)].x;
      old_y[static_cast<std::size_t>(m)] = clients[static_cast<std::size_t>(m)].y;
    }

    if (is_sync) {
      SyncOutcome o =
          apply_sync(adapt, xbar, ybar, vbar, wbar, cfg, t, num_clients);
      adapt = std::move(o.adapt);
      for (auto& c : clients) {
        c.x = o.x_next;
        c.y = o.y_next;
      }
      ++comm_rounds;
    } else {
      parallel_for(num_clients, [&](int m) {
        ClientState& c = clients[static_cast<std::size_t>(m)];
        c = local_step(c, adapt, eta_t, cfg);
      });
    }

    // Catch divergence before the estimator phase samples at the new point;
    // the oracles reject non-finite query points with a different error.
    for (int m = 0; m < num_clients; ++m) {
      const ClientState& c = clients[static_cast<std::size_t>(m)];
      if (!c.x.allFinite() || !c.y.allFinite()) {
        throw NumericalError("run: non-finite state at iteration " +
                             std::to_string(t) + " on client " +
                             std::to_string(m));
      }
    }

    const double alpha_t1 = alpha_next(t, cfg, num_clients);
    const double beta_t1 = beta_next(t, cfg, num_clients);
    parallel_for(num_clients, [&](int m) {
      ClientState& c = clients[static_cast<std::size_t>(m)];
      const Vector& ox = old_x[static_cast<std::size_t>(m)];
      const Vector& oy = old_y[static_cast<std::size_t>(m)];
      const std::uint64_t zeta_seed =
          derive_seed(options.root_seed, seed_tag::kIterZetaV,
                      static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(m));
      const Vector g_new =
          problem.sample_partials(m, c.x, c.y, zeta_seed).grad_y_g;
      const Vector g_old = problem.sample_partials(m, ox, oy, zeta_seed).grad_y_g;
      c.v = storm_update_v(c.v, g_new, g_old, alpha_t1);

      NeumannConfig nc;
      nc.K = cfg.K;
      nc.step = cfg.neumann_step;
      nc.seed =
          derive_seed(options.root_seed, seed_tag::kIterXiBar,
                      static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(m));
      const HypergradSample hg_new = neumann_hypergrad(problem, m, c.x, c.y, nc);
      const HypergradSample hg_old = neumann_hypergrad(problem, m, ox, oy, nc);
      c.w = storm_update_w(c.w, hg_new, hg_old, beta_t1);
      c.samples_used += static_cast<long long>(cfg.K) + 2;

      if (!c.x.allFinite() || !c.y.allFinite() || !c.v.allFinite() ||
          !c.w.allFinite()) {
        throw NumericalError("run: non-finite state at iteration " +
                             std::to_string(t) + " on client " +
                             std::to_string(m));
      }
    });

    row.samples_total = 0;
    for (const auto& c : clients) row.samples_total += c.samples_used;
    row.comm_rounds = comm_rounds;
    trace.rows.push_back(row);
  }

  {
    const Vector xbar = mean_of(clients, &ClientState::x);
    const Vector ybar = mean_of(clients, &ClientState::y);
    const Vector vbar = mean_of(clients, &ClientState::v);
    const Vector wbar = mean_of(clients, &ClientState::w);
    observe(cfg.T + 1, false, true, eta(cfg.T + 1, cfg, num_clients), xbar,
            ybar, vbar, wbar);
  }

  trace.samples_total = trace.rows.back().samples_total;
  trace.comm_rounds = comm_rounds;

  const std::size_t sel =
      select_output_index(trace.xbar_history.size(), options.root_seed);
  trace.selected_output = trace.xbar_history[sel];
  trace.selected_t = static_cast<long long>(sel) + 1;

  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.rows.size(); ++i) {
    const double cur = oracle != nullptr ? *trace.rows[i].grad_norm_true
                                         : trace.rows[i].grad_norm_wbar;
    const double ref = oracle != nullptr ? *trace.rows[best].grad_norm_true
                                         : trace.rows[best].grad_norm_wbar;
    if (cur < ref) best = i;
  }
  trace.best_output = trace.xbar_history[best];
  trace.best_t = static_cast<long long>(best) + 1;

  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                    clock_start)
          .count();
  return trace;
}

RunTrace run(const BilevelProblem& problem, const ScheduleConfig& cfg,
             AdaptiveRule rule, std::uint64_t root_seed) {
  RunOptions options;
  options.rule = rule;
  options.root_seed = root_seed;
  return run(problem, cfg, options);
}

AccountingReport accounting(const RunTrace& trace, int num_clients) {
  const ScheduleConfig& cfg = trace.schedule;
  AccountingReport r;
  r.recorded_samples = trace.samples_total;
  r.recorded_comm_rounds = trace.comm_rounds;
  const long long per_iter = static_cast<long long>(cfg.K) + 2;
  r.expected_samples =
      static_cast<long long>(num_clients) * (cfg.q * per_iter + per_iter * cfg.T);
  r.expected_comm_rounds = cfg.T / cfg.q;
  r.recommended_q = recommended_q(cfg.T);
  r.samples_match = r.recorded_samples == r.expected_samples;
  r.comm_rounds_match = r.recorded_comm_rounds == r.expected_comm_rounds;
  return r;
}

}  // namespace fedbilevel
