// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedbilevel/hypergrad.hpp"
#include "fedbilevel/rng.hpp"
#include "fedbilevel/trace_io.hpp"

namespace fedbilevel {
namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

// Per-iteration stationarity metric: the exact gradient norm when the
// problem has closed-form oracles, otherwise the w-average surrogate.
double row_metric(const TraceRow& row) {
  return row.grad_norm_true.has_value() ? *row.grad_norm_true
                                        : row.grad_norm_wbar;
}

double trace_avg_metric(const RunTrace& trace) {
  double s = 0.0;
  for (const TraceRow& r : trace.rows) s += row_metric(r);
  return trace.rows.empty() ? 0.0 : s / static_cast<double>(trace.rows.size());
}

ordered_json schedule_json(const ScheduleConfig& cfg) {
  ordered_json j;
  j["k"] = cfg.k;
  j["n"] = cfg.n;
  j["c1"] = cfg.c1;
  j["c2"] = cfg.c2;
  j["gamma"] = cfg.gamma;
  j["lambda"] = cfg.lambda;
  j["q"] = cfg.q;
  j["T"] = cfg.T;
  j["K"] = cfg.K;
  j["rho"] = cfg.rho;
  j["varrho"] = cfg.varrho;
  j["varrho_track_beta"] = cfg.varrho_track_beta;
  j["vartheta"] = cfg.vartheta;
  j["tau"] = cfg.tau;
  j["theta"] = cfg.theta;
  j["b_hat"] = cfg.b_hat;
  j["neumann_step"] = cfg.neumann_step;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << text;
  if (!out) throw ConfigError("write failed: " + path);
}

// Full-batch gradient descent on the averaged lower objective at fixed x.
Vector averaged_lower_argmin(const BilevelProblem& problem, const Vector& x) {
  const int M = problem.num_clients();
  Vector y = Vector::Zero(problem.dim_lower());
  const double step = 1.0 / problem.constants().L_g;
  for (int it = 0; it < 100000; ++it) {
    Vector g = Vector::Zero(problem.dim_lower());
    for (int m = 0; m < M; ++m) {
      g += problem.exact_partials(m, x, y).grad_y_g;
    }
    g /= static_cast<double>(M);
    if (g.norm() <= 1e-10) break;
    y -= step * g;
  }
  return y;
}

}  // namespace

std::unique_ptr<BilevelProblem> build_problem(const ExperimentConfig& cfg) {
  if (cfg.problem == "hyperclean") {
    return make_hyperclean_problem(
        make_hyperclean_demo_data(cfg.hyperclean).spec);
  }
  if (cfg.problem == "metalearn") {
    return make_metalearn_problem(make_metalearn_demo_spec(cfg.metalearn));
  }
  if (cfg.problem != "quadratic") {
    throw ConfigError("unknown problem '" + cfg.problem + "'");
  }
  return std::make_unique<QuadraticProblem>(
      random_quadratic_spec(cfg.quadratic));
}

std::vector<std::string> ConstantsReport::failures() const {
  std::vector<std::string> out;
  for (const ConstantCheck& c : checks) {
    if (!c.satisfied) out.push_back(c.name);
  }
  return out;
}

ConstantsReport check_constants(const ScheduleConfig& cfg0,
                                const BilevelProblem& problem) {
  const int M = problem.num_clients();
  const ProblemConstants& pc = problem.constants();
  ConstantsReport report;
  report.resolved = with_defaults(cfg0, M, &pc);
  const ScheduleConfig& s = report.resolved;
  report.derived = DerivedConstants::from(pc, s.K);
  const DerivedConstants& dc = report.derived;

  const double Md = static_cast<double>(M);
  const double LK2 = dc.L_K * dc.L_K;
  const double Lg2 = pc.L_g * pc.L_g;
  const double sum2 = LK2 + Lg2;
  const double mu2 = pc.mu * pc.mu;
  const double Lbar2 = dc.L_bar * dc.L_bar;
  const double Lhat2 = dc.L_hat * dc.L_hat;

  report.Gamma = 5.0 * s.theta * s.theta * Lhat2 * s.gamma * s.rho /
                     (36.0 * sum2) +
                 125.0 * s.theta * s.theta * Lbar2 * Lg2 * s.gamma * s.rho /
                     (27.0 * mu2 * sum2) +
                 8.0 * sum2 * s.lambda * s.lambda * s.gamma / s.rho +
                 17.0 * s.theta * s.theta * Lhat2 * s.rho * s.gamma /
                     (72.0 * sum2);

  const auto add = [&report](const std::string& name, bool ok, double lhs,
                             double rhs) {
    report.checks.push_back({name, ok, lhs, rhs});
  };

  add("k > 0", s.k > 0.0, s.k, 0.0);

  const double n_floor = std::max(
      {2.0, Md * std::pow(s.k, 3.0), Md * std::pow(s.c1 * s.k, 3.0),
       Md * std::pow(s.c2 * s.k, 3.0),
       std::pow(12.0 * s.k * s.lambda * static_cast<double>(s.q), 3.0) *
           std::pow(Md, 2.5) * std::pow(sum2, 1.5) /
           std::pow(s.theta * s.rho, 3.0)});
  add("n >= max(2, M k^3, M (c1 k)^3, M (c2 k)^3, "
      "(12 k lambda q)^3 M^{5/2} (L_K^2+L_g^2)^{3/2} / (theta rho)^3)",
      static_cast<double>(s.n) >= n_floor, static_cast<double>(s.n), n_floor);

  const double vartheta = s.vartheta;
  add("c2 = vartheta * c1 with vartheta > 0",
      vartheta > 0.0 &&
          std::abs(s.c2 - vartheta * s.c1) <=
              1e-9 * std::max(1.0, std::abs(s.c2)),
      s.c2, vartheta * s.c1);

  const double c1_floor = 2.0 / (3.0 * std::pow(s.k, 3.0)) +
                          1000.0 * Lbar2 / (3.0 * mu2);
  add("c1 >= 2/(3 k^3) + 1000 Lbar^2 / (3 mu^2)", s.c1 >= c1_floor, s.c1,
      c1_floor);

  const double c1_cap = 72.0 * s.lambda * s.lambda *
                        static_cast<double>(s.q) * sum2 /
                        (s.rho * s.rho *
                         std::sqrt(vartheta * vartheta * Lhat2 + Lg2));
  add("c1 <= 72 lambda^2 q (L_K^2+L_g^2) / "
      "(rho^2 sqrt(vartheta^2 Lhat^2 + L_g^2))",
      s.c1 <= c1_cap, s.c1, c1_cap);

  const double c2_floor = 2.0 / (3.0 * std::pow(s.k, 3.0)) + 34.0;
  add("c2 >= 2/(3 k^3) + 34", s.c2 >= c2_floor, s.c2, c2_floor);

  add("lambda = tau * gamma",
      std::abs(s.lambda - s.tau * s.gamma) <=
          1e-9 * std::max(1.0, std::abs(s.lambda)),
      s.lambda, s.tau * s.gamma);

  const double tau_cap = std::min(
      0.125 * std::sqrt(15.0 * Md * s.rho * s.gamma / report.Gamma), 1.0);
  add("0 < tau <= min((1/8) sqrt(15 M rho gamma / Gamma), 1)",
      s.tau > 0.0 && s.tau <= tau_cap, s.tau, tau_cap);

  const double theta_cap = std::min(
      9.0 * dc.L_bar *
          std::sqrt(75.0 * s.lambda * sum2 * Md * pc.mu /
                    (s.rho * (30.0 * Lhat2 * mu2 + 1000.0 * Lbar2 * Lg2 +
                              52.0 * Lhat2 * mu2))),
      1.0);
  add("0 < theta <= min(9 Lbar sqrt(75 lambda (L_K^2+L_g^2) M mu / "
      "(rho (30 Lhat^2 mu^2 + 1000 Lbar^2 L_g^2 + 52 Lhat^2 mu^2))), 1)",
      s.theta > 0.0 && s.theta <= theta_cap, s.theta, theta_cap);

  const double gamma_cap = std::min(
      (s.rho / 8.0) *
          std::sqrt(1.0 / (125.0 * Lbar2 * dc.kappa * dc.kappa * s.b_hat *
                               s.b_hat / (6.0 * mu2 * s.lambda * s.lambda) +
                           sum2 / Md)),
      std::cbrt(static_cast<double>(s.n)) * s.rho /
          (4.0 * dc.L * s.k * std::cbrt(Md)));
  add("0 < gamma <= min((rho/8) sqrt(1/((125 Lbar^2 kappa^2 b_hat^2)/"
      "(6 mu^2 lambda^2) + (L_g^2+L_K^2)/M)), n^{1/3} rho / (4 L k M^{1/3}))",
      s.gamma > 0.0 && s.gamma <= gamma_cap, s.gamma, gamma_cap);

  const double lambda_cap =
      225.0 * Md * s.rho * Lbar2 / (184.0 * pc.mu * sum2);
  add("0 < lambda <= 225 M rho Lbar^2 / (184 mu (L_K^2+L_g^2))",
      s.lambda > 0.0 && s.lambda <= lambda_cap, s.lambda, lambda_cap);

  std::string k_warning;
  const int K_target = choose_K(pc, s.T, &k_warning);
  add("K >= ceil((L_g/mu) ln(C_gxy C_fy T / mu))", s.K >= K_target,
      static_cast<double>(s.K), static_cast<double>(K_target));
  if (!k_warning.empty()) report.warnings.push_back(k_warning);
  if (s.K < K_target) {
    report.warnings.push_back(
        "K = " + std::to_string(s.K) + " is below the bias target " +
        std::to_string(K_target) +
        " for this horizon; the estimator bias bound may exceed 1/T");
  }
  return report;
}

ConstantsReport check_constants(const ExperimentConfig& cfg) {
  const std::unique_ptr<BilevelProblem> problem = build_problem(cfg);
  return check_constants(cfg.schedule, *problem);
}

std::string describe(const ConstantsReport& report) {
  std::ostringstream out;
  out << "feasibility checks (advisory, Gamma = "
      << format_double(report.Gamma) << "):\n";
  for (const ConstantCheck& c : report.checks) {
    out << (c.satisfied ? "  [ok]       " : "  [VIOLATED] ") << c.name
        << "  (value " << format_double(c.lhs) << ", bound "
        << format_double(c.rhs) << ")\n";
  }
  for (const std::string& w : report.warnings) {
    out << "  [warning]  " << w << "\n";
  }
  const std::size_t bad = report.failures().size();
  out << (bad == 0 ? "all conditions satisfied\n"
                   : std::to_string(bad) + " condition(s) violated\n");
  return out.str();
}

ExperimentArtifacts run_experiment(const ExperimentConfig& cfg) {
  const std::unique_ptr<BilevelProblem> problem = build_problem(cfg);
  const int M = problem->num_clients();
  ScheduleConfig schedule = with_defaults(cfg.schedule, M, &problem->constants());
  validate_schedule(schedule, M);

  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  {
    const fs::path probe = dir / ".write_probe";
    std::ofstream test(probe, std::ios::binary);
    if (!test) {
      throw ConfigError("output directory not writable: " + cfg.out_dir);
    }
    test.close();
    fs::remove(probe, ec);
  }

  ExperimentArtifacts artifacts;
  std::vector<std::vector<double>> metric_rows;  // [rep][t-1]
  std::vector<double> rep_avgs, rep_finals;

  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    RunOptions options;
    options.rule = cfg.rule;
    options.root_seed = derive_seed(cfg.root_seed, seed_tag::kRepetition,
                                    static_cast<std::uint64_t>(rep));
    options.init_scale = cfg.init_scale;
    RunTrace trace = run(*problem, schedule, options);
    // Timing would break re-run byte-identity; file artifacts carry none.
    trace.wall_seconds = 0.0;

    RepetitionArtifacts rep_art;
    rep_art.seed = options.root_seed;
    const std::string stem = "trace_" + std::to_string(rep);
    rep_art.trace_csv = (dir / (stem + ".csv")).string();
    rep_art.trace_jsonl = (dir / (stem + ".jsonl")).string();
    rep_art.report_json = (dir / ("report_" + std::to_string(rep) + ".json")).string();
    write_trace_csv(trace, rep_art.trace_csv);
    write_trace_jsonl(trace, rep_art.trace_jsonl);
    write_report_json(trace, adaptive_rule_name(cfg.rule), options.root_seed,
                      rep_art.report_json);

    std::vector<double> metrics;
    metrics.reserve(trace.rows.size());
    for (const TraceRow& r : trace.rows) metrics.push_back(row_metric(r));
    rep_art.avg_grad_norm = mean_of(metrics);
    rep_art.final_grad_norm = metrics.empty() ? 0.0 : metrics.back();
    rep_avgs.push_back(rep_art.avg_grad_norm);
    rep_finals.push_back(rep_art.final_grad_norm);
    metric_rows.push_back(std::move(metrics));
    artifacts.repetitions.push_back(std::move(rep_art));
  }

  // Plot data: per-iteration mean and stddev band across repetitions.
  artifacts.plot_csv = (dir / "plot.csv").string();
  {
    std::ostringstream out;
    out << "t,mean_grad_norm,stddev_grad_norm\n";
    const std::size_t T = metric_rows.empty() ? 0 : metric_rows[0].size();
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> column;
      column.reserve(metric_rows.size());
      for (const auto& rowset : metric_rows) column.push_back(rowset[t]);
      out << (t + 1) << ',' << format_double(mean_of(column)) << ','
          << format_double(sample_stddev(column)) << "\n";
    }
    write_text(artifacts.plot_csv, out.str());
  }

  artifacts.avg_grad_norm = mean_of(rep_avgs);
  artifacts.summary_json = (dir / "summary.json").string();
  {
    ordered_json j;
    j["problem"] = cfg.problem;
    j["rule"] = adaptive_rule_name(cfg.rule);
    j["root_seed"] = cfg.root_seed;
    j["repetitions"] = cfg.repetitions;
    j["note"] =
        "acceptance is property-based; reference values come from closed-form "
        "oracles, not recorded experiment figures";
    j["metric"] =
        (cfg.problem == "quadratic" || cfg.problem == "metalearn")
            ? "grad_norm_true"
            : "grad_norm_wbar";
    j["schedule"] = schedule_json(schedule);
    ordered_json seeds = ordered_json::array();
    for (const auto& r : artifacts.repetitions) seeds.push_back(r.seed);
    j["seeds"] = seeds;
    ordered_json reps = ordered_json::array();
    for (const auto& r : artifacts.repetitions) {
      ordered_json jr;
      jr["seed"] = r.seed;
      jr["trace_csv"] = fs::path(r.trace_csv).filename().string();
      jr["avg_grad_norm"] = r.avg_grad_norm;
      jr["final_grad_norm"] = r.final_grad_norm;
      reps.push_back(jr);
    }
    j["repetition_results"] = reps;
    j["avg_grad_norm"] = artifacts.avg_grad_norm;
    j["final_grad_norm_mean"] = mean_of(rep_finals);
    j["final_grad_norm_stddev"] = sample_stddev(rep_finals);
    j["config_text"] = serialize_config(cfg);
    write_text(artifacts.summary_json, j.dump(2) + "\n");
  }
  return artifacts;
}

ComparisonReport compare_variants(const ExperimentConfig& cfg,
                                  const std::vector<AdaptiveRule>& rules) {
  if (rules.size() < 2) {
    throw std::invalid_argument("compare_variants: need at least 2 variants");
  }
  const std::unique_ptr<BilevelProblem> problem = build_problem(cfg);
  const int M = problem->num_clients();
  ScheduleConfig schedule = with_defaults(cfg.schedule, M, &problem->constants());
  validate_schedule(schedule, M);

  ComparisonReport report;
  report.config_text = serialize_config(cfg);
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    report.seeds.push_back(derive_seed(cfg.root_seed, seed_tag::kRepetition,
                                       static_cast<std::uint64_t>(rep)));
  }

  for (const AdaptiveRule rule : rules) {
    VariantResult res;
    res.rule = adaptive_rule_name(rule);
    std::vector<double> finals;
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      RunOptions options;
      options.rule = rule;
      options.root_seed = report.seeds[static_cast<std::size_t>(rep)];
      options.init_scale = cfg.init_scale;
      const RunTrace trace = run(*problem, schedule, options);
      res.per_rep_avg.push_back(trace_avg_metric(trace));
      finals.push_back(trace.rows.empty() ? 0.0
                                          : row_metric(trace.rows.back()));
      res.samples_total = trace.samples_total;
      res.comm_rounds = trace.comm_rounds;
    }
    res.mean_avg_grad_norm = mean_of(res.per_rep_avg);
    res.stddev_avg_grad_norm = sample_stddev(res.per_rep_avg);
    res.mean_final_grad_norm = mean_of(finals);
    res.stddev_final_grad_norm = sample_stddev(finals);
    report.variants.push_back(std::move(res));
  }

  for (const VariantResult& v : report.variants) {
    std::vector<double> diffs;
    for (std::size_t rep = 0; rep < v.per_rep_avg.size(); ++rep) {
      diffs.push_back(v.per_rep_avg[rep] -
                      report.variants[0].per_rep_avg[rep]);
    }
    report.paired_diff_avg.push_back(std::move(diffs));
  }
  return report;
}

std::string to_json(const ComparisonReport& report) {
  ordered_json j;
  ordered_json variants = ordered_json::array();
  for (const VariantResult& v : report.variants) {
    ordered_json jv;
    jv["rule"] = v.rule;
    jv["mean_avg_grad_norm"] = v.mean_avg_grad_norm;
    jv["stddev_avg_grad_norm"] = v.stddev_avg_grad_norm;
    jv["mean_final_grad_norm"] = v.mean_final_grad_norm;
    jv["stddev_final_grad_norm"] = v.stddev_final_grad_norm;
    jv["samples_total"] = v.samples_total;
    jv["comm_rounds"] = v.comm_rounds;
    jv["per_rep_avg"] = v.per_rep_avg;
    variants.push_back(jv);
  }
  j["variants"] = variants;
  j["paired_diff_avg"] = report.paired_diff_avg;
  j["seeds"] = report.seeds;
  j["config_text"] = report.config_text;
  return j.dump(2) + "\n";
}

HyperCleanDemoReport hyperclean_demo(const ExperimentConfig& cfg) {
  const HyperCleanDemoData demo = make_hyperclean_demo_data(cfg.hyperclean);
  const std::unique_ptr<BilevelProblem> problem =
      make_hyperclean_problem(demo.spec);
  const int M = problem->num_clients();
  ScheduleConfig schedule = with_defaults(cfg.schedule, M, &problem->constants());
  validate_schedule(schedule, M);

  // Neutral start: sigmoid(0) weights every sample equally.
  const Vector x0 = Vector::Zero(problem->dim_upper());
  const Vector y0 = Vector::Zero(problem->dim_lower());
  RunOptions options;
  options.rule = cfg.rule;
  options.root_seed = cfg.root_seed;
  options.x1 = &x0;
  options.y1 = &y0;
  const RunTrace trace = run(*problem, schedule, options);
  const Vector& x_final = trace.xbar_history.back();

  HyperCleanDemoReport report;
  report.config_text = serialize_config(cfg);
  report.wall_seconds = trace.wall_seconds;
  report.final_grad_norm_wbar = trace.rows.back().grad_norm_wbar;

  const Vector y_clean = averaged_lower_argmin(*problem, x_final);
  const Vector y_base = averaged_lower_argmin(*problem, x0);
  report.cleaned_accuracy = classification_accuracy(demo.test, y_clean);
  report.baseline_accuracy = classification_accuracy(demo.test, y_base);

  double sum_corr = 0.0, sum_clean = 0.0;
  for (std::size_t i = 0; i < demo.corrupted.size(); ++i) {
    const double w = sigmoid(x_final[static_cast<Eigen::Index>(i)]);
    if (demo.corrupted[i] != 0) {
      sum_corr += w;
      ++report.num_corrupted;
    } else {
      sum_clean += w;
      ++report.num_clean;
    }
  }
  report.vacuous = report.num_corrupted == 0 || report.num_clean == 0;
  if (report.num_corrupted > 0) {
    report.mean_weight_corrupted = sum_corr / report.num_corrupted;
  }
  if (report.num_clean > 0) {
    report.mean_weight_clean = sum_clean / report.num_clean;
  }
  report.separated =
      !report.vacuous &&
      report.mean_weight_corrupted < report.mean_weight_clean;
  return report;
}

std::string to_json(const HyperCleanDemoReport& report) {
  ordered_json j;
  j["baseline_accuracy"] = report.baseline_accuracy;
  j["cleaned_accuracy"] = report.cleaned_accuracy;
  j["mean_weight_corrupted"] = report.mean_weight_corrupted;
  j["mean_weight_clean"] = report.mean_weight_clean;
  j["num_corrupted"] = report.num_corrupted;
  j["num_clean"] = report.num_clean;
  j["separated"] = report.separated;
  j["vacuous"] = report.vacuous;
  if (report.vacuous) {
    j["note"] =
        "no corrupted/clean split to compare; the weight contrast is vacuous";
  }
  j["final_grad_norm_wbar"] = report.final_grad_norm_wbar;
  j["wall_seconds"] = report.wall_seconds;
  j["config_text"] = report.config_text;
  return j.dump(2) + "\n";
}

}  // namespace fedbilevel
