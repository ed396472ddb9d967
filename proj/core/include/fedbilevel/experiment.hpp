// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_EXPERIMENT_HPP_
#define FEDBILEVEL_EXPERIMENT_HPP_

#include <memory>
#include <string>
#include <vector>

#include "fedbilevel/config.hpp"
#include "fedbilevel/federation.hpp"
#include "fedbilevel/problem.hpp"

namespace fedbilevel {

// Instantiates the problem the config selects, with its own seed.
std::unique_ptr<BilevelProblem> build_problem(const ExperimentConfig& cfg);

// One feasibility inequality of the step-size analysis, evaluated on the
// resolved schedule and the problem's advertised constants.
struct ConstantCheck {
  std::string name;
  bool satisfied = false;
  double lhs = 0.0;  // the constrained quantity
  double rhs = 0.0;  // its bound (or required value)
};

struct ConstantsReport {
  std::vector<ConstantCheck> checks;
  std::vector<std::string> warnings;
  ScheduleConfig resolved;
  DerivedConstants derived;
  double Gamma = 0.0;

  std::vector<std::string> failures() const;
  bool all_satisfied() const { return failures().empty(); }
};

// Advisory only: reports pass/fail per inequality, never blocks a run.
ConstantsReport check_constants(const ScheduleConfig& cfg,
                                const BilevelProblem& problem);
ConstantsReport check_constants(const ExperimentConfig& cfg);

std::string describe(const ConstantsReport& report);

// Artifacts written by run_experiment, one trace set per repetition.
struct RepetitionArtifacts {
  std::uint64_t seed = 0;  // derived from root_seed and the repetition index
  std::string trace_csv;
  std::string trace_jsonl;
  std::string report_json;
  double avg_grad_norm = 0.0;    // mean over iterations
  double final_grad_norm = 0.0;  // last recorded iteration
};

struct ExperimentArtifacts {
  std::vector<RepetitionArtifacts> repetitions;
  std::string summary_json;
  std::string plot_csv;
  double avg_grad_norm = 0.0;  // mean of the per-repetition means
};

// Runs `repetitions` seeded repetitions and writes, under cfg.out_dir:
// trace_<i>.csv, trace_<i>.jsonl, report_<i>.json, plot.csv, summary.json.
// File contents depend only on the config, so re-runs are byte-identical.
ExperimentArtifacts run_experiment(const ExperimentConfig& cfg);

struct VariantResult {
  std::string rule;
  double mean_avg_grad_norm = 0.0;
  double stddev_avg_grad_norm = 0.0;
  double mean_final_grad_norm = 0.0;
  double stddev_final_grad_norm = 0.0;
  long long samples_total = 0;
  long long comm_rounds = 0;
  std::vector<double> per_rep_avg;  // one entry per repetition
};

struct ComparisonReport {
  std::vector<VariantResult> variants;
  // Per repetition: variant[i] average minus variant[0] average.
  std::vector<std::vector<double>> paired_diff_avg;
  std::vector<std::uint64_t> seeds;
  std::string config_text;
};

// Runs every rule on the same problem with matched per-repetition seeds.
ComparisonReport compare_variants(const ExperimentConfig& cfg,
                                  const std::vector<AdaptiveRule>& rules);

std::string to_json(const ComparisonReport& report);

struct HyperCleanDemoReport {
  double baseline_accuracy = 0.0;  // uniform weights, lower-level-only model
  double cleaned_accuracy = 0.0;   // model retrained with learned weights
  double mean_weight_corrupted = 0.0;
  double mean_weight_clean = 0.0;
  int num_corrupted = 0;
  int num_clean = 0;
  bool separated = false;  // mean corrupted weight < mean clean weight
  bool vacuous = false;    // no corrupted samples to compare
  double final_grad_norm_wbar = 0.0;
  double wall_seconds = 0.0;
  std::string config_text;
};

HyperCleanDemoReport hyperclean_demo(const ExperimentConfig& cfg);

std::string to_json(const HyperCleanDemoReport& report);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_EXPERIMENT_HPP_
