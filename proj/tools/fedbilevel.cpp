// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedbilevel/config.hpp"
#include "fedbilevel/experiment.hpp"
#include "fedbilevel/hypergrad.hpp"
#include "fedbilevel/rng.hpp"
#include "fedbilevel/trace_io.hpp"

namespace {

using namespace fedbilevel;

struct CommonArgs {
  std::string config_path;
  std::string seed_text;
  std::string out_dir;

  ExperimentConfig load() const {
    ExperimentConfig cfg = parse_config(config_path);
    if (!seed_text.empty()) {
      try {
        cfg.root_seed = std::stoull(seed_text);
      } catch (const std::exception&) {
        throw ConfigError("--seed expects an unsigned integer, got '" +
                          seed_text + "'");
      }
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonArgs* args, bool with_out = true) {
  cmd->add_option("--config", args->config_path, "experiment config file")
      ->required();
  cmd->add_option("--seed", args->seed_text, "override root_seed");
  if (with_out) {
    cmd->add_option("--out", args->out_dir, "override output directory");
  }
}

int cmd_run(const CommonArgs& args) {
  const ExperimentConfig cfg = args.load();
  const ExperimentArtifacts artifacts = run_experiment(cfg);
  for (const RepetitionArtifacts& rep : artifacts.repetitions) {
    std::cout << rep.trace_csv << "  seed=" << rep.seed
              << "  avg_grad_norm=" << format_double(rep.avg_grad_norm)
              << "  final_grad_norm=" << format_double(rep.final_grad_norm)
              << "\n";
  }
  std::cout << "summary: " << artifacts.summary_json << "\n";
  std::cout << "plot data: " << artifacts.plot_csv << "\n";
  std::cout << "avg_grad_norm: " << format_double(artifacts.avg_grad_norm)
            << "\n";
  return 0;
}

int cmd_bias_study(const CommonArgs& args, const std::string& k_list,
                   int num_samples, const std::string& out_file) {
  const ExperimentConfig cfg = args.load();
  if (cfg.problem != "quadratic") {
    throw ConfigError("bias-study requires problem = \"quadratic\"");
  }
  std::vector<int> ks;
  std::stringstream ss(k_list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      ks.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError("--k-list expects comma-separated integers, got '" +
                        tok + "'");
    }
  }
  if (ks.empty()) throw ConfigError("--k-list is empty");

  const QuadraticBilevelSpec spec = random_quadratic_spec(cfg.quadratic);
  RngStream rng(derive_seed(cfg.root_seed, seed_tag::kProbePoints));
  const Vector x = rng.gaussian_vector(spec.dim_upper());
  const Vector y = rng.gaussian_vector(spec.dim_lower());
  const ProblemConstants constants = quadratic_constants(spec);

  std::ostringstream csv;
  csv << "K,empirical_bias,bound,stderr,num_samples\n";
  for (const int K : ks) {
    NeumannConfig ncfg;
    ncfg.K = K;
    ncfg.seed = derive_seed(cfg.root_seed, seed_tag::kRepetition,
                            static_cast<std::uint64_t>(K));
    const EmpiricalBias bias = empirical_bias(spec, 0, x, y, ncfg, num_samples);
    csv << K << ',' << format_double(bias.bias) << ','
        << format_double(bias_bound(constants, K)) << ','
        << format_double(bias.standard_error) << ',' << bias.num_samples
        << "\n";
  }

  std::string path = out_file;
  if (path.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    path = (std::filesystem::path(cfg.out_dir) / "bias_study.csv").string();
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << csv.str();
  std::cout << csv.str();
  std::cout << "written: " << path << "\n";
  return 0;
}

int cmd_compare(const CommonArgs& args, const std::string& rules_text) {
  const ExperimentConfig cfg = args.load();
  std::vector<AdaptiveRule> rules;
  std::stringstream ss(rules_text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) rules.push_back(parse_adaptive_rule(tok));
  }
  if (rules.size() < 2) {
    throw ConfigError("--rules needs at least two comma-separated rules");
  }
  const ComparisonReport report = compare_variants(cfg, rules);
  for (const VariantResult& v : report.variants) {
    std::cout << v.rule << ": avg_grad_norm "
              << format_double(v.mean_avg_grad_norm) << " +- "
              << format_double(v.stddev_avg_grad_norm) << ", final "
              << format_double(v.mean_final_grad_norm) << " +- "
              << format_double(v.stddev_final_grad_norm) << ", samples "
              << v.samples_total << ", rounds " << v.comm_rounds << "\n";
  }
  std::filesystem::create_directories(cfg.out_dir);
  const std::string path =
      (std::filesystem::path(cfg.out_dir) / "comparison.json").string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << to_json(report);
  std::cout << "written: " << path << "\n";
  return 0;
}

int cmd_check_constants(const CommonArgs& args) {
  const ExperimentConfig cfg = args.load();
  std::cout << describe(check_constants(cfg));
  return 0;
}

int cmd_clean_demo(const CommonArgs& args) {
  ExperimentConfig cfg = args.load();
  cfg.problem = "hyperclean";
  const HyperCleanDemoReport report = hyperclean_demo(cfg);
  std::cout << "baseline accuracy: " << format_double(report.baseline_accuracy)
            << "\n";
  std::cout << "cleaned accuracy:  " << format_double(report.cleaned_accuracy)
            << "\n";
  std::cout << "mean weight corrupted: "
            << format_double(report.mean_weight_corrupted) << " over "
            << report.num_corrupted << " samples\n";
  std::cout << "mean weight clean:     "
            << format_double(report.mean_weight_clean) << " over "
            << report.num_clean << " samples\n";
  if (report.vacuous) {
    std::cout << "(no corrupted/clean contrast to report)\n";
  }
  std::filesystem::create_directories(cfg.out_dir);
  const std::string path =
      (std::filesystem::path(cfg.out_dir) / "clean_demo.json").string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << to_json(report);
  std::cout << "written: " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated bilevel optimization experiment driver"};
  app.require_subcommand(1);

  CommonArgs run_args, bias_args, compare_args, check_args, demo_args;
  std::string k_list = "1,2,4,8,16";
  int num_samples = 10000;
  std::string bias_out;
  std::string rules_text = "norm_scalar,identity";

  CLI::App* run_cmd = app.add_subcommand("run", "run the configured experiment");
  add_common(run_cmd, &run_args);

  CLI::App* bias_cmd = app.add_subcommand(
      "bias-study", "empirical estimator bias against the geometric bound");
  add_common(bias_cmd, &bias_args);
  bias_cmd->add_option("--k-list", k_list, "comma-separated K values");
  bias_cmd->add_option("--num-samples", num_samples, "draws per K")
      ->check(CLI::PositiveNumber);
  bias_cmd->add_option("--out-file", bias_out, "CSV path (default out_dir)");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "adaptive-rule comparison, matched seeds");
  add_common(compare_cmd, &compare_args);
  compare_cmd->add_option("--rules", rules_text, "comma-separated rules");

  CLI::App* check_cmd = app.add_subcommand(
      "check-constants", "evaluate the step-size feasibility inequalities");
  add_common(check_cmd, &check_args, false);

  CLI::App* demo_cmd =
      app.add_subcommand("clean-demo", "data hyper-cleaning demonstration");
  add_common(demo_cmd, &demo_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_args);
    if (bias_cmd->parsed()) {
      return cmd_bias_study(bias_args, k_list, num_samples, bias_out);
    }
    if (compare_cmd->parsed()) return cmd_compare(compare_args, rules_text);
    if (check_cmd->parsed()) return cmd_check_constants(check_args);
    if (demo_cmd->parsed()) return cmd_clean_demo(demo_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
