// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_CONFIG_HPP_
#define FEDBILEVEL_CONFIG_HPP_

#include <cstdint>
#include <string>

#include "fedbilevel/adaptive.hpp"
#include "fedbilevel/hyperclean.hpp"
#include "fedbilevel/metalearn.hpp"
#include "fedbilevel/quadratic.hpp"
#include "fedbilevel/schedule.hpp"

namespace fedbilevel {

// Flat sectioned key = value text config. Zero-valued schedule fields keep
// their "resolve at run time" meaning; everything else is fully validated at
// parse time.
struct ExperimentConfig {
  std::string problem = "quadratic";  // quadratic | hyperclean | metalearn
  AdaptiveRule rule = AdaptiveRule::kNormScalar;
  std::uint64_t root_seed = 0;
  std::string out_dir = "out";
  int repetitions = 1;
  double init_scale = 1.0;
  ScheduleConfig schedule;
  QuadraticRandomOptions quadratic;
  HyperCleanDemoOptions hyperclean;
  MetaLearnDemoOptions metalearn;
};

ExperimentConfig parse_config(const std::string& path);

// Same parser over an in-memory document; `origin` names it in errors.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);

// Emits every field; parse_config_text(serialize_config(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& cfg);

// Number of clients implied by the selected problem section.
int config_num_clients(const ExperimentConfig& cfg);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_CONFIG_HPP_
