// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/config.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "fedbilevel/trace_io.hpp"

namespace fedbilevel {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Common foreign spellings mapped to our key names.
const std::map<std::string, std::string>& aliases() {
  static const std::map<std::string, std::string> kAliases = {
      {"learning_rate", "gamma"}, {"lr", "gamma"},
      {"step_size", "gamma"},     {"iterations", "T"},
      {"num_iterations", "T"},    {"sync_period", "q"},
      {"seed", "root_seed"},      {"clients", "num_clients"},
  };
  return kAliases;
}

struct ParseContext {
  std::string origin;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + what);
  }
};

class Setter {
 public:
  using Fn = std::function<void(const std::string&, const ParseContext&)>;
  Setter() = default;
  Setter(Fn fn) : fn_(std::move(fn)) {}
  void operator()(const std::string& value, const ParseContext& ctx) const {
    fn_(value, ctx);
  }

 private:
  Fn fn_;
};

using KeyMap = std::map<std::string, Setter>;

double parse_double(const std::string& v, const ParseContext& ctx) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) ctx.fail("trailing characters in number '" + v + "'");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    ctx.fail("expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& v, const ParseContext& ctx) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) ctx.fail("trailing characters in integer '" + v + "'");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    ctx.fail("expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, const ParseContext& ctx) {
  try {
    std::size_t pos = 0;
    const std::uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) ctx.fail("trailing characters in integer '" + v + "'");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    ctx.fail("expected an unsigned integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const ParseContext& ctx) {
  if (v == "true") return true;
  if (v == "false") return false;
  ctx.fail("expected true or false, got '" + v + "'");
}

std::string parse_string(const std::string& v, const ParseContext& ctx) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    return v.substr(1, v.size() - 2);
  }
  if (!v.empty() && v.front() != '"') return v;
  ctx.fail("unterminated string '" + v + "'");
}

Setter set_double(double* out) {
  return Setter([out](const std::string& v, const ParseContext& ctx) {
    *out = parse_double(v, ctx);
  });
}

Setter set_int(int* out) {
  return Setter([out](const std::string& v, const ParseContext& ctx) {
    const long long x = parse_int(v, ctx);
    if (x < INT_MIN || x > INT_MAX) ctx.fail("integer out of range: " + v);
    *out = static_cast<int>(x);
  });
}

Setter set_ll(long long* out) {
  return Setter([out](const std::string& v, const ParseContext& ctx) {
    *out = parse_int(v, ctx);
  });
}

Setter set_u64(std::uint64_t* out) {
  return Setter([out](const std::string& v, const ParseContext& ctx) {
    *out = parse_u64(v, ctx);
  });
}

Setter set_bool(bool* out) {
  return Setter([out](const std::string& v, const ParseContext& ctx) {
    *out = parse_bool(v, ctx);
  });
}

Setter set_string(std::string* out) {
  return Setter([out](const std::string& v, const ParseContext& ctx) {
    *out = parse_string(v, ctx);
  });
}

std::map<std::string, KeyMap> build_schema(ExperimentConfig& cfg) {
  std::map<std::string, KeyMap> schema;
  KeyMap& top = schema[""];
  top["problem"] = set_string(&cfg.problem);
  top["rule"] = Setter([&cfg](const std::string& v, const ParseContext& ctx) {
    try {
      cfg.rule = parse_adaptive_rule(parse_string(v, ctx));
    } catch (const ConfigError& e) {
      ctx.fail(e.what());
    }
  });
  top["root_seed"] = set_u64(&cfg.root_seed);
  top["out_dir"] = set_string(&cfg.out_dir);
  top["repetitions"] = set_int(&cfg.repetitions);
  top["init_scale"] = set_double(&cfg.init_scale);

  KeyMap& sched = schema["schedule"];
  sched["k"] = set_double(&cfg.schedule.k);
  sched["n"] = set_ll(&cfg.schedule.n);
  sched["c1"] = set_double(&cfg.schedule.c1);
  sched["c2"] = set_double(&cfg.schedule.c2);
  sched["gamma"] = set_double(&cfg.schedule.gamma);
  sched["lambda"] = set_double(&cfg.schedule.lambda);
  sched["q"] = set_ll(&cfg.schedule.q);
  sched["T"] = set_ll(&cfg.schedule.T);
  sched["K"] = set_int(&cfg.schedule.K);
  sched["rho"] = set_double(&cfg.schedule.rho);
  sched["varrho"] = set_double(&cfg.schedule.varrho);
  sched["varrho_track_beta"] = set_bool(&cfg.schedule.varrho_track_beta);
  sched["vartheta"] = set_double(&cfg.schedule.vartheta);
  sched["tau"] = set_double(&cfg.schedule.tau);
  sched["theta"] = set_double(&cfg.schedule.theta);
  sched["b_hat"] = set_double(&cfg.schedule.b_hat);
  sched["neumann_step"] = set_double(&cfg.schedule.neumann_step);

  KeyMap& quad = schema["quadratic"];
  quad["num_clients"] = set_int(&cfg.quadratic.num_clients);
  quad["dim_upper"] = set_int(&cfg.quadratic.dim_upper);
  quad["dim_lower"] = set_int(&cfg.quadratic.dim_lower);
  quad["mu"] = set_double(&cfg.quadratic.mu);
  quad["L_g"] = set_double(&cfg.quadratic.L_g);
  quad["cross_norm"] = set_double(&cfg.quadratic.cross_norm);
  quad["upper_scale"] = set_double(&cfg.quadratic.upper_scale);
  quad["heterogeneity"] = set_double(&cfg.quadratic.heterogeneity);
  quad["sigma"] = set_double(&cfg.quadratic.sigma);
  quad["shared_curvature"] = set_bool(&cfg.quadratic.shared_curvature);
  quad["seed"] = set_u64(&cfg.quadratic.seed);

  KeyMap& hc = schema["hyperclean"];
  hc["num_train"] = set_int(&cfg.hyperclean.num_train);
  hc["num_val"] = set_int(&cfg.hyperclean.num_val);
  hc["num_test"] = set_int(&cfg.hyperclean.num_test);
  hc["dim"] = set_int(&cfg.hyperclean.dim);
  hc["num_clients"] = set_int(&cfg.hyperclean.num_clients);
  hc["corruption_rate"] = set_double(&cfg.hyperclean.corruption_rate);
  hc["nu"] = set_double(&cfg.hyperclean.nu);
  hc["label_noise"] = set_double(&cfg.hyperclean.label_noise);
  hc["seed"] = set_u64(&cfg.hyperclean.seed);

  KeyMap& ml = schema["metalearn"];
  ml["num_clients"] = set_int(&cfg.metalearn.num_clients);
  ml["shared_dim"] = set_int(&cfg.metalearn.shared_dim);
  ml["task_dim"] = set_int(&cfg.metalearn.task_dim);
  ml["train_per_task"] = set_int(&cfg.metalearn.train_per_task);
  ml["test_per_task"] = set_int(&cfg.metalearn.test_per_task);
  ml["omega"] = set_double(&cfg.metalearn.omega);
  ml["task_spread"] = set_double(&cfg.metalearn.task_spread);
  ml["noise"] = set_double(&cfg.metalearn.noise);
  ml["sigma"] = set_double(&cfg.metalearn.sigma);
  ml["seed"] = set_u64(&cfg.metalearn.seed);
  return schema;
}

[[noreturn]] void unknown_key(const std::string& section,
                              const std::string& key, const KeyMap& keys,
                              const ParseContext& ctx) {
  const std::string where =
      section.empty() ? "top level" : "section [" + section + "]";
  const auto alias = aliases().find(key);
  if (alias != aliases().end()) {
    ctx.fail("unknown key '" + key + "' at " + where + "; did you mean '" +
             alias->second + "'?");
  }
  std::string best;
  int best_dist = 3;
  for (const auto& [candidate, setter] : keys) {
    const int d = edit_distance(key, candidate);
    if (d < best_dist) {
      best_dist = d;
      best = candidate;
    }
  }
  if (!best.empty()) {
    ctx.fail("unknown key '" + key + "' at " + where + "; did you mean '" +
             best + "'?");
  }
  ctx.fail("unknown key '" + key + "' at " + where);
}

void validate_parsed(ExperimentConfig& cfg, const std::string& origin) {
  const auto fail = [&origin](const std::string& what) {
    throw ConfigError(origin + ": " + what);
  };
  if (cfg.problem != "quadratic" && cfg.problem != "hyperclean" &&
      cfg.problem != "metalearn") {
    fail("unknown problem '" + cfg.problem +
         "' (expected quadratic, hyperclean, or metalearn)");
  }
  if (cfg.repetitions < 1) fail("repetitions must be >= 1");
  if (!(cfg.init_scale >= 0.0)) fail("init_scale must be >= 0");
  const int M = config_num_clients(cfg);
  if (M < 1) fail("num_clients must be >= 1");

  // Feasibility of the schedules does not depend on K, so a placeholder lets
  // auto-K configs validate without problem constants.
  ScheduleConfig probe = cfg.schedule;
  if (probe.K == 0) probe.K = 1;
  probe = with_defaults(probe, M, nullptr);
  validate_schedule(probe, M);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  ExperimentConfig cfg;
  auto schema = build_schema(cfg);
  ParseContext ctx;
  ctx.origin = origin;
  std::string section;

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++ctx.line_no;
    std::string line = raw;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("unterminated section header: " + raw);
      section = trim(line.substr(1, line.size() - 2));
      if (section == "experiment") section = "";
      if (schema.find(section) == schema.end()) {
        ctx.fail("unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      ctx.fail("expected 'key = value', got: " + trim(raw));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) ctx.fail("empty key");
    if (value.empty()) ctx.fail("empty value for key '" + key + "'");
    KeyMap& keys = schema[section];
    const auto it = keys.find(key);
    if (it == keys.end()) unknown_key(section, key, keys, ctx);
    it->second(value, ctx);
  }

  validate_parsed(cfg, origin);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  const auto d = [](double v) { return format_double(v); };
  const auto b = [](bool v) { return v ? "true" : "false"; };
  out << "problem = \"" << cfg.problem << "\"\n";
  out << "rule = \"" << adaptive_rule_name(cfg.rule) << "\"\n";
  out << "root_seed = " << cfg.root_seed << "\n";
  out << "out_dir = \"" << cfg.out_dir << "\"\n";
  out << "repetitions = " << cfg.repetitions << "\n";
  out << "init_scale = " << d(cfg.init_scale) << "\n";
  out << "\n[schedule]\n";
  out << "k = " << d(cfg.schedule.k) << "\n";
  out << "n = " << cfg.schedule.n << "\n";
  out << "c1 = " << d(cfg.schedule.c1) << "\n";
  out << "c2 = " << d(cfg.schedule.c2) << "\n";
  out << "gamma = " << d(cfg.schedule.gamma) << "\n";
  out << "lambda = " << d(cfg.schedule.lambda) << "\n";
  out << "q = " << cfg.schedule.q << "\n";
  out << "T = " << cfg.schedule.T << "\n";
  out << "K = " << cfg.schedule.K << "\n";
  out << "rho = " << d(cfg.schedule.rho) << "\n";
  out << "varrho = " << d(cfg.schedule.varrho) << "\n";
  out << "varrho_track_beta = " << b(cfg.schedule.varrho_track_beta) << "\n";
  out << "vartheta = " << d(cfg.schedule.vartheta) << "\n";
  out << "tau = " << d(cfg.schedule.tau) << "\n";
  out << "theta = " << d(cfg.schedule.theta) << "\n";
  out << "b_hat = " << d(cfg.schedule.b_hat) << "\n";
  out << "neumann_step = " << d(cfg.schedule.neumann_step) << "\n";
  out << "\n[quadratic]\n";
  out << "num_clients = " << cfg.quadratic.num_clients << "\n";
  out << "dim_upper = " << cfg.quadratic.dim_upper << "\n";
  out << "dim_lower = " << cfg.quadratic.dim_lower << "\n";
  out << "mu = " << d(cfg.quadratic.mu) << "\n";
  out << "L_g = " << d(cfg.quadratic.L_g) << "\n";
  out << "cross_norm = " << d(cfg.quadratic.cross_norm) << "\n";
  out << "upper_scale = " << d(cfg.quadratic.upper_scale) << "\n";
  out << "heterogeneity = " << d(cfg.quadratic.heterogeneity) << "\n";
  out << "sigma = " << d(cfg.quadratic.sigma) << "\n";
  out << "shared_curvature = " << b(cfg.quadratic.shared_curvature) << "\n";
  out << "seed = " << cfg.quadratic.seed << "\n";
  out << "\n[hyperclean]\n";
  out << "num_train = " << cfg.hyperclean.num_train << "\n";
  out << "num_val = " << cfg.hyperclean.num_val << "\n";
  out << "num_test = " << cfg.hyperclean.num_test << "\n";
  out << "dim = " << cfg.hyperclean.dim << "\n";
  out << "num_clients = " << cfg.hyperclean.num_clients << "\n";
  out << "corruption_rate = " << d(cfg.hyperclean.corruption_rate) << "\n";
  out << "nu = " << d(cfg.hyperclean.nu) << "\n";
  out << "label_noise = " << d(cfg.hyperclean.label_noise) << "\n";
  out << "seed = " << cfg.hyperclean.seed << "\n";
  out << "\n[metalearn]\n";
  out << "num_clients = " << cfg.metalearn.num_clients << "\n";
  out << "shared_dim = " << cfg.metalearn.shared_dim << "\n";
  out << "task_dim = " << cfg.metalearn.task_dim << "\n";
  out << "train_per_task = " << cfg.metalearn.train_per_task << "\n";
  out << "test_per_task = " << cfg.metalearn.test_per_task << "\n";
  out << "omega = " << d(cfg.metalearn.omega) << "\n";
  out << "task_spread = " << d(cfg.metalearn.task_spread) << "\n";
  out << "noise = " << d(cfg.metalearn.noise) << "\n";
  out << "sigma = " << d(cfg.metalearn.sigma) << "\n";
  out << "seed = " << cfg.metalearn.seed << "\n";
  return out.str();
}

int config_num_clients(const ExperimentConfig& cfg) {
  if (cfg.problem == "hyperclean") return cfg.hyperclean.num_clients;
  if (cfg.problem == "metalearn") return cfg.metalearn.num_clients;
  return cfg.quadratic.num_clients;
}

}  // namespace fedbilevel
