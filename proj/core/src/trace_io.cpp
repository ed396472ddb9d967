// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/trace_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fedbilevel {
namespace {

using ordered_json = nlohmann::ordered_json;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot open for writing: " + path);
  }
  return out;
}

std::string opt_cell(const std::optional<double>& v) {
  return v.has_value() ? format_double(*v) : std::string();
}

ordered_json opt_json(const std::optional<double>& v) {
  if (v.has_value()) return *v;
  return nullptr;
}

ordered_json vector_json(const Vector& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
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

std::optional<double> parse_opt(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  return std::stod(cell);
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_trace_csv(const RunTrace& trace, const std::string& path) {
  std::ofstream out = open_out(path);
  out << kTraceCsvHeader << "\n";
  for (const TraceRow& r : trace.rows) {
    out << r.t << ',' << format_double(r.eta) << ',' << opt_cell(r.grad_norm_true)
        << ',' << format_double(r.grad_norm_wbar) << ',' << opt_cell(r.lower_gap)
        << ',' << opt_cell(r.tracking_err_w) << ',' << r.samples_total << ','
        << r.comm_rounds << "\n";
  }
  if (!out) {
    throw ConfigError("write failed: " + path);
  }
}

std::vector<TraceRow> read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open for reading: " + path);
  }
  std::string line;
  if (!std::getline(in, line) || line != kTraceCsvHeader) {
    throw ConfigError("unexpected trace header in " + path);
  }
  std::vector<TraceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back(std::string());
    if (cells.size() != 8) {
      throw ConfigError("malformed trace row in " + path + ": " + line);
    }
    TraceRow r;
    r.t = std::stoll(cells[0]);
    r.eta = std::stod(cells[1]);
    r.grad_norm_true = parse_opt(cells[2]);
    r.grad_norm_wbar = std::stod(cells[3]);
    r.lower_gap = parse_opt(cells[4]);
    r.tracking_err_w = parse_opt(cells[5]);
    r.samples_total = std::stoll(cells[6]);
    r.comm_rounds = std::stoll(cells[7]);
    rows.push_back(r);
  }
  return rows;
}

void write_trace_jsonl(const RunTrace& trace, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const TraceRow& r : trace.rows) {
    ordered_json j;
    j["t"] = r.t;
    j["eta"] = r.eta;
    j["grad_norm_true"] = opt_json(r.grad_norm_true);
    j["grad_norm_wbar"] = r.grad_norm_wbar;
    j["lower_gap"] = opt_json(r.lower_gap);
    j["tracking_err_w"] = opt_json(r.tracking_err_w);
    j["samples_total"] = r.samples_total;
    j["comm_rounds"] = r.comm_rounds;
    out << j.dump() << "\n";
  }
  if (!out) {
    throw ConfigError("write failed: " + path);
  }
}

void write_report_json(const RunTrace& trace, const std::string& rule_name,
                       std::uint64_t root_seed, const std::string& path) {
  ordered_json j;
  j["rule"] = rule_name;
  j["root_seed"] = root_seed;
  j["schedule"] = schedule_json(trace.schedule);
  j["samples_total"] = trace.samples_total;
  j["comm_rounds"] = trace.comm_rounds;
  j["wall_seconds"] = trace.wall_seconds;
  j["selected_t"] = trace.selected_t;
  j["selected_output"] = vector_json(trace.selected_output);
  j["best_t"] = trace.best_t;
  j["best_output"] = vector_json(trace.best_output);
  if (!trace.rows.empty()) {
    const TraceRow& last = trace.rows.back();
    ordered_json fin;
    fin["t"] = last.t;
    fin["grad_norm_wbar"] = last.grad_norm_wbar;
    fin["grad_norm_true"] = opt_json(last.grad_norm_true);
    j["final_row"] = fin;
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) {
    throw ConfigError("write failed: " + path);
  }
}

}  // namespace fedbilevel
