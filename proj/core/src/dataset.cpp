// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedbilevel/rng.hpp"

namespace fedbilevel {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_double(const std::string& cell, const std::string& path,
                    std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(path + ":" + std::to_string(line_no) +
                      ": cannot parse numeric cell '" + cell + "'");
  }
}

}  // namespace

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), dim());
  out.labels.resize(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= num_samples()) {
      throw std::invalid_argument("subset index out of range");
    }
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx);
    out.labels[static_cast<Eigen::Index>(i)] = labels[idx];
  }
  return out;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "label") {
    throw ConfigError(path + ": header must be feature_0,...,label");
  }
  const int d = static_cast<int>(header.size()) - 1;
  for (int i = 0; i < d; ++i) {
    if (header[i] != "feature_" + std::to_string(i)) {
      throw ConfigError(path + ": unexpected header column '" + header[i] +
                        "', expected feature_" + std::to_string(i));
    }
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(header.size()) +
                        " cells, got " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& cell : cells) row.push_back(parse_double(cell, path, line_no));
    rows.push_back(std::move(row));
  }
  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), d);
  data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) {
      data.features(static_cast<Eigen::Index>(i), j) = rows[i][j];
    }
    data.labels[static_cast<Eigen::Index>(i)] = rows[i][d];
  }
  return data;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset file: " + path);
  for (int j = 0; j < data.dim(); ++j) out << "feature_" << j << ",";
  out << "label\n";
  for (int i = 0; i < data.num_samples(); ++i) {
    for (int j = 0; j < data.dim(); ++j) {
      out << format_double(data.features(i, j)) << ",";
    }
    out << format_double(data.labels[i]) << "\n";
  }
  if (!out) throw ConfigError("failed while writing dataset file: " + path);
}

Dataset synthetic_classification(const SyntheticClassificationOptions& opt) {
  if (opt.num_samples < 1 || opt.dim < 1 || opt.label_noise < 0.0) {
    throw std::invalid_argument("synthetic_classification: bad options");
  }
  RngStream rng(derive_seed(opt.seed, seed_tag::kDataGen));
  const Vector teacher =
      rng.gaussian_vector(opt.dim, 1.0 / std::sqrt(double(opt.dim)));
  Dataset data;
  data.features.resize(opt.num_samples, opt.dim);
  data.labels.resize(opt.num_samples);
  for (int i = 0; i < opt.num_samples; ++i) {
    const Vector x = rng.gaussian_vector(opt.dim, 1.0);
    data.features.row(i) = x;
    const double score = x.dot(teacher) + opt.label_noise * rng.normal();
    data.labels[i] = score > 0.0 ? 1.0 : 0.0;
  }
  return data;
}

Dataset synthetic_regression(int num_samples, const Vector& theta, double noise,
                             std::uint64_t seed) {
  if (num_samples < 1 || theta.size() < 1 || noise < 0.0) {
    throw std::invalid_argument("synthetic_regression: bad options");
  }
  RngStream rng(derive_seed(seed, seed_tag::kDataGen));
  Dataset data;
  data.features.resize(num_samples, theta.size());
  data.labels.resize(num_samples);
  for (int i = 0; i < num_samples; ++i) {
    const Vector z = rng.gaussian_vector(theta.size(), 1.0);
    data.features.row(i) = z;
    data.labels[i] = z.dot(theta) + noise * rng.normal();
  }
  return data;
}

CorruptionResult flip_labels(const Dataset& data, double rate,
                             std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("flip_labels: rate must be in [0, 1]");
  }
  const int n = data.num_samples();
  const int flips = static_cast<int>(std::lround(rate * n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(derive_seed(seed, seed_tag::kDataGen, 0x11));
  std::shuffle(order.begin(), order.end(), rng.engine());
  CorruptionResult out;
  out.data = data;
  out.flipped.assign(order.begin(), order.begin() + flips);
  std::sort(out.flipped.begin(), out.flipped.end());
  for (const int idx : out.flipped) {
    out.data.labels[idx] = out.data.labels[idx] == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

PartitionMode parse_partition_mode(const std::string& name) {
  if (name == "iid") return PartitionMode::kIid;
  if (name == "sorted_label") return PartitionMode::kSortedLabel;
  if (name == "dirichlet") return PartitionMode::kDirichlet;
  throw ConfigError("unknown partition mode '" + name +
                    "' (expected iid, sorted_label, or dirichlet)");
}

std::string partition_mode_name(PartitionMode mode) {
  switch (mode) {
    case PartitionMode::kIid:
      return "iid";
    case PartitionMode::kSortedLabel:
      return "sorted_label";
    case PartitionMode::kDirichlet:
      return "dirichlet";
  }
  return "unknown";
}

std::vector<std::vector<int>> partition_indices(const Dataset& pool,
                                                int num_clients,
                                                PartitionMode mode,
                                                std::uint64_t seed,
                                                double alpha) {
  const int n = pool.num_samples();
  if (num_clients < 1) {
    throw std::invalid_argument("partition_dataset: need at least one client");
  }
  if (num_clients > n) {
    throw std::invalid_argument(
        "partition_dataset: more clients than pool samples");
  }
  std::vector<std::vector<int>> assignment(num_clients);
  RngStream rng(derive_seed(seed, seed_tag::kPartition));

  switch (mode) {
    case PartitionMode::kIid: {
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng.engine());
      for (int i = 0; i < n; ++i) assignment[i % num_clients].push_back(order[i]);
      break;
    }
    case PartitionMode::kSortedLabel: {
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return pool.labels[a] < pool.labels[b];
      });
      const int base = n / num_clients;
      const int extra = n % num_clients;
      int pos = 0;
      for (int c = 0; c < num_clients; ++c) {
        const int take = base + (c < extra ? 1 : 0);
        for (int i = 0; i < take; ++i) assignment[c].push_back(order[pos++]);
      }
      break;
    }
    case PartitionMode::kDirichlet: {
      if (!(alpha > 0.0)) {
        throw std::invalid_argument("partition_dataset: alpha must be > 0");
      }
      // Group sample indices by label value, preserving pool order.
      std::vector<double> labels_seen;
      std::vector<std::vector<int>> by_label;
      for (int i = 0; i < n; ++i) {
        const double lab = pool.labels[i];
        std::size_t li = 0;
        while (li < labels_seen.size() && labels_seen[li] != lab) ++li;
        if (li == labels_seen.size()) {
          labels_seen.push_back(lab);
          by_label.emplace_back();
        }
        by_label[li].push_back(i);
      }
      for (auto& members : by_label) {
        std::shuffle(members.begin(), members.end(), rng.engine());
        Vector props(num_clients);
        double total = 0.0;
        for (int c = 0; c < num_clients; ++c) {
          props[c] = rng.gamma(alpha);
          total += props[c];
        }
        if (total <= 0.0) props.setConstant(1.0), total = num_clients;
        // Largest-remainder rounding of proportions to whole samples.
        const int m = static_cast<int>(members.size());
        std::vector<int> counts(num_clients);
        std::vector<std::pair<double, int>> rema(num_clients);
        int assigned = 0;
        for (int c = 0; c < num_clients; ++c) {
          const double want = m * props[c] / total;
          counts[c] = static_cast<int>(want);
          rema[c] = {want - counts[c], c};
          assigned += counts[c];
        }
        std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first > b.first;
          return a.second < b.second;
        });
        for (int i = 0; assigned < m; ++i, ++assigned) {
          ++counts[rema[static_cast<std::size_t>(i) % rema.size()].second];
        }
        int pos = 0;
        for (int c = 0; c < num_clients; ++c) {
          for (int i = 0; i < counts[c]; ++i) {
            assignment[c].push_back(members[pos++]);
          }
        }
      }
      break;
    }
  }

  for (auto& idx : assignment) std::sort(idx.begin(), idx.end());
  return assignment;
}

std::vector<Dataset> partition_dataset(const Dataset& pool, int num_clients,
                                       PartitionMode mode, std::uint64_t seed,
                                       double alpha) {
  std::vector<Dataset> out;
  out.reserve(static_cast<std::size_t>(num_clients));
  for (const auto& idx :
       partition_indices(pool, num_clients, mode, seed, alpha)) {
    out.push_back(pool.subset(idx));
  }
  return out;
}

}  // namespace fedbilevel
