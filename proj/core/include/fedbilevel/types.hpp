// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_TYPES_HPP_
#define FEDBILEVEL_TYPES_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedbilevel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Thrown when a run reaches a non-finite state or a numeric contract fails.
// Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown for malformed or inconsistent experiment configuration.
// Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void require_finite(const Vector& v, const char* name) {
  if (!v.allFinite()) {
    throw std::domain_error(std::string(name) + " contains a non-finite entry");
  }
}

inline void require_dim(const Vector& v, Eigen::Index dim, const char* name) {
  if (v.size() != dim) {
    throw std::invalid_argument(std::string(name) + " has size " +
                                std::to_string(v.size()) + ", expected " +
                                std::to_string(dim));
  }
}

}  // namespace fedbilevel

#endif  // FEDBILEVEL_TYPES_HPP_
