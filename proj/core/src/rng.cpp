// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/rng.hpp"

namespace fedbilevel {

Matrix RngStream::symmetric_gaussian(Eigen::Index n, double scale) {
  Matrix e(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) e(i, j) = scale * normal();
  }
  return 0.5 * (e + e.transpose());
}

Matrix RngStream::gaussian_matrix(Eigen::Index rows, Eigen::Index cols,
                                  double scale) {
  Matrix e(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) e(i, j) = scale * normal();
  }
  return e;
}

}  // namespace fedbilevel
