// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedbilevel/constants.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fedbilevel {

void ProblemConstants::validate() const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument(std::string("constant ") + name +
                                  " must be finite and nonnegative");
    }
  };
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    throw std::invalid_argument("constant mu must be positive");
  }
  check(L_g, "L_g");
  check(L_f, "L_f");
  check(L_gxy, "L_gxy");
  check(L_gyy, "L_gyy");
  check(C_fy, "C_fy");
  check(C_gxy, "C_gxy");
  check(sigma, "sigma");
  check(delta_f, "delta_f");
  check(delta_g, "delta_g");
  if (mu > L_g) {
    throw std::invalid_argument("constants require mu <= L_g");
  }
}

DerivedConstants DerivedConstants::from(const ProblemConstants& c, int K) {
  c.validate();
  DerivedConstants d;
  const double mu = c.mu;
  const double mu2 = mu * mu;
  const double mu4 = mu2 * mu2;
  d.kappa = c.C_gxy / mu;

  const double curvature = c.C_gxy * c.L_gyy / mu2 + c.L_gxy / mu;
  d.L_y = curvature * (1.0 + c.C_gxy / mu);
  d.L = (c.L_f + c.C_gxy * c.L_f / mu + c.C_fy * curvature) *
        (1.0 + c.C_gxy / mu);

  const double lbar_sq =
      c.L_f * c.L_f + c.L_gxy * c.L_gxy * c.C_fy * c.C_fy / mu2 +
      c.L_gyy * c.L_gyy * c.C_gxy * c.C_gxy * c.C_fy * c.C_fy / mu4 +
      c.L_f * c.L_f * c.C_gxy * c.C_gxy / mu2;
  d.L_bar = std::sqrt(lbar_sq);
  d.L_hat = std::sqrt(8.0 * lbar_sq);

  // Mean-square smoothness of the K-term randomized estimator. Degenerates
  // to infinity at mu == L_g where its K^3 term divides by zero.
  const double denom = 2.0 * mu * c.L_g - mu2;
  const double k1 = static_cast<double>(K);
  const double k3 = k1 * k1 * k1;
  const double gap = c.L_g - mu;
  const double cubic_num =
      6.0 * c.C_gxy * c.C_gxy * c.L_f * c.L_f * k3 * c.L_gyy * c.L_gyy;
  const double lk_sq =
      2.0 * c.L_f * c.L_f +
      6.0 * c.C_gxy * c.C_gxy * c.L_f * c.L_f * k1 / denom +
      6.0 * c.C_fy * c.C_fy * c.L_gxy * c.L_gxy * k1 / denom +
      (cubic_num == 0.0 ? 0.0 : cubic_num / (gap * gap * denom));
  d.L_K = std::sqrt(lk_sq);

  const double dhat_sq =
      4.0 * c.delta_f * c.delta_f +
      4.0 * c.C_fy * c.C_fy * c.delta_g * c.delta_g / mu2 +
      4.0 * c.C_gxy * c.C_gxy * c.C_fy * c.C_fy * c.delta_g * c.delta_g / mu4 +
      4.0 * c.C_gxy * c.C_gxy * c.delta_f * c.delta_f / mu2;
  d.delta_hat = std::sqrt(dhat_sq);
  return d;
}

std::string describe(const ProblemConstants& c) {
  std::ostringstream os;
  os << "mu=" << c.mu << " L_g=" << c.L_g << " L_f=" << c.L_f
     << " L_gxy=" << c.L_gxy << " L_gyy=" << c.L_gyy << " C_fy=" << c.C_fy
     << " C_gxy=" << c.C_gxy << " sigma=" << c.sigma
     << " delta_f=" << c.delta_f << " delta_g=" << c.delta_g;
  return os.str();
}

}  // namespace fedbilevel
