// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

namespace oppradar {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule mapped to [lo, hi]. Weights sum to hi - lo.
QuadratureRule gauss_legendre(int n, double lo, double hi);

}  // namespace oppradar
