#pragma once

#include <vector>

namespace vk {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b] (exact for polynomials of degree 2n-1).
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

}  // namespace vk
