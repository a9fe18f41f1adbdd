#include "vk/quadrature.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "vk/errors.hpp"

namespace vk {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix of the Legendre recurrence.
QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1 || n > 64) throw ConfigError(fmt::format("Gauss-Legendre order {} out of range", n));
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = beta;
    J(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(J);
  QuadratureRule rule;
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  for (int k = 0; k < n; ++k) {
    const double x = solver.eigenvalues()(k);
    const double v0 = solver.eigenvectors()(0, k);
    rule.nodes.push_back(mid + half * x);
    rule.weights.push_back(half * 2.0 * v0 * v0);
  }
  // Symmetrize so that odd moments on symmetric intervals cancel to roundoff.
  for (int k = 0; k < n / 2; ++k) {
    const int q = n - 1 - k;
    const double x = 0.5 * ((rule.nodes[q] - mid) - (rule.nodes[k] - mid));
    const double w = 0.5 * (rule.weights[k] + rule.weights[q]);
    rule.nodes[k] = mid - x;
    rule.nodes[q] = mid + x;
    rule.weights[k] = w;
    rule.weights[q] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = mid;
  return rule;
}

}  // namespace vk
