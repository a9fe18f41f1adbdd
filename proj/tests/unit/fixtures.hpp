#pragma once

#include <cmath>
#include <memory>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "vk/energy2d.hpp"
#include "vk/plate_field.hpp"
#include "vk/tensor_core.hpp"

namespace vk::testing {

inline Mat3 random_matrix(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n;
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = scale * n(rng);
  return m;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Mat3 sym(const Mat3& m) { return 0.5 * (m + m.transpose()); }

// v = kappa x1^2 / 2 with u1 = -kappa^2 x1^3 / 6, so the membrane strain vanishes.
inline PlateState pure_bend_state(const GridSpec& g, double kappa) {
  auto bc = std::make_shared<const BoundaryData>(BoundaryData::from_functions(
      g, [=](double x, double) { return -kappa * kappa * x * x * x / 6.0; },
      [](double, double) { return 0.0; }, [=](double x, double) { return 0.5 * kappa * x * x; },
      [=](double x, double) { return kappa * x; }, [](double, double) { return 0.0; }));
  return make_state(g, bc, bc->u1_hat, bc->u2_hat, bc->v_hat);
}

// Flat state sharing the boundary data of `like`.
inline PlateState flat_state(const GridSpec& g) { return zero_state(g); }

inline PlateState state_from(const GridSpec& g, const ScalarFn& u1, const ScalarFn& u2,
                             const ScalarFn& v, const ScalarFn& g1, const ScalarFn& g2) {
  auto bc = std::make_shared<const BoundaryData>(BoundaryData::from_functions(g, u1, u2, v, g1, g2));
  return make_state(g, bc, bc->u1_hat, bc->u2_hat, bc->v_hat);
}

inline PlateState random_interior(const PlateState& base, std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> u(-amp, amp);
  Eigen::VectorXd x = pack_interior(base);
  for (Eigen::Index k = 0; k < x.size(); ++k) x(k) += u(rng);
  return with_interior(base, x);
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Eigen::VectorXd x(n);
  for (Eigen::Index k = 0; k < n; ++k) x(k) = d(rng);
  return x;
}

inline ReducedForms unit_forms() { return ReducedForms::from_material(MaterialSpec{}); }

}  // namespace vk::testing
