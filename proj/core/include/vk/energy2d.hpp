#pragma once

// Von Karman energy, the viscous dissipation distance, the incremental
// objective and weak-form residuals on discrete plate states.
//
// All integrals use midpoint quadrature over cells. Gradients are taken with
// respect to the packed interior degrees of freedom (see plate_field.hpp).

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "vk/plate_field.hpp"
#include "vk/tensor_core.hpp"

namespace vk {

/// Cell-centered normal force density.
struct LoadField {
  Eigen::VectorXd f;

  static LoadField zero(const GridSpec& grid);
  bool is_zero() const { return f.size() == 0 || (f.array() == 0.0).all(); }
};

struct EnergyBreakdown {
  double membrane = 0.0;
  double bending = 0.0;
  double load = 0.0;
  double total = 0.0;
};

/// phi0 = int Q_W(G0)/2 + int Q_W(Hess v)/24 - int f v.
/// Throws PreconditionError when the forms were not verified (a = 0) and `allow_unverified` is false.
EnergyBreakdown energy_phi0(const PlateState& state, const ReducedForms& forms,
                            const LoadField& load, bool allow_unverified = false);

Eigen::VectorXd grad_phi0(const PlateState& state, const ReducedForms& forms,
                          const LoadField& load, bool allow_unverified = false);

/// Squared dissipation distance int Q_D(dG0) + int Q_D(dHess v)/12.
double dissipation_D0_squared(const PlateState& s0, const PlateState& s1,
                              const ReducedForms& forms);
double dissipation_D0(const PlateState& s0, const PlateState& s1, const ReducedForms& forms);
/// Gradient of dissipation_D0_squared with respect to the interior values of s1.
Eigen::VectorXd grad_D0_squared(const PlateState& s0, const PlateState& s1,
                                const ReducedForms& forms);

struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// phi0(trial) + D0(prev, trial)^2 / (2 tau) and its gradient in the interior values of trial.
ObjectiveValue incremental_objective(double tau, const PlateState& prev, const PlateState& trial,
                                     const ReducedForms& forms, const LoadField& load,
                                     bool allow_unverified = false);

/// Test pair (phi_u, phi_v) given by closed-form derivatives; both must vanish on the
/// boundary, and grad phi_v as well.
struct TestPair {
  std::function<Mat2(double, double)> grad_u;  // (alpha, beta) = d phi_u_alpha / d x_beta
  std::function<double(double, double)> v;
  std::function<Vec2(double, double)> grad_v;
  std::function<Mat2(double, double)> hess_v;
};

/// Tensor-product sine bumps: for modes 1 <= k, l <= max_mode, in-plane pairs
/// sin(k pi x1/L1) sin(l pi x2/L2) e_alpha and out-of-plane sin^2(k pi x1/L1) sin^2(l pi x2/L2).
/// `random_combinations` extra pairs mix these with seeded Gaussian weights.
std::vector<TestPair> sine_test_library(const GridSpec& grid, int max_mode,
                                        int random_combinations = 0, std::uint64_t seed = 1);

struct WeakResidual {
  double r1 = 0.0;
  double r2 = 0.0;
};

/// Max normalized residuals of the membrane and bending weak equations at s_next, with
/// backward-difference rates (s_next - s_prev)/tau. Test derivatives are exact at cell centers.
WeakResidual weak_residual(const PlateState& s_prev, const PlateState& s_next, double tau,
                           const ReducedForms& forms, const LoadField& load,
                           const std::vector<TestPair>& tests);

}  // namespace vk
