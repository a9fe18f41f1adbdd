#pragma once

// Local slope of the plate energy with respect to the dissipation metric.
//
// The slope is sup <grad phi0, d> / |d|_A over test directions d, with
// |d|_A^2 = int Q_D(H(d|v)) over the plate thickness. It is computed from the
// minimizer x* of |x|_A^2 / 2 - <grad phi0, x>, as |x*|_A.

#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "vk/energy2d.hpp"
#include "vk/gradient_flow.hpp"
#include "vk/plate_field.hpp"
#include "vk/tensor_core.hpp"

namespace vk {

enum class SlopePreconditioner { Jacobi, SparseCholesky };

struct CgOptions {
  double rel_tol = 1e-10;
  int max_iters = 0;  // 0 selects 10 * dof
  SlopePreconditioner preconditioner = SlopePreconditioner::Jacobi;
};

struct CgStats {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

/// Matrix-free operator A = H^T W H at a plate state and the right-hand side grad phi0.
class SlopeSystem {
public:
  /// Throws UnsupportedWithLoad if `load` is nonzero.
  static SlopeSystem assemble(const PlateState& state, const ReducedForms& forms,
                              const LoadField& load = {});

  const GridSpec& grid() const { return grid_; }
  const ReducedForms& forms() const { return forms_; }
  const StrainPair& strain() const { return strain_; }
  const Vector& rhs() const { return rhs_; }
  int size() const { return static_cast<int>(rhs_.size()); }

  Vector apply(const Vector& x) const;
  /// Linearized strain H(x|v) of a test direction.
  StrainPair strain_of(const Vector& x) const;
  /// int Q_D(h_mem) + int Q_D(h_bend)/12.
  double energy_norm_squared(const StrainPair& h) const;
  /// Explicit sparse matrix (used for the diagonal and the Cholesky preconditioner).
  Eigen::SparseMatrix<double> matrix() const;

private:
  GridSpec grid_;
  ReducedForms forms_;
  CellDerivatives at_;
  StrainPair strain_;
  Vector rhs_;
};

struct SlopeResult {
  double slope = 0.0;
  /// |C_D^{-1/2}(C_W G + L)| on the plate, with L = C_D H(x*|v) - C_W G.
  double slope_dual_form = 0.0;
  Vector minimizer;
  CgStats cg;
};

/// Preconditioned conjugate gradients on A x = b. Throws SolverFailure with the residual history.
Vector conjugate_gradient(const SlopeSystem& system, const Vector& b, const CgOptions& options,
                          CgStats& stats);

SlopeResult local_slope(const SlopeSystem& system, const CgOptions& options = {});
SlopeResult local_slope(const PlateState& state, const ReducedForms& forms,
                        const LoadField& load = {}, const CgOptions& options = {});

/// <grad phi0, d> / |d|_A. Throws DegenerateDirection when H(d|v) vanishes.
double rayleigh_ratio(const SlopeSystem& system, const Vector& direction);

/// Steps where phi(Y_{n-1}) - phi(Y_n) > slope(Y_{n-1}) d_n + tol; a heuristic check.
std::vector<int> upper_gradient_warnings(const Trajectory& traj, double tol);

}  // namespace vk
