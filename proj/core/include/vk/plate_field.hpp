#pragma once

// Discrete plate states on a rectangular node grid.
//
// Fields live at nodes (i, j), i along x1, j along x2. Strains live at cell
// centers; cell (c1, c2) has corners (c1..c1+1, c2..c2+1). The out-of-plane
// field v carries one ghost layer so that clamped gradients can be imposed
// with centered differences.
//
// Interior degrees of freedom are packed as [u1 | u2 | v], each block ordered
// with i fastest over interior nodes 1..n-2.

#include <functional>
#include <memory>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "vk/tensor_core.hpp"

namespace vk {

struct GridSpec {
  double l1 = 1.0;
  double l2 = 1.0;
  int n1 = 0;
  int n2 = 0;

  /// Throws ConfigError for non-positive lengths or fewer than 4 nodes per direction.
  static GridSpec make(double l1, double l2, int n1, int n2);

  double dx1() const { return l1 / (n1 - 1); }
  double dx2() const { return l2 / (n2 - 1); }
  double cell_area() const { return dx1() * dx2(); }
  int cells1() const { return n1 - 1; }
  int cells2() const { return n2 - 1; }
  int num_cells() const { return cells1() * cells2(); }
  int num_interior() const { return (n1 - 2) * (n2 - 2); }
  int num_dofs() const { return 3 * num_interior(); }
  int cell_index(int c1, int c2) const { return c1 + cells1() * c2; }
  int interior_index(int i, int j) const { return (i - 1) + (n1 - 2) * (j - 1); }
  Vec2 node(int i, int j) const { return {i * dx1(), j * dx2()}; }
  Vec2 cell_center(int c1, int c2) const { return {(c1 + 0.5) * dx1(), (c2 + 0.5) * dx2()}; }

  bool operator==(const GridSpec&) const = default;
};

using ScalarFn = std::function<double(double, double)>;

/// Clamped boundary values sampled at every node; only boundary entries are used.
struct BoundaryData {
  Eigen::MatrixXd u1_hat;
  Eigen::MatrixXd u2_hat;
  Eigen::MatrixXd v_hat;
  Eigen::MatrixXd g1_hat;  // d v_hat / dx1
  Eigen::MatrixXd g2_hat;  // d v_hat / dx2

  static BoundaryData zero(const GridSpec& grid);
  static BoundaryData from_functions(const GridSpec& grid, const ScalarFn& u1, const ScalarFn& u2,
                                     const ScalarFn& v, const ScalarFn& g1, const ScalarFn& g2);

  bool operator==(const BoundaryData&) const = default;
};

struct PlateState {
  GridSpec grid;
  std::shared_ptr<const BoundaryData> bc;
  Eigen::MatrixXd u1;  // n1 x n2
  Eigen::MatrixXd u2;  // n1 x n2
  Eigen::MatrixXd v;   // (n1+2) x (n2+2), node (i, j) stored at (i+1, j+1)

  double vn(int i, int j) const { return v(i + 1, j + 1); }
  double& vn(int i, int j) { return v(i + 1, j + 1); }
  /// v at nodes without the ghost layer.
  Eigen::MatrixXd v_nodes() const { return v.block(1, 1, grid.n1, grid.n2); }
};

/// Boundary rows are overwritten with bc values and the ghost layer is filled from grad_v_hat.
PlateState make_state(const GridSpec& grid, std::shared_ptr<const BoundaryData> bc,
                      const Eigen::MatrixXd& u1, const Eigen::MatrixXd& u2,
                      const Eigen::MatrixXd& v);

/// Zero state on a zero boundary (the test-field space).
PlateState zero_state(const GridSpec& grid);

/// Re-imposes boundary values and refills the ghost layer in place.
void enforce_boundary(PlateState& state);

Eigen::VectorXd pack_interior(const PlateState& state);
/// Copy of `base` with interior values replaced by `x` (ghosts refilled).
PlateState with_interior(const PlateState& base, const Eigen::VectorXd& x);

bool all_finite(const PlateState& state);

/// Cell-centered first derivatives of u1, u2, v (rows d/dx1, d/dx2) and the
/// Hessian of v (rows v11, v22, v12).
struct CellDerivatives {
  Eigen::Matrix2Xd du1;
  Eigen::Matrix2Xd du2;
  Eigen::Matrix2Xd dv;
  Eigen::Matrix3Xd hess;

  static CellDerivatives zero(const GridSpec& grid);
};

CellDerivatives cell_derivatives(const PlateState& state);
/// Derivatives of the test field with interior values `x`, zero boundary and mirrored ghosts.
CellDerivatives test_derivatives(const GridSpec& grid, const Eigen::VectorXd& x);
/// Transpose of test_derivatives: maps cell cotangents to interior degrees of freedom.
Eigen::VectorXd derivatives_adjoint(const GridSpec& grid, const CellDerivatives& cot);

/// Membrane (g0) and bending (g1) strains in Voigt coordinates, one column per cell.
struct StrainPair {
  Eigen::Matrix3Xd g0;
  Eigen::Matrix3Xd g1;

  static StrainPair zero(const GridSpec& grid);
};

/// G0 = sym grad u + grad v (x) grad v / 2.
Eigen::Matrix3Xd membrane_strain(const CellDerivatives& d);
Eigen::Matrix3Xd membrane_strain(const PlateState& state);
/// G1 = -Hess v.
Eigen::Matrix3Xd bending_strain(const CellDerivatives& d);
Eigen::Matrix3Xd bending_strain(const PlateState& state);
StrainPair strains(const CellDerivatives& d);
StrainPair strains(const PlateState& state);

/// Linearized strain H(du, dv | v): membrane e(du) + sym(grad dv (x) grad v), bending -Hess dv.
StrainPair h_apply(const CellDerivatives& dir, const CellDerivatives& at);
/// Adjoint of h_apply in the direction argument, as cell cotangents.
CellDerivatives h_adjoint(const StrainPair& cot, const CellDerivatives& at);

/// Checked version on states: `direction` must vanish on the boundary with mirrored ghosts.
StrainPair h_operator(const PlateState& direction, const PlateState& at_state);

/// Max-norm defect of G(s1) - G(s0) = H(s1 - s0 | v1) - (grad v1 - grad v0)^(x)2 / 2.
double strain_difference_identity_check(const PlateState& s0, const PlateState& s1);

/// Sparse matrix of the linearized strain at `at` on interior degrees of freedom.
/// Rows are 6 per cell: membrane Voigt (3) then bending Voigt (3).
Eigen::SparseMatrix<double> h_matrix(const GridSpec& grid, const CellDerivatives& at);

/// Throws GridMismatch unless both states use the same grid.
void require_same_grid(const PlateState& a, const PlateState& b);

}  // namespace vk
