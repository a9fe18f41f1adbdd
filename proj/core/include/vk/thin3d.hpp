#pragma once

// Rescaled 3D energy and dissipation of thin plates S x (-1/2, 1/2) deformed by
//
//   y(x', x3) = (x', h x3) + (h^2 u, h v) - h^2 x3 (grad v, 0) + h^3 x3 d + h^3 x3^2 c e3
//
// with generator fields u, v, c on S and d = -|grad v|^2/2 e3 times an optional
// boundary taper. Derivatives are analytic: F = (grad' y, y_3 / h) and the
// scaled second gradient Z = (y_ab, y_a3 / h, y_33 / h^2).

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vk/energy2d.hpp"
#include "vk/plate_field.hpp"
#include "vk/tensor_core.hpp"

namespace vk {

/// Value and derivatives up to third order of a scalar field on S.
struct Jet2 {
  double f = 0.0;
  Vec2 d1 = Vec2::Zero();
  Mat2 d2 = Mat2::Zero();
  std::array<Mat2, 2> d3{Mat2::Zero(), Mat2::Zero()};  // d3[k](i, j) = d^3 f / dx_k dx_i dx_j
};

using JetFn = std::function<Jet2(double, double)>;

Jet2 zero_jet(double, double);

/// Bicubic interpolant of nodal samples on a grid (natural cubic splines for the
/// derivative data, Hermite patches per cell).
class BicubicSpline {
public:
  BicubicSpline(const GridSpec& grid, const Eigen::MatrixXd& values);
  Jet2 operator()(double x1, double x2) const;

private:
  GridSpec grid_;
  Eigen::MatrixXd f_, fx_, fy_, fxy_;
};

struct Generator {
  std::string name = "zero";
  double l1 = 1.0;
  double l2 = 1.0;
  JetFn u1 = zero_jet;
  JetFn u2 = zero_jet;
  JetFn v = zero_jet;
  JetFn c = zero_jet;          // coefficient of h^3 x3^2 in y3
  double taper_width = 0.0;    // 0 disables the boundary taper of d

  static Generator zero(double l1 = 1.0, double l2 = 1.0);
  /// v = kappa x1^2 / 2, u1 = -kappa^2 x1^3 / 6 (vanishing membrane strain).
  static Generator pure_bend(double kappa, double l1 = 1.0, double l2 = 1.0);
  /// pure_bend plus the in-plane stretch u += a x'.
  static Generator membrane_bend(double kappa, double a, double l1 = 1.0, double l2 = 1.0);
  /// v = amplitude sin(pi x1/L1) sin(pi x2/L2), u = 0.
  static Generator sine(double amplitude, double l1 = 1.0, double l2 = 1.0);
  /// Spline interpolants of the nodal fields of a plate state.
  static Generator from_state(const PlateState& state);
  /// Named preset "zero", "pure_bend", "membrane_bend", "sine" with a parameter list.
  static Generator preset(const std::string& name, const std::vector<double>& params,
                          double l1 = 1.0, double l2 = 1.0);
};

/// d and its derivatives: d[i] jet for i = 0, 1, 2.
std::array<Jet2, 3> default_director(const Generator& gen, double x1, double x2);

struct ThinDeformation {
  Generator gen;
  double h = 0.1;

  ThinDeformation(Generator g, double thickness);

  Vec3 y(double x1, double x2, double x3) const;
  Mat3 scaled_gradient(double x1, double x2, double x3) const;
  Tensor3 scaled_second_gradient(double x1, double x2, double x3) const;
};

struct QuadratureSpec {
  int cells1 = 16;
  int cells2 = 16;
  int points_inplane = 2;  // Gauss points per cell and direction
  int points_x3 = 3;

  void validate() const;
};

struct ThinEnergy {
  double w_part = 0.0;
  double p_part = 0.0;
  double f_part = 0.0;
  double total = 0.0;
};

/// Distance of F to SO(3).
double distance_to_rotations(const Mat3& F);

/// h^-4 int W + h^-(alpha p) int P - h^-1 int f y3. Throws ThicknessTooLarge if the scaled
/// gradient leaves the ball of radius 0.5 around SO(3) at a quadrature point.
ThinEnergy energy_phi_h(const ThinDeformation& def, const MaterialSpec& material,
                        const QuadratureSpec& quad, const ScalarFn& load = {});

/// h^-2 (int D^2(F0, F1))^(1/2). Throws ConfigError for different thicknesses.
double dissipation_Dh(const ThinDeformation& def0, const ThinDeformation& def1,
                      const MaterialSpec& material, const QuadratureSpec& quad);

/// phi_h(def1) + D_h(def0, def1)^2 / (2 tau).
double incremental_objective_3d(double tau, const ThinDeformation& def0,
                                const ThinDeformation& def1, const MaterialSpec& material,
                                const QuadratureSpec& quad, const ScalarFn& load = {});

/// u_h = h^-2 int (y' - x') dx3 and v_h = h^-1 int y3 dx3, integrated exactly in x3.
struct AveragedDisplacement {
  Vec2 u;
  double v;
};
AveragedDisplacement average_displacements(const ThinDeformation& def, double x1, double x2);

struct StrainSample {
  Vec3 point;  // (x1, x2, x3)
  Mat3 g;      // (R^T F - Id) / h^2
};

/// G^h at all quadrature points, with R the polar factor of the x3-averaged scaled gradient.
/// Throws DegenerateRotation when the average has non-positive determinant.
std::vector<StrainSample> strain_Gh(const ThinDeformation& def, const QuadratureSpec& quad);

/// Doubles the in-plane cells until phi_h changes by less than `tol` relative.
QuadratureSpec calibrate_quadrature(const ThinDeformation& def, const MaterialSpec& material,
                                    QuadratureSpec quad, double tol = 1e-8, int max_cells = 512,
                                    const ScalarFn& load = {});

struct GammaRow {
  double h = 0.0;
  ThinEnergy energy;
  double phi0 = 0.0;
  double energy_gap = 0.0;  // |phi_h - phi0| / |phi0| (absolute when phi0 = 0)
  double energy_gap_ratio = 0.0;
  double dh = 0.0;
  double d0 = 0.0;
  double dissipation_gap = 0.0;
  double p_ratio = 0.0;  // p_part(h) / p_part(previous h), 0 on the first row
};

struct GammaReport {
  std::vector<GammaRow> rows;
  QuadratureSpec quad;
  bool has_partner = false;
  bool energy_gaps_monotone = true;
  bool dissipation_gaps_monotone = true;
};

struct GammaOptions {
  QuadratureSpec quad;
  bool calibrate = true;
  int reference_nodes = 129;  // grid used for the 2D reference values
};

/// Energy ladder of `gen`, and when `partner` is set the dissipation ladder between
/// partner (as y0) and gen (as y1). Reference values come from the 2D evaluators.
GammaReport gamma_ladder(const Generator& gen, const std::optional<Generator>& partner,
                         const MaterialSpec& material, const std::vector<double>& h_list,
                         const GammaOptions& options = {});

/// Plate state sampling a generator at the nodes of `grid` (boundary data from the generator).
PlateState sample_generator(const Generator& gen, const GridSpec& grid);

}  // namespace vk
