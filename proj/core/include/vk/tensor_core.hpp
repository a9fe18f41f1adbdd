#pragma once

// 3D material densities, their quadratic forms at the identity, and the
// reduction to 2x2 symmetric strains.
//
// Symmetric matrices are stored in orthonormal Voigt coordinates so that
// Euclidean norms of coordinate vectors equal Frobenius norms:
//   3x3: (E11, E22, E33, sqrt2*E23, sqrt2*E13, sqrt2*E12)
//   2x2: (E11, E22, sqrt2*E12)

#include <array>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Core>

namespace vk {

using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Voigt2 = Eigen::Vector3d;
using Voigt3 = Eigen::Matrix<double, 6, 1>;

/// Third-order tensor Z(i,j,k) = slice[i](j,k); used for second gradients.
struct Tensor3 {
  std::array<Mat3, 3> slice{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};

  double& operator()(int i, int j, int k) { return slice[i](j, k); }
  double operator()(int i, int j, int k) const { return slice[i](j, k); }
  double squared_norm() const;
};

Voigt2 to_voigt(const Mat2& m);
Mat2 from_voigt(const Voigt2& v);
Voigt3 to_voigt(const Mat3& m);
Mat3 from_voigt(const Voigt3& v);

enum class StoredEnergyKind { SimplifiedStVK };
enum class DistanceKind { CauchyGreen };

StoredEnergyKind stored_energy_kind_from_string(const std::string& tag);
DistanceKind distance_kind_from_string(const std::string& tag);
std::string to_string(StoredEnergyKind kind);
std::string to_string(DistanceKind kind);

/// Catalog entry for the densities (W, D, P) plus the scaling exponent alpha.
///
/// W(F) = mu |E|^2 with E = (F^T F - Id)/2, D(F1,F2) = gamma |F1^T F1 - F2^T F2|,
/// P(Z) = c_p |Z|^p. When `cw2`/`cd2` are set the reduced forms are taken
/// verbatim and the 3D densities are only used by thin-film evaluations.
struct MaterialSpec {
  StoredEnergyKind w_kind = StoredEnergyKind::SimplifiedStVK;
  double mu = 1.0;
  DistanceKind d_kind = DistanceKind::CauchyGreen;
  double gamma = 1.0;
  double c_p = 1.0;
  double p = 4.0;
  double alpha = 0.5;
  std::optional<Mat3> cw2;
  std::optional<Mat3> cd2;
  bool allow_nonzero_poisson = false;

  /// Throws ConfigError if a parameter is out of range.
  void validate() const;

  bool operator==(const MaterialSpec&) const = default;
};

double stored_energy(const MaterialSpec& spec, const Mat3& F);
double distance(const MaterialSpec& spec, const Mat3& F1, const Mat3& F2);
double hyper_energy(const MaterialSpec& spec, const Tensor3& Z);
/// dP/dZ = c_p p |Z|^(p-2) Z.
Tensor3 hyper_energy_gradient(const MaterialSpec& spec, const Tensor3& Z);

/// R(F, Fdot) = lim D^2(F + eps Fdot, F) / (2 eps^2), closed form for the catalog distance.
/// Requires det F > 0.
double dissipation_rate(const MaterialSpec& spec, const Mat3& F, const Mat3& Fdot);

/// Quadratic form on 3x3 matrices that only sees the symmetric part.
struct QuadForm3 {
  Mat6 coefficients = Mat6::Zero();

  double operator()(const Mat3& F) const;
  /// Smallest eigenvalue on symmetric matrices (coercivity constant).
  double min_eigenvalue() const;
};

enum class DensityRole { Stored, Dissipation };

/// Analytic second-order expansion at the identity:
/// Stored: Q(F) = d^2 W(Id)[F,F]; Dissipation: Q(F) = 1/2 d^2_{F1} D^2(Id,Id)[F,F].
QuadForm3 quadform3_from_density(const MaterialSpec& spec, DensityRole role);

/// Central-difference Hessian of `f` at `base` (Richardson-refined), assembled
/// by polarization on the symmetric basis. Throws NumericError on non-finite values.
QuadForm3 quadform3_finite_difference(const std::function<double(const Mat3&)>& f,
                                      const Mat3& base = Mat3::Identity(),
                                      double step = 1e-4);

/// Second directional derivative d^2/dt^2 f(base + t dir) at t = 0 by Richardson-refined
/// central differences.
double second_directional_derivative(const std::function<double(const Mat3&)>& f,
                                     const Mat3& base, const Mat3& dir, double step = 1e-4);

/// Result of minimizing a 3D form over e3-stretches a (x) e3 + e3 (x) a.
struct Reduction2d {
  Mat3 c2 = Mat3::Zero();     // reduced tensor on 2D Voigt coordinates
  Mat3 a_map = Mat3::Zero();  // a(G) = a_map * to_voigt(G)
  bool a_min_verified = false;

  Vec3 argmin(const Mat2& G) const { return a_map * to_voigt(G); }
  double value(const Mat2& G) const {
    const Voigt2 g = to_voigt(G);
    return g.dot(c2 * g);
  }
};

/// Exact minimization over a in R^3 via the stationarity system. Throws AssumptionViolation
/// if the minimizer is not identically zero, unless `allow_nonzero_poisson` is set.
Reduction2d reduce_to_2d(const QuadForm3& q3, bool allow_nonzero_poisson = false);

struct SpdRoot {
  Mat3 sqrt;
  Mat3 inv_sqrt;
};

/// Principal square root and its inverse by eigendecomposition.
SpdRoot sqrt_spd(const Mat3& c);

/// The reduced SPD tensors C_W^2, C_D^2 with cached roots of C_D^2.
struct ReducedForms {
  Mat3 cw2 = Mat3::Identity();
  Mat3 cd2 = Mat3::Identity();
  Mat3 sqrt_cd2 = Mat3::Identity();
  Mat3 inv_sqrt_cd2 = Mat3::Identity();
  bool a_min_verified = false;

  static ReducedForms from_material(const MaterialSpec& spec);
  static ReducedForms from_matrices(const Mat3& cw2, const Mat3& cd2);

  double qw(const Voigt2& e) const { return e.dot(cw2 * e); }
  double qd(const Voigt2& e) const { return e.dot(cd2 * e); }
};

}  // namespace vk
