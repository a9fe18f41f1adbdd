#include "vk/tensor_core.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "vk/errors.hpp"

namespace vk {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

// Orthonormal basis of symmetric 3x3 matrices matching the Voigt ordering.
Mat3 sym_basis(int a) {
  Voigt3 e = Voigt3::Zero();
  e(a) = 1.0;
  return from_voigt(e);
}

// Embedding of 2D Voigt coordinates into 3D Voigt coordinates (G -> G*).
Eigen::Matrix<double, 6, 3> planar_embedding() {
  Eigen::Matrix<double, 6, 3> P = Eigen::Matrix<double, 6, 3>::Zero();
  P(0, 0) = 1.0;
  P(1, 1) = 1.0;
  P(5, 2) = 1.0;
  return P;
}

// Voigt coordinates of a (x) e3 + e3 (x) a as a linear map of a.
Eigen::Matrix<double, 6, 3> stretch_embedding() {
  Eigen::Matrix<double, 6, 3> B = Eigen::Matrix<double, 6, 3>::Zero();
  B(4, 0) = kSqrt2;  // E13 = a1
  B(3, 1) = kSqrt2;  // E23 = a2
  B(2, 2) = 2.0;     // E33 = 2 a3
  return B;
}

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError(fmt::format("material.{} must be positive and finite, got {}", name, value));
  }
}

}  // namespace

double Tensor3::squared_norm() const {
  return slice[0].squaredNorm() + slice[1].squaredNorm() + slice[2].squaredNorm();
}

Voigt2 to_voigt(const Mat2& m) {
  return {m(0, 0), m(1, 1), kSqrt2 * 0.5 * (m(0, 1) + m(1, 0))};
}

Mat2 from_voigt(const Voigt2& v) {
  Mat2 m;
  m << v(0), v(2) / kSqrt2, v(2) / kSqrt2, v(1);
  return m;
}

Voigt3 to_voigt(const Mat3& m) {
  Voigt3 v;
  v << m(0, 0), m(1, 1), m(2, 2), kSqrt2 * 0.5 * (m(1, 2) + m(2, 1)),
      kSqrt2 * 0.5 * (m(0, 2) + m(2, 0)), kSqrt2 * 0.5 * (m(0, 1) + m(1, 0));
  return v;
}

Mat3 from_voigt(const Voigt3& v) {
  Mat3 m;
  const double s = 1.0 / kSqrt2;
  m << v(0), s * v(5), s * v(4),  //
      s * v(5), v(1), s * v(3),   //
      s * v(4), s * v(3), v(2);
  return m;
}

StoredEnergyKind stored_energy_kind_from_string(const std::string& tag) {
  if (tag == "stvk_simplified") return StoredEnergyKind::SimplifiedStVK;
  throw ConfigError(fmt::format("unknown stored energy catalog tag '{}'", tag));
}

DistanceKind distance_kind_from_string(const std::string& tag) {
  if (tag == "cauchy_green") return DistanceKind::CauchyGreen;
  throw ConfigError(fmt::format("unknown distance catalog tag '{}'", tag));
}

std::string to_string(StoredEnergyKind kind) {
  switch (kind) {
    case StoredEnergyKind::SimplifiedStVK:
      return "stvk_simplified";
  }
  throw ConfigError("unknown stored energy kind");
}

std::string to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::CauchyGreen:
      return "cauchy_green";
  }
  throw ConfigError("unknown distance kind");
}

void MaterialSpec::validate() const {
  require_positive(mu, "mu");
  require_positive(gamma, "gamma");
  require_positive(c_p, "c_p");
  if (!(p > 3.0)) throw ConfigError(fmt::format("material.p must exceed 3, got {}", p));
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError(fmt::format("material.alpha must lie in (0,1), got {}", alpha));
  }
}

double stored_energy(const MaterialSpec& spec, const Mat3& F) {
  switch (spec.w_kind) {
    case StoredEnergyKind::SimplifiedStVK: {
      const Mat3 E = 0.5 * (F.transpose() * F - Mat3::Identity());
      return spec.mu * E.squaredNorm();
    }
  }
  throw ConfigError("unknown stored energy kind");
}

double distance(const MaterialSpec& spec, const Mat3& F1, const Mat3& F2) {
  switch (spec.d_kind) {
    case DistanceKind::CauchyGreen:
      return spec.gamma * (F1.transpose() * F1 - F2.transpose() * F2).norm();
  }
  throw ConfigError("unknown distance kind");
}

double hyper_energy(const MaterialSpec& spec, const Tensor3& Z) {
  return spec.c_p * std::pow(Z.squared_norm(), 0.5 * spec.p);
}

Tensor3 hyper_energy_gradient(const MaterialSpec& spec, const Tensor3& Z) {
  const double n2 = Z.squared_norm();
  const double factor = n2 > 0.0 ? spec.c_p * spec.p * std::pow(n2, 0.5 * (spec.p - 2.0)) : 0.0;
  Tensor3 G;
  for (int i = 0; i < 3; ++i) G.slice[i] = factor * Z.slice[i];
  return G;
}

double dissipation_rate(const MaterialSpec& spec, const Mat3& F, const Mat3& Fdot) {
  if (!(F.determinant() > 0.0)) {
    throw PreconditionError("dissipation_rate requires det F > 0");
  }
  switch (spec.d_kind) {
    case DistanceKind::CauchyGreen: {
      const Mat3 rate = F.transpose() * Fdot + Fdot.transpose() * F;
      return 0.5 * spec.gamma * spec.gamma * rate.squaredNorm();
    }
  }
  throw ConfigError("unknown distance kind");
}

double QuadForm3::operator()(const Mat3& F) const {
  const Voigt3 e = to_voigt(F);
  return e.dot(coefficients * e);
}

double QuadForm3::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Mat6> solver(coefficients, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

QuadForm3 quadform3_from_density(const MaterialSpec& spec, DensityRole role) {
  QuadForm3 q;
  switch (role) {
    case DensityRole::Stored:
      // W(Id + tF) = mu |t sym F + t^2 F^T F / 2|^2
      q.coefficients = 2.0 * spec.mu * Mat6::Identity();
      break;
    case DensityRole::Dissipation:
      // D^2(Id + tF, Id) = gamma^2 |2t sym F + t^2 F^T F|^2
      q.coefficients = 4.0 * spec.gamma * spec.gamma * Mat6::Identity();
      break;
  }
  return q;
}

double second_directional_derivative(const std::function<double(const Mat3&)>& f,
                                     const Mat3& base, const Mat3& dir, double step) {
  const double f0 = f(base);
  auto central = [&](double h) {
    const double fp = f(base + h * dir);
    const double fm = f(base - h * dir);
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(f0)) {
      throw NumericError("non-finite density value while differencing");
    }
    return (fp - 2.0 * f0 + fm) / (h * h);
  };
  const double coarse = central(step);
  const double fine = central(0.5 * step);
  return (4.0 * fine - coarse) / 3.0;
}

QuadForm3 quadform3_finite_difference(const std::function<double(const Mat3&)>& f,
                                      const Mat3& base, double step) {
  QuadForm3 q;
  std::array<double, 6> diag{};
  for (int a = 0; a < 6; ++a) {
    diag[a] = second_directional_derivative(f, base, sym_basis(a), step);
    q.coefficients(a, a) = diag[a];
  }
  for (int a = 0; a < 6; ++a) {
    for (int b = a + 1; b < 6; ++b) {
      const double plus = second_directional_derivative(f, base, sym_basis(a) + sym_basis(b), step);
      const double minus =
          second_directional_derivative(f, base, sym_basis(a) - sym_basis(b), step);
      const double cab = 0.25 * (plus - minus);
      q.coefficients(a, b) = cab;
      q.coefficients(b, a) = cab;
    }
  }
  return q;
}

Reduction2d reduce_to_2d(const QuadForm3& q3, bool allow_nonzero_poisson) {
  const Eigen::Matrix<double, 6, 3> P = planar_embedding();
  const Eigen::Matrix<double, 6, 3> B = stretch_embedding();
  const Mat6& C = q3.coefficients;

  const Mat3 BtCB = B.transpose() * C * B;
  const Mat3 BtCP = B.transpose() * C * P;
  Eigen::LLT<Mat3> llt(BtCB);
  if (llt.info() != Eigen::Success) {
    throw PreconditionError("reduce_to_2d: form is not positive definite on e3-stretches");
  }

  Reduction2d r;
  r.a_map = -llt.solve(BtCP);
  const Eigen::Matrix<double, 6, 3> M = P + B * r.a_map;
  r.c2 = M.transpose() * C * M;
  r.c2 = 0.5 * (r.c2 + r.c2.transpose()).eval();

  const double scale = C.cwiseAbs().maxCoeff();
  const double tol = 1e-12 * (scale > 0.0 ? scale : 1.0);
  double worst = 0.0;
  int worst_col = 0;
  for (int k = 0; k < 3; ++k) {
    const double n = r.a_map.col(k).cwiseAbs().maxCoeff();
    if (n > worst) {
      worst = n;
      worst_col = k;
    }
  }
  r.a_min_verified = worst <= tol;
  if (!r.a_min_verified && !allow_nonzero_poisson) {
    const Vec3 a = r.a_map.col(worst_col);
    throw AssumptionViolation(
        fmt::format("e3-stretch minimizer is nonzero: a = ({:.6g}, {:.6g}, {:.6g}) for Voigt "
                    "basis direction {}",
                    a(0), a(1), a(2), worst_col),
        a);
  }
  return r;
}

SpdRoot sqrt_spd(const Mat3& c) {
  const double asym = (c - c.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff())) {
    throw PreconditionError("sqrt_spd: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(0.5 * (c + c.transpose()));
  const Vec3 lambda = solver.eigenvalues();
  const double lmax = lambda.maxCoeff();
  if (!(lambda.minCoeff() > 1e-14 * lmax) || !(lmax > 0.0)) {
    throw SingularityError(
        fmt::format("sqrt_spd: eigenvalue {:.3e} is not positive relative to {:.3e}",
                    lambda.minCoeff(), lmax));
  }
  const Mat3& V = solver.eigenvectors();
  SpdRoot root;
  root.sqrt = V * lambda.cwiseSqrt().asDiagonal() * V.transpose();
  root.inv_sqrt = V * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  return root;
}

ReducedForms ReducedForms::from_matrices(const Mat3& cw2, const Mat3& cd2) {
  ReducedForms forms;
  forms.cw2 = cw2;
  forms.cd2 = cd2;
  // Throws for non-SPD input; the roots of C_W^2 are not needed downstream.
  (void)sqrt_spd(cw2);
  const SpdRoot root = sqrt_spd(cd2);
  forms.sqrt_cd2 = root.sqrt;
  forms.inv_sqrt_cd2 = root.inv_sqrt;
  forms.a_min_verified = true;
  return forms;
}

ReducedForms ReducedForms::from_material(const MaterialSpec& spec) {
  spec.validate();
  ReducedForms forms;
  bool verified = true;
  if (spec.cw2) {
    forms.cw2 = *spec.cw2;
  } else {
    const Reduction2d r = reduce_to_2d(quadform3_from_density(spec, DensityRole::Stored),
                                       spec.allow_nonzero_poisson);
    forms.cw2 = r.c2;
    verified = verified && r.a_min_verified;
  }
  if (spec.cd2) {
    forms.cd2 = *spec.cd2;
  } else {
    const Reduction2d r = reduce_to_2d(quadform3_from_density(spec, DensityRole::Dissipation),
                                       spec.allow_nonzero_poisson);
    forms.cd2 = r.c2;
    verified = verified && r.a_min_verified;
  }
  ReducedForms checked = from_matrices(forms.cw2, forms.cd2);
  checked.a_min_verified = verified;
  return checked;
}

}  // namespace vk
