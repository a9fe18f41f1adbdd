#include "vk/thin3d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "vk/errors.hpp"
#include "vk/quadrature.hpp"
#include "vk/summation.hpp"

namespace vk {

namespace {

// Quintic smoothstep and its first two derivatives, clamped to [0, 1].
std::array<double, 3> smoothstep(double t) {
  if (t <= 0.0) return {0.0, 0.0, 0.0};
  if (t >= 1.0) return {1.0, 0.0, 0.0};
  const double t2 = t * t;
  return {t2 * t * (10.0 - 15.0 * t + 6.0 * t2), 30.0 * t2 * (1.0 - t) * (1.0 - t),
          60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)};
}

// A(x) = s(x/w) s((L-x)/w) with first and second derivatives.
std::array<double, 3> taper_1d(double x, double L, double w) {
  const auto a = smoothstep(x / w);
  const auto b = smoothstep((L - x) / w);
  const double a1 = a[1] / w, a2 = a[2] / (w * w);
  const double b1 = -b[1] / w, b2 = b[2] / (w * w);
  return {a[0] * b[0], a1 * b[0] + a[0] * b1, a2 * b[0] + 2.0 * a1 * b1 + a[0] * b2};
}

// Natural cubic spline slopes at equally spaced samples.
Eigen::VectorXd spline_slopes(const Eigen::VectorXd& f, double h) {
  const int n = static_cast<int>(f.size());
  Eigen::VectorXd M = Eigen::VectorXd::Zero(n);
  if (n > 2) {
    const int m = n - 2;
    Eigen::VectorXd diag = Eigen::VectorXd::Constant(m, 4.0);
    Eigen::VectorXd rhs(m);
    for (int k = 0; k < m; ++k) rhs(k) = 6.0 * (f(k + 2) - 2.0 * f(k + 1) + f(k)) / (h * h);
    for (int k = 1; k < m; ++k) {
      const double w = 1.0 / diag(k - 1);
      diag(k) -= w;
      rhs(k) -= w * rhs(k - 1);
    }
    Eigen::VectorXd sol(m);
    sol(m - 1) = rhs(m - 1) / diag(m - 1);
    for (int k = m - 2; k >= 0; --k) sol(k) = (rhs(k) - sol(k + 1)) / diag(k);
    M.segment(1, m) = sol;
  }
  Eigen::VectorXd d(n);
  for (int k = 0; k < n - 1; ++k) {
    d(k) = (f(k + 1) - f(k)) / h - h * (2.0 * M(k) + M(k + 1)) / 6.0;
  }
  d(n - 1) = (f(n - 1) - f(n - 2)) / h + h * (M(n - 2) + 2.0 * M(n - 1)) / 6.0;
  return d;
}

// Cubic Hermite basis functions and derivatives 0..3 at t.
using Basis = std::array<std::array<double, 4>, 4>;  // [h00, h10, h01, h11][derivative]
Basis hermite_basis(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {{{2 * t3 - 3 * t2 + 1, 6 * t2 - 6 * t, 12 * t - 6, 12},
           {t3 - 2 * t2 + t, 3 * t2 - 4 * t + 1, 6 * t - 4, 6},
           {-2 * t3 + 3 * t2, -6 * t2 + 6 * t, -12 * t + 6, -12},
           {t3 - t2, 3 * t2 - 2 * t, 6 * t - 2, 6}}};
}

Jet2 polynomial_jet(double f, Vec2 d1, Mat2 d2) {
  Jet2 j;
  j.f = f;
  j.d1 = d1;
  j.d2 = d2;
  return j;
}

struct Sample {
  Jet2 u1, u2, v, c;
  std::array<Jet2, 3> d;
};

Sample sample(const Generator& g, double x1, double x2) {
  Sample s{g.u1(x1, x2), g.u2(x1, x2), g.v(x1, x2), g.c(x1, x2), {}};
  s.d = default_director(g, x1, x2);
  return s;
}

Mat3 gradient_from(const Sample& s, double h, double x3) {
  const double h2 = h * h, h3 = h2 * h;
  const std::array<const Jet2*, 2> u{&s.u1, &s.u2};
  Mat3 F;
  for (int i = 0; i < 2; ++i) {
    for (int a = 0; a < 2; ++a) {
      F(i, a) = (i == a ? 1.0 : 0.0) + h2 * u[i]->d1(a) - h2 * x3 * s.v.d2(i, a) +
                h3 * x3 * s.d[i].d1(a);
    }
    F(i, 2) = -h * s.v.d1(i) + h2 * s.d[i].f;
  }
  for (int a = 0; a < 2; ++a) {
    F(2, a) = h * s.v.d1(a) + h3 * x3 * s.d[2].d1(a) + h3 * x3 * x3 * s.c.d1(a);
  }
  F(2, 2) = 1.0 + h2 * s.d[2].f + 2.0 * h2 * x3 * s.c.f;
  return F;
}

Tensor3 second_gradient_from(const Sample& s, double h, double x3) {
  const double h2 = h * h, h3 = h2 * h;
  const std::array<const Jet2*, 2> u{&s.u1, &s.u2};
  Tensor3 Z;
  for (int i = 0; i < 2; ++i) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        Z(i, a, b) = h2 * u[i]->d2(a, b) - h2 * x3 * s.v.d3[i](a, b) + h3 * x3 * s.d[i].d2(a, b);
      }
      const double z = -h * s.v.d2(i, a) + h2 * s.d[i].d1(a);
      Z(i, a, 2) = z;
      Z(i, 2, a) = z;
    }
    Z(i, 2, 2) = 0.0;
  }
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      Z(2, a, b) = h * s.v.d2(a, b) + h3 * x3 * s.d[2].d2(a, b) + h3 * x3 * x3 * s.c.d2(a, b);
    }
    const double z = h2 * s.d[2].d1(a) + 2.0 * h2 * x3 * s.c.d1(a);
    Z(2, a, 2) = z;
    Z(2, 2, a) = z;
  }
  Z(2, 2, 2) = 2.0 * h * s.c.f;
  return Z;
}

struct PlanarPoint {
  double x1, x2, weight;
};

std::vector<PlanarPoint> planar_points(const QuadratureSpec& q, double l1, double l2) {
  const QuadratureRule rule = gauss_legendre(q.points_inplane, 0.0, 1.0);
  const double w1 = l1 / q.cells1, w2 = l2 / q.cells2;
  std::vector<PlanarPoint> pts;
  pts.reserve(static_cast<std::size_t>(q.cells1) * q.cells2 * rule.nodes.size() *
              rule.nodes.size());
  for (int c2 = 0; c2 < q.cells2; ++c2) {
    for (int c1 = 0; c1 < q.cells1; ++c1) {
      for (std::size_t b = 0; b < rule.nodes.size(); ++b) {
        for (std::size_t a = 0; a < rule.nodes.size(); ++a) {
          pts.push_back({(c1 + rule.nodes[a]) * w1, (c2 + rule.nodes[b]) * w2,
                         rule.weights[a] * rule.weights[b] * w1 * w2});
        }
      }
    }
  }
  return pts;
}

Generator pure_bend_fields(Generator g, double kappa) {
  const double k = kappa;
  g.v = [k](double x1, double) {
    Jet2 j = polynomial_jet(0.5 * k * x1 * x1, Vec2(k * x1, 0.0), Mat2::Zero());
    j.d2(0, 0) = k;
    return j;
  };
  g.u1 = [k](double x1, double) {
    Jet2 j = polynomial_jet(-k * k * x1 * x1 * x1 / 6.0, Vec2(-0.5 * k * k * x1 * x1, 0.0),
                            Mat2::Zero());
    j.d2(0, 0) = -k * k * x1;
    j.d3[0](0, 0) = -k * k;
    return j;
  };
  return g;
}

void require_same_h(const ThinDeformation& a, const ThinDeformation& b) {
  if (a.h != b.h) {
    throw ConfigError(fmt::format("deformations have different thickness ({} vs {})", a.h, b.h));
  }
}

}  // namespace

Jet2 zero_jet(double, double) { return Jet2{}; }

BicubicSpline::BicubicSpline(const GridSpec& grid, const Eigen::MatrixXd& values)
    : grid_(grid), f_(values) {
  if (values.rows() != grid.n1 || values.cols() != grid.n2) {
    throw ConfigError(fmt::format("spline samples have shape {}x{}, grid expects {}x{}",
                                  values.rows(), values.cols(), grid.n1, grid.n2));
  }
  fx_.resize(grid.n1, grid.n2);
  fy_.resize(grid.n1, grid.n2);
  fxy_.resize(grid.n1, grid.n2);
  for (int j = 0; j < grid.n2; ++j) fx_.col(j) = spline_slopes(f_.col(j), grid.dx1());
  for (int i = 0; i < grid.n1; ++i) {
    fy_.row(i) = spline_slopes(f_.row(i).transpose(), grid.dx2()).transpose();
    fxy_.row(i) = spline_slopes(fx_.row(i).transpose(), grid.dx2()).transpose();
  }
}

Jet2 BicubicSpline::operator()(double x1, double x2) const {
  const double hx = grid_.dx1(), hy = grid_.dx2();
  const int i = std::clamp(static_cast<int>(std::floor(x1 / hx)), 0, grid_.n1 - 2);
  const int j = std::clamp(static_cast<int>(std::floor(x2 / hy)), 0, grid_.n2 - 2);
  const Basis bx = hermite_basis(x1 / hx - i);
  const Basis by = hermite_basis(x2 / hy - j);
  // d[nx][ny] accumulates d^(nx+ny) f / dx^nx dy^ny.
  double d[4][4] = {};
  for (int b = 0; b < 2; ++b) {
    for (int a = 0; a < 2; ++a) {
      const int ia = i + a, jb = j + b;
      const double coef[4] = {f_(ia, jb), hx * fx_(ia, jb), hy * fy_(ia, jb),
                              hx * hy * fxy_(ia, jb)};
      const int val_x = a == 0 ? 0 : 2, slope_x = a == 0 ? 1 : 3;
      const int val_y = b == 0 ? 0 : 2, slope_y = b == 0 ? 1 : 3;
      const int kx[4] = {val_x, slope_x, val_x, slope_x};
      const int ky[4] = {val_y, val_y, slope_y, slope_y};
      for (int q = 0; q < 4; ++q) {
        for (int nx = 0; nx < 4; ++nx) {
          for (int ny = 0; nx + ny < 4; ++ny) {
            d[nx][ny] += coef[q] * bx[kx[q]][nx] * by[ky[q]][ny];
          }
        }
      }
    }
  }
  for (int nx = 0; nx < 4; ++nx) {
    for (int ny = 0; nx + ny < 4; ++ny) d[nx][ny] /= std::pow(hx, nx) * std::pow(hy, ny);
  }
  Jet2 out;
  out.f = d[0][0];
  out.d1 << d[1][0], d[0][1];
  out.d2 << d[2][0], d[1][1], d[1][1], d[0][2];
  for (int k = 0; k < 2; ++k) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const int nx = (k == 0) + (a == 0) + (b == 0);
        out.d3[k](a, b) = d[nx][3 - nx];
      }
    }
  }
  return out;
}

Generator Generator::zero(double l1, double l2) {
  Generator g;
  g.l1 = l1;
  g.l2 = l2;
  return g;
}

Generator Generator::pure_bend(double kappa, double l1, double l2) {
  Generator g = pure_bend_fields(zero(l1, l2), kappa);
  g.name = "pure_bend";
  return g;
}

Generator Generator::membrane_bend(double kappa, double a, double l1, double l2) {
  Generator g = pure_bend(kappa, l1, l2);
  g.name = "membrane_bend";
  const JetFn bend_u1 = g.u1;
  g.u1 = [bend_u1, a](double x1, double x2) {
    Jet2 j = bend_u1(x1, x2);
    j.f += a * x1;
    j.d1(0) += a;
    return j;
  };
  g.u2 = [a](double, double x2) { return polynomial_jet(a * x2, Vec2(0.0, a), Mat2::Zero()); };
  return g;
}

Generator Generator::sine(double amplitude, double l1, double l2) {
  Generator g = zero(l1, l2);
  g.name = "sine";
  const double p = std::numbers::pi / l1, q = std::numbers::pi / l2, A = amplitude;
  g.v = [=](double x1, double x2) {
    const double s1 = std::sin(p * x1), c1 = std::cos(p * x1);
    const double s2 = std::sin(q * x2), c2 = std::cos(q * x2);
    Jet2 j;
    j.f = A * s1 * s2;
    j.d1 << A * p * c1 * s2, A * q * s1 * c2;
    j.d2 << -A * p * p * s1 * s2, A * p * q * c1 * c2, A * p * q * c1 * c2, -A * q * q * s1 * s2;
    // d3[k](a, b): derivative counts along x1 decide the pattern.
    const double d111 = -A * p * p * p * c1 * s2, d112 = -A * p * p * q * s1 * c2;
    const double d122 = -A * p * q * q * c1 * s2, d222 = -A * q * q * q * s1 * c2;
    j.d3[0] << d111, d112, d112, d122;
    j.d3[1] << d112, d122, d122, d222;
    return j;
  };
  return g;
}

Generator Generator::from_state(const PlateState& state) {
  Generator g = zero(state.grid.l1, state.grid.l2);
  g.name = "spline";
  auto s1 = std::make_shared<const BicubicSpline>(state.grid, state.u1);
  auto s2 = std::make_shared<const BicubicSpline>(state.grid, state.u2);
  auto sv = std::make_shared<const BicubicSpline>(state.grid, state.v_nodes());
  g.u1 = [s1](double x1, double x2) { return (*s1)(x1, x2); };
  g.u2 = [s2](double x1, double x2) { return (*s2)(x1, x2); };
  g.v = [sv](double x1, double x2) { return (*sv)(x1, x2); };
  return g;
}

Generator Generator::preset(const std::string& name, const std::vector<double>& params,
                            double l1, double l2) {
  auto param = [&](std::size_t k, double fallback) {
    return k < params.size() ? params[k] : fallback;
  };
  std::size_t expected = 0;
  Generator g;
  if (name == "zero") {
    g = zero(l1, l2);
  } else if (name == "pure_bend") {
    expected = 1;
    g = pure_bend(param(0, 1.0), l1, l2);
  } else if (name == "membrane_bend") {
    expected = 2;
    g = membrane_bend(param(0, 1.0), param(1, 0.1), l1, l2);
  } else if (name == "sine") {
    expected = 1;
    g = sine(param(0, 1.0), l1, l2);
  } else {
    throw ConfigError(fmt::format("unknown generator preset '{}'", name));
  }
  if (params.size() > expected) {
    throw ConfigError(fmt::format("generator '{}' takes at most {} parameters, got {}", name,
                                  expected, params.size()));
  }
  return g;
}

std::array<Jet2, 3> default_director(const Generator& gen, double x1, double x2) {
  const Jet2 v = gen.v(x1, x2);
  // q = -|grad v|^2 / 2
  double q = -0.5 * v.d1.squaredNorm();
  Vec2 dq = -(v.d2 * v.d1);
  Mat2 ddq;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      double s = 0.0;
      for (int k = 0; k < 2; ++k) s += v.d2(k, a) * v.d2(k, b) + v.d1(k) * v.d3[k](a, b);
      ddq(a, b) = -s;
    }
  }
  if (gen.taper_width > 0.0) {
    const auto A = taper_1d(x1, gen.l1, gen.taper_width);
    const auto B = taper_1d(x2, gen.l2, gen.taper_width);
    const double T = A[0] * B[0];
    const Vec2 dT(A[1] * B[0], A[0] * B[1]);
    Mat2 ddT;
    ddT << A[2] * B[0], A[1] * B[1], A[1] * B[1], A[0] * B[2];
    const Mat2 hess = ddq * T + dq * dT.transpose() + dT * dq.transpose() + q * ddT;
    dq = dq * T + q * dT;
    q *= T;
    return {Jet2{}, Jet2{}, polynomial_jet(q, dq, hess)};
  }
  return {Jet2{}, Jet2{}, polynomial_jet(q, dq, ddq)};
}

ThinDeformation::ThinDeformation(Generator g, double thickness) : gen(std::move(g)), h(thickness) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ConfigError(fmt::format("thickness must be positive, got {}", h));
  }
}

Vec3 ThinDeformation::y(double x1, double x2, double x3) const {
  const Sample s = sample(gen, x1, x2);
  const double h2 = h * h, h3 = h2 * h;
  return {x1 + h2 * s.u1.f - h2 * x3 * s.v.d1(0) + h3 * x3 * s.d[0].f,
          x2 + h2 * s.u2.f - h2 * x3 * s.v.d1(1) + h3 * x3 * s.d[1].f,
          h * x3 + h * s.v.f + h3 * x3 * s.d[2].f + h3 * x3 * x3 * s.c.f};
}

Mat3 ThinDeformation::scaled_gradient(double x1, double x2, double x3) const {
  return gradient_from(sample(gen, x1, x2), h, x3);
}

Tensor3 ThinDeformation::scaled_second_gradient(double x1, double x2, double x3) const {
  return second_gradient_from(sample(gen, x1, x2), h, x3);
}

void QuadratureSpec::validate() const {
  if (cells1 < 1 || cells2 < 1 || points_inplane < 1 || points_x3 < 1) {
    throw ConfigError("quadrature needs at least one cell and one point per direction");
  }
}

double distance_to_rotations(const Mat3& F) {
  Eigen::JacobiSVD<Mat3> svd(F);
  const Vec3 s = svd.singularValues();
  if (F.determinant() > 0.0) return (s - Vec3::Ones()).norm();
  return std::sqrt((s(0) - 1) * (s(0) - 1) + (s(1) - 1) * (s(1) - 1) + (s(2) + 1) * (s(2) + 1));
}

ThinEnergy energy_phi_h(const ThinDeformation& def, const MaterialSpec& material,
                        const QuadratureSpec& quad, const ScalarFn& load) {
  material.validate();
  quad.validate();
  const double h = def.h;
  const std::vector<PlanarPoint> pts = planar_points(quad, def.gen.l1, def.gen.l2);
  const QuadratureRule rx3 = gauss_legendre(quad.points_x3, -0.5, 0.5);
  Eigen::VectorXd w(pts.size()), p(pts.size()), f(pts.size());
  double worst = 0.0;
  Vec3 worst_at = Vec3::Zero();
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const PlanarPoint& pt = pts[k];
    const Sample s = sample(def.gen, pt.x1, pt.x2);
    const double fx = load ? load(pt.x1, pt.x2) : 0.0;
    double wk = 0.0, pk = 0.0, fk = 0.0;
    for (std::size_t q = 0; q < rx3.nodes.size(); ++q) {
      const double x3 = rx3.nodes[q];
      const Mat3 F = gradient_from(s, h, x3);
      const double dist = distance_to_rotations(F);
      if (dist > worst) {
        worst = dist;
        worst_at = Vec3(pt.x1, pt.x2, x3);
      }
      wk += rx3.weights[q] * stored_energy(material, F);
      pk += rx3.weights[q] * hyper_energy(material, second_gradient_from(s, h, x3));
      if (fx != 0.0) {
        const double y3 = h * x3 + h * s.v.f + h * h * h * (x3 * s.d[2].f + x3 * x3 * s.c.f);
        fk += rx3.weights[q] * fx * y3;
      }
    }
    w(static_cast<Eigen::Index>(k)) = pt.weight * wk;
    p(static_cast<Eigen::Index>(k)) = pt.weight * pk;
    f(static_cast<Eigen::Index>(k)) = pt.weight * fk;
  }
  if (!(worst < 0.5)) {
    throw ThicknessTooLarge(fmt::format(
        "scaled gradient is {:.3g} away from SO(3) at ({:.6g}, {:.6g}, {:.6g}) for h = {}", worst,
        worst_at(0), worst_at(1), worst_at(2), h));
  }
  ThinEnergy e;
  e.w_part = pairwise_sum(w) / std::pow(h, 4);
  e.p_part = pairwise_sum(p) / std::pow(h, material.alpha * material.p);
  e.f_part = pairwise_sum(f) / h;
  e.total = e.w_part + e.p_part - e.f_part;
  return e;
}

double dissipation_Dh(const ThinDeformation& def0, const ThinDeformation& def1,
                      const MaterialSpec& material, const QuadratureSpec& quad) {
  require_same_h(def0, def1);
  material.validate();
  quad.validate();
  const double h = def0.h;
  const std::vector<PlanarPoint> pts = planar_points(quad, def1.gen.l1, def1.gen.l2);
  const QuadratureRule rx3 = gauss_legendre(quad.points_x3, -0.5, 0.5);
  Eigen::VectorXd acc(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const PlanarPoint& pt = pts[k];
    const Sample s0 = sample(def0.gen, pt.x1, pt.x2);
    const Sample s1 = sample(def1.gen, pt.x1, pt.x2);
    double sum = 0.0;
    for (std::size_t q = 0; q < rx3.nodes.size(); ++q) {
      const double x3 = rx3.nodes[q];
      const double d = distance(material, gradient_from(s0, h, x3), gradient_from(s1, h, x3));
      sum += rx3.weights[q] * d * d;
    }
    acc(static_cast<Eigen::Index>(k)) = pt.weight * sum;
  }
  return std::sqrt(std::max(0.0, pairwise_sum(acc))) / (h * h);
}

double incremental_objective_3d(double tau, const ThinDeformation& def0,
                                const ThinDeformation& def1, const MaterialSpec& material,
                                const QuadratureSpec& quad, const ScalarFn& load) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError(fmt::format("time step must be positive, got {}", tau));
  }
  const double d = dissipation_Dh(def0, def1, material, quad);
  return energy_phi_h(def1, material, quad, load).total + d * d / (2.0 * tau);
}

AveragedDisplacement average_displacements(const ThinDeformation& def, double x1, double x2) {
  const Sample s = sample(def.gen, x1, x2);
  const double h = def.h;
  constexpr double m1 = 0.0;         // int x3 over (-1/2, 1/2)
  constexpr double m2 = 1.0 / 12.0;  // int x3^2
  AveragedDisplacement out;
  out.u = Vec2(s.u1.f - m1 * s.v.d1(0) + h * m1 * s.d[0].f,
               s.u2.f - m1 * s.v.d1(1) + h * m1 * s.d[1].f);
  out.v = s.v.f + h * h * (m1 * s.d[2].f + m2 * s.c.f);
  return out;
}

std::vector<StrainSample> strain_Gh(const ThinDeformation& def, const QuadratureSpec& quad) {
  quad.validate();
  const double h = def.h;
  const std::vector<PlanarPoint> pts = planar_points(quad, def.gen.l1, def.gen.l2);
  const QuadratureRule rx3 = gauss_legendre(quad.points_x3, -0.5, 0.5);
  std::vector<StrainSample> out;
  out.reserve(pts.size() * rx3.nodes.size());
  std::vector<Mat3> Fs(rx3.nodes.size());
  for (const PlanarPoint& pt : pts) {
    const Sample s = sample(def.gen, pt.x1, pt.x2);
    Mat3 mean = Mat3::Zero();
    for (std::size_t q = 0; q < rx3.nodes.size(); ++q) {
      Fs[q] = gradient_from(s, h, rx3.nodes[q]);
      mean += rx3.weights[q] * Fs[q];
    }
    if (!(mean.determinant() > 0.0)) {
      throw DegenerateRotation(fmt::format(
          "x3-averaged gradient has determinant {:.3e} at ({:.6g}, {:.6g})", mean.determinant(),
          pt.x1, pt.x2));
    }
    Eigen::JacobiSVD<Mat3> svd(mean, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 R = svd.matrixU() * svd.matrixV().transpose();
    for (std::size_t q = 0; q < rx3.nodes.size(); ++q) {
      out.push_back({Vec3(pt.x1, pt.x2, rx3.nodes[q]),
                     (R.transpose() * Fs[q] - Mat3::Identity()) / (h * h)});
    }
  }
  return out;
}

QuadratureSpec calibrate_quadrature(const ThinDeformation& def, const MaterialSpec& material,
                                    QuadratureSpec quad, double tol, int max_cells,
                                    const ScalarFn& load) {
  double prev = energy_phi_h(def, material, quad, load).total;
  while (2 * std::max(quad.cells1, quad.cells2) <= max_cells) {
    QuadratureSpec finer = quad;
    finer.cells1 *= 2;
    finer.cells2 *= 2;
    const double next = energy_phi_h(def, material, finer, load).total;
    const double change = std::abs(next - prev);
    quad = finer;
    if (change <= tol * std::max(std::abs(next), std::numeric_limits<double>::min())) break;
    if (next == 0.0 && prev == 0.0) break;
    prev = next;
  }
  return quad;
}

PlateState sample_generator(const Generator& gen, const GridSpec& grid) {
  if (std::abs(grid.l1 - gen.l1) > 1e-12 || std::abs(grid.l2 - gen.l2) > 1e-12) {
    throw ConfigError("generator and grid describe different plates");
  }
  auto value = [](const JetFn& f) { return [f](double a, double b) { return f(a, b).f; }; };
  auto bc = std::make_shared<const BoundaryData>(BoundaryData::from_functions(
      grid, value(gen.u1), value(gen.u2), value(gen.v),
      [&gen](double a, double b) { return gen.v(a, b).d1(0); },
      [&gen](double a, double b) { return gen.v(a, b).d1(1); }));
  return make_state(grid, bc, bc->u1_hat, bc->u2_hat, bc->v_hat);
}

GammaReport gamma_ladder(const Generator& gen, const std::optional<Generator>& partner,
                         const MaterialSpec& material, const std::vector<double>& h_list,
                         const GammaOptions& options) {
  if (h_list.empty()) throw ConfigError("h list is empty");
  for (std::size_t k = 0; k < h_list.size(); ++k) {
    if (!(h_list[k] > 0.0) || (k > 0 && !(h_list[k] < h_list[k - 1]))) {
      throw ConfigError("h list must be positive and strictly decreasing");
    }
  }
  GammaReport report;
  report.has_partner = partner.has_value();
  report.quad = options.calibrate
                    ? calibrate_quadrature(ThinDeformation(gen, h_list.front()), material,
                                           options.quad)
                    : options.quad;

  const GridSpec ref = GridSpec::make(gen.l1, gen.l2, options.reference_nodes,
                                      options.reference_nodes);
  const ReducedForms forms = ReducedForms::from_material(material);
  const PlateState s1 = sample_generator(gen, ref);
  const double phi0 = energy_phi0(s1, forms, LoadField{}, true).total;
  double d0 = 0.0;
  if (partner) d0 = dissipation_D0(sample_generator(*partner, ref), s1, forms);

  auto rel_gap = [](double value, double reference) {
    const double diff = std::abs(value - reference);
    return reference != 0.0 ? diff / std::abs(reference) : diff;
  };
  for (double h : h_list) {
    GammaRow row;
    row.h = h;
    const ThinDeformation def(gen, h);
    row.energy = energy_phi_h(def, material, report.quad);
    row.phi0 = phi0;
    row.energy_gap = rel_gap(row.energy.total, phi0);
    if (partner) {
      row.dh = dissipation_Dh(ThinDeformation(*partner, h), def, material, report.quad);
      row.d0 = d0;
      row.dissipation_gap = rel_gap(row.dh, d0);
    }
    if (!report.rows.empty()) {
      const GammaRow& prev = report.rows.back();
      row.energy_gap_ratio = row.energy_gap > 0.0 ? prev.energy_gap / row.energy_gap : 0.0;
      row.p_ratio = prev.energy.p_part > 0.0 ? row.energy.p_part / prev.energy.p_part : 0.0;
      if (row.energy_gap > prev.energy_gap) report.energy_gaps_monotone = false;
      if (row.energy_gap == prev.energy_gap && row.energy_gap != 0.0) {
        report.energy_gaps_monotone = false;
      }
      if (partner && !(row.dissipation_gap < prev.dissipation_gap) && row.dissipation_gap != 0.0) {
        report.dissipation_gaps_monotone = false;
      }
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace vk
