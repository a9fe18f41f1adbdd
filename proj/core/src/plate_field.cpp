#include "vk/plate_field.hpp"

#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "vk/errors.hpp"

namespace vk {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr int kProbeSpacing = 5;

// Padded (n1+2)x(n2+2) accessor for the v array.
struct Padded {
  Eigen::MatrixXd& m;
  double& operator()(int i, int j) { return m(i + 1, j + 1); }
};
struct PaddedConst {
  const Eigen::MatrixXd& m;
  double operator()(int i, int j) const { return m(i + 1, j + 1); }
};

void fill_ghosts(const GridSpec& g, const BoundaryData* bc, Eigen::MatrixXd& vpad) {
  Padded v{vpad};
  const int n1 = g.n1;
  const int n2 = g.n2;
  const double h1 = 2.0 * g.dx1();
  const double h2 = 2.0 * g.dx2();
  auto g1 = [&](int i, int j) { return bc ? bc->g1_hat(i, j) : 0.0; };
  auto g2 = [&](int i, int j) { return bc ? bc->g2_hat(i, j) : 0.0; };
  for (int j = 0; j < n2; ++j) {
    v(-1, j) = v(1, j) - h1 * g1(0, j);
    v(n1, j) = v(n1 - 2, j) + h1 * g1(n1 - 1, j);
  }
  for (int i = 0; i < n1; ++i) {
    v(i, -1) = v(i, 1) - h2 * g2(i, 0);
    v(i, n2) = v(i, n2 - 2) + h2 * g2(i, n2 - 1);
  }
  // Corners are not read by any stencil; average the two edge extrapolations.
  v(-1, -1) = 0.5 * ((v(1, -1) - h1 * g1(0, 0)) + (v(-1, 1) - h2 * g2(0, 0)));
  v(n1, -1) = 0.5 * ((v(n1 - 2, -1) + h1 * g1(n1 - 1, 0)) + (v(n1, 1) - h2 * g2(n1 - 1, 0)));
  v(-1, n2) = 0.5 * ((v(1, n2) - h1 * g1(0, n2 - 1)) + (v(-1, n2 - 2) + h2 * g2(0, n2 - 1)));
  v(n1, n2) = 0.5 * ((v(n1 - 2, n2) + h1 * g1(n1 - 1, n2 - 1)) +
                     (v(n1, n2 - 2) + h2 * g2(n1 - 1, n2 - 1)));
}

template <typename F>
void for_each_boundary_node(const GridSpec& g, F&& f) {
  for (int i = 0; i < g.n1; ++i) {
    f(i, 0);
    f(i, g.n2 - 1);
  }
  for (int j = 1; j < g.n2 - 1; ++j) {
    f(0, j);
    f(g.n1 - 1, j);
  }
}

CellDerivatives derivatives_from_arrays(const GridSpec& g, const Eigen::MatrixXd& u1,
                                        const Eigen::MatrixXd& u2, const Eigen::MatrixXd& vpad) {
  CellDerivatives d = CellDerivatives::zero(g);
  PaddedConst v{vpad};
  const double r1 = 0.5 / g.dx1();
  const double r2 = 0.5 / g.dx2();
  const double s11 = 0.25 / (g.dx1() * g.dx1());
  const double s22 = 0.25 / (g.dx2() * g.dx2());
  const double s12 = 1.0 / (g.dx1() * g.dx2());
  for (int j = 0; j < g.cells2(); ++j) {
    for (int i = 0; i < g.cells1(); ++i) {
      const int c = g.cell_index(i, j);
      auto grad = [&](auto&& f) {
        const double f00 = f(i, j), f10 = f(i + 1, j), f01 = f(i, j + 1), f11 = f(i + 1, j + 1);
        return Vec2(r1 * ((f10 - f00) + (f11 - f01)), r2 * ((f01 - f00) + (f11 - f10)));
      };
      d.du1.col(c) = grad([&](int a, int b) { return u1(a, b); });
      d.du2.col(c) = grad([&](int a, int b) { return u2(a, b); });
      d.dv.col(c) = grad([&](int a, int b) { return v(a, b); });
      double v11 = 0.0;
      double v22 = 0.0;
      for (int b = j; b <= j + 1; ++b) {
        for (int a = i; a <= i + 1; ++a) {
          v11 += v(a + 1, b) - 2.0 * v(a, b) + v(a - 1, b);
          v22 += v(a, b + 1) - 2.0 * v(a, b) + v(a, b - 1);
        }
      }
      d.hess(0, c) = s11 * v11;
      d.hess(1, c) = s22 * v22;
      d.hess(2, c) = s12 * (v(i + 1, j + 1) - v(i + 1, j) - v(i, j + 1) + v(i, j));
    }
  }
  return d;
}

void scatter_gradient(const GridSpec& g, const Eigen::Matrix2Xd& cot, int i, int j, int c,
                      const std::function<double&(int, int)>& out) {
  const double w1 = 0.5 / g.dx1() * cot(0, c);
  const double w2 = 0.5 / g.dx2() * cot(1, c);
  out(i + 1, j) += w1 - w2;
  out(i, j) += -w1 - w2;
  out(i + 1, j + 1) += w1 + w2;
  out(i, j + 1) += -w1 + w2;
}

}  // namespace

GridSpec GridSpec::make(double l1, double l2, int n1, int n2) {
  if (!(l1 > 0.0) || !(l2 > 0.0) || !std::isfinite(l1) || !std::isfinite(l2)) {
    throw ConfigError(fmt::format("grid lengths must be positive, got ({}, {})", l1, l2));
  }
  if (n1 < 4 || n2 < 4) {
    throw ConfigError(fmt::format("grid needs at least 4 nodes per direction, got ({}, {})", n1, n2));
  }
  return GridSpec{l1, l2, n1, n2};
}

BoundaryData BoundaryData::zero(const GridSpec& grid) {
  BoundaryData bc;
  bc.u1_hat = Eigen::MatrixXd::Zero(grid.n1, grid.n2);
  bc.u2_hat = bc.u1_hat;
  bc.v_hat = bc.u1_hat;
  bc.g1_hat = bc.u1_hat;
  bc.g2_hat = bc.u1_hat;
  return bc;
}

BoundaryData BoundaryData::from_functions(const GridSpec& grid, const ScalarFn& u1,
                                          const ScalarFn& u2, const ScalarFn& v,
                                          const ScalarFn& g1, const ScalarFn& g2) {
  BoundaryData bc = zero(grid);
  for (int j = 0; j < grid.n2; ++j) {
    for (int i = 0; i < grid.n1; ++i) {
      const Vec2 x = grid.node(i, j);
      bc.u1_hat(i, j) = u1(x(0), x(1));
      bc.u2_hat(i, j) = u2(x(0), x(1));
      bc.v_hat(i, j) = v(x(0), x(1));
      bc.g1_hat(i, j) = g1(x(0), x(1));
      bc.g2_hat(i, j) = g2(x(0), x(1));
    }
  }
  return bc;
}

void enforce_boundary(PlateState& s) {
  const BoundaryData& bc = *s.bc;
  for_each_boundary_node(s.grid, [&](int i, int j) {
    s.u1(i, j) = bc.u1_hat(i, j);
    s.u2(i, j) = bc.u2_hat(i, j);
    s.vn(i, j) = bc.v_hat(i, j);
  });
  fill_ghosts(s.grid, &bc, s.v);
}

PlateState make_state(const GridSpec& grid, std::shared_ptr<const BoundaryData> bc,
                      const Eigen::MatrixXd& u1, const Eigen::MatrixXd& u2,
                      const Eigen::MatrixXd& v) {
  if (!bc) throw ConfigError("make_state: missing boundary data");
  auto check = [&](const Eigen::MatrixXd& m, const char* name) {
    if (m.rows() != grid.n1 || m.cols() != grid.n2) {
      throw ConfigError(fmt::format("field {} has shape {}x{}, grid expects {}x{}", name, m.rows(),
                                    m.cols(), grid.n1, grid.n2));
    }
  };
  check(u1, "u1");
  check(u2, "u2");
  check(v, "v");
  check(bc->u1_hat, "bc.u1_hat");
  check(bc->u2_hat, "bc.u2_hat");
  check(bc->v_hat, "bc.v_hat");
  check(bc->g1_hat, "bc.g1_hat");
  check(bc->g2_hat, "bc.g2_hat");
  PlateState s;
  s.grid = grid;
  s.bc = std::move(bc);
  s.u1 = u1;
  s.u2 = u2;
  s.v = Eigen::MatrixXd::Zero(grid.n1 + 2, grid.n2 + 2);
  s.v.block(1, 1, grid.n1, grid.n2) = v;
  enforce_boundary(s);
  return s;
}

PlateState zero_state(const GridSpec& grid) {
  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(grid.n1, grid.n2);
  return make_state(grid, std::make_shared<const BoundaryData>(BoundaryData::zero(grid)), z, z, z);
}

Eigen::VectorXd pack_interior(const PlateState& s) {
  const GridSpec& g = s.grid;
  const int m = g.num_interior();
  Eigen::VectorXd x(3 * m);
  for (int j = 1; j < g.n2 - 1; ++j) {
    for (int i = 1; i < g.n1 - 1; ++i) {
      const int k = g.interior_index(i, j);
      x(k) = s.u1(i, j);
      x(m + k) = s.u2(i, j);
      x(2 * m + k) = s.vn(i, j);
    }
  }
  return x;
}

PlateState with_interior(const PlateState& base, const Eigen::VectorXd& x) {
  const GridSpec& g = base.grid;
  const int m = g.num_interior();
  if (x.size() != 3 * m) {
    throw ConfigError(fmt::format("interior vector has size {}, expected {}", x.size(), 3 * m));
  }
  PlateState s = base;
  for (int j = 1; j < g.n2 - 1; ++j) {
    for (int i = 1; i < g.n1 - 1; ++i) {
      const int k = g.interior_index(i, j);
      s.u1(i, j) = x(k);
      s.u2(i, j) = x(m + k);
      s.vn(i, j) = x(2 * m + k);
    }
  }
  fill_ghosts(g, s.bc.get(), s.v);
  return s;
}

bool all_finite(const PlateState& s) {
  return s.u1.allFinite() && s.u2.allFinite() && s.v.allFinite();
}

CellDerivatives CellDerivatives::zero(const GridSpec& grid) {
  const int n = grid.num_cells();
  return {Eigen::Matrix2Xd::Zero(2, n), Eigen::Matrix2Xd::Zero(2, n),
          Eigen::Matrix2Xd::Zero(2, n), Eigen::Matrix3Xd::Zero(3, n)};
}

StrainPair StrainPair::zero(const GridSpec& grid) {
  const int n = grid.num_cells();
  return {Eigen::Matrix3Xd::Zero(3, n), Eigen::Matrix3Xd::Zero(3, n)};
}

CellDerivatives cell_derivatives(const PlateState& s) {
  return derivatives_from_arrays(s.grid, s.u1, s.u2, s.v);
}

CellDerivatives test_derivatives(const GridSpec& g, const Eigen::VectorXd& x) {
  const int m = g.num_interior();
  if (x.size() != 3 * m) {
    throw ConfigError(fmt::format("interior vector has size {}, expected {}", x.size(), 3 * m));
  }
  Eigen::MatrixXd u1 = Eigen::MatrixXd::Zero(g.n1, g.n2);
  Eigen::MatrixXd u2 = u1;
  Eigen::MatrixXd vpad = Eigen::MatrixXd::Zero(g.n1 + 2, g.n2 + 2);
  for (int j = 1; j < g.n2 - 1; ++j) {
    for (int i = 1; i < g.n1 - 1; ++i) {
      const int k = g.interior_index(i, j);
      u1(i, j) = x(k);
      u2(i, j) = x(m + k);
      vpad(i + 1, j + 1) = x(2 * m + k);
    }
  }
  fill_ghosts(g, nullptr, vpad);
  return derivatives_from_arrays(g, u1, u2, vpad);
}

Eigen::VectorXd derivatives_adjoint(const GridSpec& g, const CellDerivatives& cot) {
  Eigen::MatrixXd gu1 = Eigen::MatrixXd::Zero(g.n1, g.n2);
  Eigen::MatrixXd gu2 = gu1;
  Eigen::MatrixXd gv = Eigen::MatrixXd::Zero(g.n1 + 2, g.n2 + 2);
  Padded v{gv};
  const std::function<double&(int, int)> out_u1 = [&](int a, int b) -> double& { return gu1(a, b); };
  const std::function<double&(int, int)> out_u2 = [&](int a, int b) -> double& { return gu2(a, b); };
  const std::function<double&(int, int)> out_v = [&](int a, int b) -> double& { return v(a, b); };
  const double s11 = 0.25 / (g.dx1() * g.dx1());
  const double s22 = 0.25 / (g.dx2() * g.dx2());
  const double s12 = 1.0 / (g.dx1() * g.dx2());
  for (int j = 0; j < g.cells2(); ++j) {
    for (int i = 0; i < g.cells1(); ++i) {
      const int c = g.cell_index(i, j);
      scatter_gradient(g, cot.du1, i, j, c, out_u1);
      scatter_gradient(g, cot.du2, i, j, c, out_u2);
      scatter_gradient(g, cot.dv, i, j, c, out_v);
      const double w11 = s11 * cot.hess(0, c);
      const double w22 = s22 * cot.hess(1, c);
      for (int b = j; b <= j + 1; ++b) {
        for (int a = i; a <= i + 1; ++a) {
          v(a + 1, b) += w11;
          v(a - 1, b) += w11;
          v(a, b + 1) += w22;
          v(a, b - 1) += w22;
          v(a, b) -= 2.0 * (w11 + w22);
        }
      }
      const double w12 = s12 * cot.hess(2, c);
      v(i + 1, j + 1) += w12;
      v(i + 1, j) -= w12;
      v(i, j + 1) -= w12;
      v(i, j) += w12;
    }
  }
  // Ghost values depend on the first interior row with unit weight.
  for (int j = 0; j < g.n2; ++j) {
    v(1, j) += v(-1, j);
    v(g.n1 - 2, j) += v(g.n1, j);
  }
  for (int i = 0; i < g.n1; ++i) {
    v(i, 1) += v(i, -1);
    v(i, g.n2 - 2) += v(i, g.n2);
  }
  const int m = g.num_interior();
  Eigen::VectorXd x(3 * m);
  for (int j = 1; j < g.n2 - 1; ++j) {
    for (int i = 1; i < g.n1 - 1; ++i) {
      const int k = g.interior_index(i, j);
      x(k) = gu1(i, j);
      x(m + k) = gu2(i, j);
      x(2 * m + k) = v(i, j);
    }
  }
  return x;
}

Eigen::Matrix3Xd membrane_strain(const CellDerivatives& d) {
  const Eigen::Index n = d.du1.cols();
  Eigen::Matrix3Xd g(3, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double v1 = d.dv(0, c);
    const double v2 = d.dv(1, c);
    g(0, c) = d.du1(0, c) + 0.5 * v1 * v1;
    g(1, c) = d.du2(1, c) + 0.5 * v2 * v2;
    g(2, c) = (kSqrt2 / 2.0) * (d.du1(1, c) + d.du2(0, c) + v1 * v2);
  }
  return g;
}

Eigen::Matrix3Xd membrane_strain(const PlateState& state) {
  return membrane_strain(cell_derivatives(state));
}

Eigen::Matrix3Xd bending_strain(const CellDerivatives& d) {
  Eigen::Matrix3Xd g(3, d.hess.cols());
  g.row(0) = -d.hess.row(0);
  g.row(1) = -d.hess.row(1);
  g.row(2) = -kSqrt2 * d.hess.row(2);
  return g;
}

Eigen::Matrix3Xd bending_strain(const PlateState& state) {
  return bending_strain(cell_derivatives(state));
}

StrainPair strains(const CellDerivatives& d) { return {membrane_strain(d), bending_strain(d)}; }

StrainPair strains(const PlateState& state) { return strains(cell_derivatives(state)); }

StrainPair h_apply(const CellDerivatives& dir, const CellDerivatives& at) {
  const Eigen::Index n = dir.du1.cols();
  StrainPair h;
  h.g0.resize(3, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double v1 = at.dv(0, c);
    const double v2 = at.dv(1, c);
    const double w1 = dir.dv(0, c);
    const double w2 = dir.dv(1, c);
    h.g0(0, c) = dir.du1(0, c) + v1 * w1;
    h.g0(1, c) = dir.du2(1, c) + v2 * w2;
    h.g0(2, c) = (kSqrt2 / 2.0) * (dir.du1(1, c) + dir.du2(0, c) + v1 * w2 + v2 * w1);
  }
  h.g1 = bending_strain(dir);
  return h;
}

CellDerivatives h_adjoint(const StrainPair& cot, const CellDerivatives& at) {
  const Eigen::Index n = cot.g0.cols();
  CellDerivatives d;
  d.du1.resize(2, n);
  d.du2.resize(2, n);
  d.dv.resize(2, n);
  d.hess.resize(3, n);
  const double r = kSqrt2 / 2.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const double sa = cot.g0(0, c);
    const double sb = cot.g0(1, c);
    const double sc = r * cot.g0(2, c);
    const double v1 = at.dv(0, c);
    const double v2 = at.dv(1, c);
    d.du1(0, c) = sa;
    d.du1(1, c) = sc;
    d.du2(0, c) = sc;
    d.du2(1, c) = sb;
    d.dv(0, c) = v1 * sa + v2 * sc;
    d.dv(1, c) = v2 * sb + v1 * sc;
    d.hess(0, c) = -cot.g1(0, c);
    d.hess(1, c) = -cot.g1(1, c);
    d.hess(2, c) = -kSqrt2 * cot.g1(2, c);
  }
  return d;
}

void require_same_grid(const PlateState& a, const PlateState& b) {
  if (!(a.grid == b.grid)) {
    throw GridMismatch(fmt::format("states live on different grids ({}x{} vs {}x{})", a.grid.n1,
                                   a.grid.n2, b.grid.n1, b.grid.n2));
  }
}

StrainPair h_operator(const PlateState& direction, const PlateState& at_state) {
  require_same_grid(direction, at_state);
  const GridSpec& g = direction.grid;
  double worst = 0.0;
  for_each_boundary_node(g, [&](int i, int j) {
    worst = std::max({worst, std::abs(direction.u1(i, j)), std::abs(direction.u2(i, j)),
                      std::abs(direction.vn(i, j))});
  });
  for (int j = 0; j < g.n2; ++j) {
    worst = std::max(worst, std::abs(direction.vn(-1, j) - direction.vn(1, j)));
    worst = std::max(worst, std::abs(direction.vn(g.n1, j) - direction.vn(g.n1 - 2, j)));
  }
  for (int i = 0; i < g.n1; ++i) {
    worst = std::max(worst, std::abs(direction.vn(i, -1) - direction.vn(i, 1)));
    worst = std::max(worst, std::abs(direction.vn(i, g.n2) - direction.vn(i, g.n2 - 2)));
  }
  if (worst > 1e-14) {
    throw PreconditionError(
        fmt::format("h_operator: direction has boundary trace {:.3e}, expected zero", worst));
  }
  return h_apply(cell_derivatives(direction), cell_derivatives(at_state));
}

double strain_difference_identity_check(const PlateState& s0, const PlateState& s1) {
  require_same_grid(s0, s1);
  const CellDerivatives d0 = cell_derivatives(s0);
  const CellDerivatives d1 = cell_derivatives(s1);
  CellDerivatives diff{d1.du1 - d0.du1, d1.du2 - d0.du2, d1.dv - d0.dv, d1.hess - d0.hess};
  const StrainPair g0 = strains(d0);
  const StrainPair g1 = strains(d1);
  const StrainPair h = h_apply(diff, d1);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < diff.dv.cols(); ++c) {
    const Vec2 w = diff.dv.col(c);
    const Mat2 ww = w * w.transpose();
    const Voigt2 quad = 0.5 * to_voigt(ww);
    const Voigt2 lhs0 = g1.g0.col(c) - g0.g0.col(c);
    const Voigt2 rhs0 = h.g0.col(c) - quad;
    const Voigt2 lhs1 = g1.g1.col(c) - g0.g1.col(c);
    worst = std::max(worst, (lhs0 - rhs0).cwiseAbs().maxCoeff());
    worst = std::max(worst, (lhs1 - h.g1.col(c)).cwiseAbs().maxCoeff());
  }
  return worst;
}

Eigen::SparseMatrix<double> h_matrix(const GridSpec& g, const CellDerivatives& at) {
  const int m = g.num_interior();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(g.num_cells()) * 6 * 16);
  // Node (i, j) influences cells c1 in [i-2, i+1]; with spacing 5 each cell sees at most
  // one probed node per color.
  auto owner = [](int c, int color, int n) {
    for (int a = c - 1; a <= c + 2; ++a) {
      if (a >= 1 && a <= n - 2 && a % kProbeSpacing == color) return a;
    }
    return -1;
  };
  for (int field = 0; field < 3; ++field) {
    for (int b = 0; b < kProbeSpacing; ++b) {
      for (int a = 0; a < kProbeSpacing; ++a) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(3 * m);
        for (int j = 1; j < g.n2 - 1; ++j) {
          if (j % kProbeSpacing != b) continue;
          for (int i = 1; i < g.n1 - 1; ++i) {
            if (i % kProbeSpacing == a) x(field * m + g.interior_index(i, j)) = 1.0;
          }
        }
        const StrainPair h = h_apply(test_derivatives(g, x), at);
        for (int c2 = 0; c2 < g.cells2(); ++c2) {
          const int j = owner(c2, b, g.n2);
          if (j < 0) continue;
          for (int c1 = 0; c1 < g.cells1(); ++c1) {
            const int i = owner(c1, a, g.n1);
            if (i < 0) continue;
            const int c = g.cell_index(c1, c2);
            const int col = field * m + g.interior_index(i, j);
            for (int r = 0; r < 3; ++r) {
              if (h.g0(r, c) != 0.0) triplets.emplace_back(6 * c + r, col, h.g0(r, c));
              if (h.g1(r, c) != 0.0) triplets.emplace_back(6 * c + 3 + r, col, h.g1(r, c));
            }
          }
        }
      }
    }
  }
  Eigen::SparseMatrix<double> J(6 * g.num_cells(), 3 * m);
  J.setFromTriplets(triplets.begin(), triplets.end());
  return J;
}

}  // namespace vk
