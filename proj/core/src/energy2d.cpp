#include "vk/energy2d.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "vk/errors.hpp"
#include "vk/summation.hpp"

namespace vk {

namespace {

constexpr double kTwelfth = 1.0 / 12.0;

void check_verified(const ReducedForms& forms, bool allow_unverified) {
  if (!forms.a_min_verified && !allow_unverified) {
    throw PreconditionError("reduced forms were not verified to have a zero e3-stretch minimizer");
  }
}

void check_load(const GridSpec& grid, const LoadField& load) {
  if (load.f.size() != 0 && load.f.size() != grid.num_cells()) {
    throw ConfigError(fmt::format("load field has {} cells, grid has {}", load.f.size(),
                                  grid.num_cells()));
  }
  if (!load.f.allFinite()) throw NumericError("load field contains non-finite values");
}

double cell_mean_v(const PlateState& s, int c1, int c2) {
  return 0.25 * (s.vn(c1, c2) + s.vn(c1 + 1, c2) + s.vn(c1, c2 + 1) + s.vn(c1 + 1, c2 + 1));
}

EnergyBreakdown energy_from(const PlateState& s, const StrainPair& g, const ReducedForms& forms,
                            const LoadField& load) {
  const GridSpec& grid = s.grid;
  const int n = grid.num_cells();
  const double area = grid.cell_area();
  Eigen::VectorXd mem(n), bend(n), ld(n);
  for (int c2 = 0; c2 < grid.cells2(); ++c2) {
    for (int c1 = 0; c1 < grid.cells1(); ++c1) {
      const int c = grid.cell_index(c1, c2);
      mem(c) = 0.5 * forms.qw(g.g0.col(c));
      bend(c) = forms.qw(g.g1.col(c)) / 24.0;
      ld(c) = load.f.size() ? load.f(c) * cell_mean_v(s, c1, c2) : 0.0;
    }
  }
  EnergyBreakdown e;
  e.membrane = area * pairwise_sum(mem);
  e.bending = area * pairwise_sum(bend);
  e.load = area * pairwise_sum(ld);
  e.total = e.membrane + e.bending - e.load;
  return e;
}

Eigen::VectorXd grad_from(const PlateState& s, const CellDerivatives& d, const StrainPair& g,
                          const ReducedForms& forms, const LoadField& load) {
  const GridSpec& grid = s.grid;
  const double area = grid.cell_area();
  StrainPair cot;
  cot.g0 = area * (forms.cw2 * g.g0);
  cot.g1 = (area * kTwelfth) * (forms.cw2 * g.g1);
  Eigen::VectorXd grad = derivatives_adjoint(grid, h_adjoint(cot, d));
  if (load.f.size()) {
    const int m = grid.num_interior();
    for (int c2 = 0; c2 < grid.cells2(); ++c2) {
      for (int c1 = 0; c1 < grid.cells1(); ++c1) {
        const double w = 0.25 * area * load.f(grid.cell_index(c1, c2));
        for (int b = c2; b <= c2 + 1; ++b) {
          for (int a = c1; a <= c1 + 1; ++a) {
            if (a >= 1 && a <= grid.n1 - 2 && b >= 1 && b <= grid.n2 - 2) {
              grad(2 * m + grid.interior_index(a, b)) -= w;
            }
          }
        }
      }
    }
  }
  return grad;
}

double d0_squared_from(const GridSpec& grid, const StrainPair& a, const StrainPair& b,
                       const ReducedForms& forms) {
  const int n = grid.num_cells();
  Eigen::VectorXd cell(n);
  for (int c = 0; c < n; ++c) {
    const Voigt2 dm = b.g0.col(c) - a.g0.col(c);
    const Voigt2 db = b.g1.col(c) - a.g1.col(c);
    cell(c) = forms.qd(dm) + kTwelfth * forms.qd(db);
  }
  return grid.cell_area() * pairwise_sum(cell);
}

Eigen::VectorXd d0_squared_grad_from(const GridSpec& grid, const StrainPair& a,
                                     const StrainPair& b, const CellDerivatives& db,
                                     const ReducedForms& forms) {
  const double area = grid.cell_area();
  StrainPair cot;
  cot.g0 = (2.0 * area) * (forms.cd2 * (b.g0 - a.g0));
  cot.g1 = (2.0 * area * kTwelfth) * (forms.cd2 * (b.g1 - a.g1));
  return derivatives_adjoint(grid, h_adjoint(cot, db));
}

Voigt2 sym_voigt(const Mat2& m) { return to_voigt(Mat2(0.5 * (m + m.transpose()))); }

}  // namespace

LoadField LoadField::zero(const GridSpec& grid) {
  return LoadField{Eigen::VectorXd::Zero(grid.num_cells())};
}

EnergyBreakdown energy_phi0(const PlateState& state, const ReducedForms& forms,
                            const LoadField& load, bool allow_unverified) {
  check_verified(forms, allow_unverified);
  check_load(state.grid, load);
  return energy_from(state, strains(state), forms, load);
}

Eigen::VectorXd grad_phi0(const PlateState& state, const ReducedForms& forms,
                          const LoadField& load, bool allow_unverified) {
  check_verified(forms, allow_unverified);
  check_load(state.grid, load);
  const CellDerivatives d = cell_derivatives(state);
  return grad_from(state, d, strains(d), forms, load);
}

double dissipation_D0_squared(const PlateState& s0, const PlateState& s1,
                              const ReducedForms& forms) {
  require_same_grid(s0, s1);
  return d0_squared_from(s0.grid, strains(s0), strains(s1), forms);
}

double dissipation_D0(const PlateState& s0, const PlateState& s1, const ReducedForms& forms) {
  return std::sqrt(std::max(0.0, dissipation_D0_squared(s0, s1, forms)));
}

Eigen::VectorXd grad_D0_squared(const PlateState& s0, const PlateState& s1,
                                const ReducedForms& forms) {
  require_same_grid(s0, s1);
  const CellDerivatives d1 = cell_derivatives(s1);
  return d0_squared_grad_from(s0.grid, strains(s0), strains(d1), d1, forms);
}

ObjectiveValue incremental_objective(double tau, const PlateState& prev, const PlateState& trial,
                                     const ReducedForms& forms, const LoadField& load,
                                     bool allow_unverified) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError(fmt::format("time step must be positive, got {}", tau));
  }
  check_verified(forms, allow_unverified);
  require_same_grid(prev, trial);
  check_load(trial.grid, load);
  const CellDerivatives d = cell_derivatives(trial);
  const StrainPair g = strains(d);
  const StrainPair g_prev = strains(prev);
  ObjectiveValue out;
  const double d2 = d0_squared_from(trial.grid, g_prev, g, forms);
  out.value = energy_from(trial, g, forms, load).total + d2 / (2.0 * tau);
  out.grad = grad_from(trial, d, g, forms, load) +
             d0_squared_grad_from(trial.grid, g_prev, g, d, forms) / (2.0 * tau);
  return out;
}

std::vector<TestPair> sine_test_library(const GridSpec& grid, int max_mode,
                                        int random_combinations, std::uint64_t seed) {
  if (max_mode < 1) throw ConfigError("test library needs at least one mode");
  const double pi = std::numbers::pi;
  const double L1 = grid.l1;
  const double L2 = grid.l2;
  std::vector<TestPair> lib;
  for (int l = 1; l <= max_mode; ++l) {
    for (int k = 1; k <= max_mode; ++k) {
      const double a = k * pi / L1;
      const double b = l * pi / L2;
      for (int alpha = 0; alpha < 2; ++alpha) {
        TestPair t;
        t.grad_u = [a, b, alpha](double x, double y) {
          Mat2 m = Mat2::Zero();
          m(alpha, 0) = a * std::cos(a * x) * std::sin(b * y);
          m(alpha, 1) = b * std::sin(a * x) * std::cos(b * y);
          return m;
        };
        t.v = [](double, double) { return 0.0; };
        t.grad_v = [](double, double) { return Vec2::Zero().eval(); };
        t.hess_v = [](double, double) { return Mat2::Zero().eval(); };
        lib.push_back(std::move(t));
      }
      // s(x) = sin^2(a x): s' = a sin(2 a x), s'' = 2 a^2 cos(2 a x)
      TestPair t;
      t.grad_u = [](double, double) { return Mat2::Zero().eval(); };
      t.v = [a, b](double x, double y) {
        return std::pow(std::sin(a * x), 2) * std::pow(std::sin(b * y), 2);
      };
      t.grad_v = [a, b](double x, double y) {
        const double sx = std::pow(std::sin(a * x), 2), sy = std::pow(std::sin(b * y), 2);
        return Vec2(a * std::sin(2 * a * x) * sy, b * std::sin(2 * b * y) * sx);
      };
      t.hess_v = [a, b](double x, double y) {
        const double sx = std::pow(std::sin(a * x), 2), sy = std::pow(std::sin(b * y), 2);
        const double dx = a * std::sin(2 * a * x), dy = b * std::sin(2 * b * y);
        Mat2 h;
        h << 2 * a * a * std::cos(2 * a * x) * sy, dx * dy, dx * dy,
            2 * b * b * std::cos(2 * b * y) * sx;
        return h;
      };
      lib.push_back(std::move(t));
    }
  }
  if (random_combinations > 0) {
    const std::vector<TestPair> base = lib;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (int r = 0; r < random_combinations; ++r) {
      auto w = std::make_shared<std::vector<double>>(base.size());
      for (double& x : *w) x = normal(rng);
      auto shared = std::make_shared<const std::vector<TestPair>>(base);
      TestPair t;
      t.grad_u = [w, shared](double x, double y) {
        Mat2 m = Mat2::Zero();
        for (std::size_t q = 0; q < shared->size(); ++q) m += (*w)[q] * (*shared)[q].grad_u(x, y);
        return m;
      };
      t.v = [w, shared](double x, double y) {
        double s = 0.0;
        for (std::size_t q = 0; q < shared->size(); ++q) s += (*w)[q] * (*shared)[q].v(x, y);
        return s;
      };
      t.grad_v = [w, shared](double x, double y) {
        Vec2 s = Vec2::Zero();
        for (std::size_t q = 0; q < shared->size(); ++q) s += (*w)[q] * (*shared)[q].grad_v(x, y);
        return s;
      };
      t.hess_v = [w, shared](double x, double y) {
        Mat2 s = Mat2::Zero();
        for (std::size_t q = 0; q < shared->size(); ++q) s += (*w)[q] * (*shared)[q].hess_v(x, y);
        return s;
      };
      lib.push_back(std::move(t));
    }
  }
  return lib;
}

WeakResidual weak_residual(const PlateState& s_prev, const PlateState& s_next, double tau,
                           const ReducedForms& forms, const LoadField& load,
                           const std::vector<TestPair>& tests) {
  if (tests.empty()) throw ConfigError("weak_residual needs at least one test pair");
  if (!(tau > 0.0)) throw ConfigError(fmt::format("time step must be positive, got {}", tau));
  require_same_grid(s_prev, s_next);
  const GridSpec& grid = s_next.grid;
  check_load(grid, load);
  const CellDerivatives dn = cell_derivatives(s_next);
  const StrainPair gn = strains(dn);
  const StrainPair gp = strains(s_prev);
  // Stresses at s_next: elastic plus viscous with backward-difference rates.
  const Eigen::Matrix3Xd sig_m = forms.cw2 * gn.g0 + forms.cd2 * (gn.g0 - gp.g0) / tau;
  const Eigen::Matrix3Xd sig_b = forms.cw2 * gn.g1 + forms.cd2 * (gn.g1 - gp.g1) / tau;
  const double area = grid.cell_area();
  const int n = grid.num_cells();

  WeakResidual out;
  Eigen::VectorXd t1(n), t2(n), nu(n), nv(n);
  for (const TestPair& t : tests) {
    for (int c2 = 0; c2 < grid.cells2(); ++c2) {
      for (int c1 = 0; c1 < grid.cells1(); ++c1) {
        const int c = grid.cell_index(c1, c2);
        const Vec2 x = grid.cell_center(c1, c2);
        const Mat2 gu = t.grad_u(x(0), x(1));
        const Vec2 gv = t.grad_v(x(0), x(1));
        const Mat2 hv = t.hess_v(x(0), x(1));
        const Vec2 vn = dn.dv.col(c);
        const Voigt2 eu = sym_voigt(gu);
        const Voigt2 ev = sym_voigt(vn * gv.transpose());
        // Bending strain is -Hess, so the test strain enters with the same sign.
        const Voigt2 kv = -to_voigt(hv);
        const double fv = load.f.size() ? load.f(c) * t.v(x(0), x(1)) : 0.0;
        t1(c) = sig_m.col(c).dot(eu);
        t2(c) = sig_m.col(c).dot(ev) + kTwelfth * sig_b.col(c).dot(kv) - fv;
        nu(c) = eu.squaredNorm();
        nv(c) = hv.squaredNorm();
      }
    }
    const double norm = std::sqrt(area * pairwise_sum(nu)) + std::sqrt(area * pairwise_sum(nv));
    if (!(norm > 0.0)) continue;
    out.r1 = std::max(out.r1, std::abs(area * pairwise_sum(t1)) / norm);
    out.r2 = std::max(out.r2, std::abs(area * pairwise_sum(t2)) / norm);
  }
  return out;
}

}  // namespace vk
