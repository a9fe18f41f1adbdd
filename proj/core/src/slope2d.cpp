#include "vk/slope2d.hpp"

#include <cmath>

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include "vk/errors.hpp"
#include "vk/quadrature.hpp"
#include "vk/summation.hpp"

namespace vk {

SlopeSystem SlopeSystem::assemble(const PlateState& state, const ReducedForms& forms,
                                  const LoadField& load) {
  if (!load.is_zero()) {
    throw UnsupportedWithLoad("the slope representation is only available for zero load");
  }
  SlopeSystem s;
  s.grid_ = state.grid;
  s.forms_ = forms;
  s.at_ = cell_derivatives(state);
  s.strain_ = strains(s.at_);
  s.rhs_ = grad_phi0(state, forms, LoadField{}, true);
  return s;
}

StrainPair SlopeSystem::strain_of(const Vector& x) const {
  return h_apply(test_derivatives(grid_, x), at_);
}

Vector SlopeSystem::apply(const Vector& x) const {
  const StrainPair h = strain_of(x);
  const double area = grid_.cell_area();
  StrainPair cot;
  cot.g0 = area * (forms_.cd2 * h.g0);
  cot.g1 = (area / 12.0) * (forms_.cd2 * h.g1);
  return derivatives_adjoint(grid_, h_adjoint(cot, at_));
}

double SlopeSystem::energy_norm_squared(const StrainPair& h) const {
  const int n = grid_.num_cells();
  Eigen::VectorXd cell(n);
  for (int c = 0; c < n; ++c) {
    cell(c) = forms_.qd(h.g0.col(c)) + forms_.qd(h.g1.col(c)) / 12.0;
  }
  return grid_.cell_area() * pairwise_sum(cell);
}

Eigen::SparseMatrix<double> SlopeSystem::matrix() const {
  const Eigen::SparseMatrix<double> J = h_matrix(grid_, at_);
  const double area = grid_.cell_area();
  const Mat3 wm = area * forms_.cd2;
  const Mat3 wb = wm / 12.0;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(grid_.num_cells()) * 18);
  for (int c = 0; c < grid_.num_cells(); ++c) {
    for (int r = 0; r < 3; ++r) {
      for (int q = 0; q < 3; ++q) {
        trip.emplace_back(6 * c + r, 6 * c + q, wm(r, q));
        trip.emplace_back(6 * c + 3 + r, 6 * c + 3 + q, wb(r, q));
      }
    }
  }
  Eigen::SparseMatrix<double> W(J.rows(), J.rows());
  W.setFromTriplets(trip.begin(), trip.end());
  return Eigen::SparseMatrix<double>(J.transpose()) * W * J;
}

Vector conjugate_gradient(const SlopeSystem& system, const Vector& b, const CgOptions& options,
                          CgStats& stats) {
  const int n = static_cast<int>(b.size());
  const int max_iters = options.max_iters > 0 ? options.max_iters : 10 * n;
  stats = CgStats{};
  Vector x = Vector::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    stats.converged = true;
    return x;
  }

  LinearMap precond;
  if (options.preconditioner == SlopePreconditioner::Jacobi) {
    const Vector diag = system.matrix().diagonal();
    Vector inv = Vector::Ones(n);
    for (int k = 0; k < n; ++k) {
      if (diag(k) > 0.0) inv(k) = 1.0 / diag(k);
    }
    precond = [inv](const Vector& r) { return Vector(inv.cwiseProduct(r)); };
  } else {
    auto solver = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    solver->compute(system.matrix());
    if (solver->info() != Eigen::Success) {
      throw SolverFailure("slope operator factorization failed");
    }
    precond = [solver](const Vector& r) { return Vector(solver->solve(r)); };
  }

  Vector r = b;
  Vector z = precond(r);
  Vector p = z;
  double rz = r.dot(z);
  stats.residual_history.push_back(1.0);
  for (int it = 0; it < max_iters; ++it) {
    const Vector Ap = system.apply(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      throw SolverFailure(fmt::format(
          "slope operator is not positive definite along a CG direction (p^T A p = {:.3e})", pAp));
    }
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    const double rel = r.norm() / bnorm;
    stats.residual_history.push_back(rel);
    stats.iterations = it + 1;
    stats.rel_residual = rel;
    if (rel <= options.rel_tol) {
      stats.converged = true;
      return x;
    }
    z = precond(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  std::string tail;
  const std::size_t h = stats.residual_history.size();
  for (std::size_t k = h > 5 ? h - 5 : 0; k < h; ++k) {
    tail += fmt::format(" {:.3e}", stats.residual_history[k]);
  }
  throw SolverFailure(fmt::format("CG did not reach relative residual {:.1e} in {} iterations; "
                                  "last residuals:{}",
                                  options.rel_tol, max_iters, tail));
}

SlopeResult local_slope(const SlopeSystem& system, const CgOptions& options) {
  SlopeResult out;
  out.minimizer = conjugate_gradient(system, system.rhs(), options, out.cg);
  const StrainPair h = system.strain_of(out.minimizer);
  out.slope = std::sqrt(std::max(0.0, system.energy_norm_squared(h)));

  // Same norm through the stress representation, integrated across the thickness.
  const ReducedForms& f = system.forms();
  const StrainPair& G = system.strain();
  const QuadratureRule rule = gauss_legendre(3, -0.5, 0.5);
  const int n = system.grid().num_cells();
  Eigen::VectorXd cell(n);
  for (int c = 0; c < n; ++c) {
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double x3 = rule.nodes[q];
      const Voigt2 g = G.g0.col(c) + x3 * G.g1.col(c);
      const Voigt2 hx = h.g0.col(c) + x3 * h.g1.col(c);
      const Voigt2 L = f.cd2 * hx - f.cw2 * g;
      acc += rule.weights[q] * (f.inv_sqrt_cd2 * (f.cw2 * g + L)).squaredNorm();
    }
    cell(c) = acc;
  }
  out.slope_dual_form = std::sqrt(system.grid().cell_area() * pairwise_sum(cell));
  return out;
}

SlopeResult local_slope(const PlateState& state, const ReducedForms& forms,
                        const LoadField& load, const CgOptions& options) {
  return local_slope(SlopeSystem::assemble(state, forms, load), options);
}

double rayleigh_ratio(const SlopeSystem& system, const Vector& direction) {
  if (direction.size() != system.size()) {
    throw ConfigError(fmt::format("direction has size {}, expected {}", direction.size(),
                                  system.size()));
  }
  const StrainPair h = system.strain_of(direction);
  const double scale = direction.lpNorm<Eigen::Infinity>();
  const double hmax = std::max(h.g0.cwiseAbs().maxCoeff(), h.g1.cwiseAbs().maxCoeff());
  const double denom2 = system.energy_norm_squared(h);
  if (!(scale > 0.0) || !(hmax > 1e-14 * scale) || !(denom2 > 0.0)) {
    throw DegenerateDirection("direction has vanishing linearized strain");
  }
  return system.rhs().dot(direction) / std::sqrt(denom2);
}

std::vector<int> upper_gradient_warnings(const Trajectory& traj, double tol) {
  if (traj.slopes.size() != traj.states.size()) {
    throw PreconditionError("upper-gradient check needs recorded slopes");
  }
  std::vector<int> steps;
  for (int n = 1; n <= traj.steps(); ++n) {
    const double drop = traj.energies[n - 1] - traj.energies[n];
    if (drop > traj.slopes[n - 1] * traj.increments[n - 1] + tol) steps.push_back(n);
  }
  return steps;
}

}  // namespace vk
