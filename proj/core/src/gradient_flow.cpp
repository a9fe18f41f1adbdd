#include "vk/gradient_flow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include "vk/errors.hpp"

namespace vk {

namespace {

struct CurvaturePair {
  Vector s;
  Vector y;
  double rho;
};

Vector two_loop(const std::deque<CurvaturePair>& mem, const Vector& g, const LinearMap& h0) {
  Vector q = g;
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    alpha[k] = mem[k].rho * mem[k].s.dot(q);
    q -= alpha[k] * mem[k].y;
  }
  Vector r;
  if (h0) {
    r = h0(q);
  } else if (!mem.empty()) {
    const CurvaturePair& last = mem.back();
    r = (last.s.dot(last.y) / last.y.squaredNorm()) * q;
  } else {
    r = q / std::max(1.0, q.lpNorm<Eigen::Infinity>());
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double beta = mem[k].rho * mem[k].y.dot(r);
    r += (alpha[k] - beta) * mem[k].s;
  }
  return r;
}

}  // namespace

StepResult lbfgs_minimize(const std::function<ObjectiveValue(const Vector&)>& f, const Vector& x0,
                          const InnerOptions& opt, const LinearMap& h0) {
  if (opt.memory < 1 || opt.max_iters < 0 || opt.max_halvings < 1 || !(opt.eps_inner > 0.0)) {
    throw ConfigError("invalid inner solver options");
  }
  Vector x = x0;
  ObjectiveValue cur = f(x);
  if (!std::isfinite(cur.value) || !cur.grad.allFinite()) {
    throw NumericError("objective is not finite at the starting point");
  }
  const double f_start = cur.value;
  const double roundoff = 16.0 * std::numeric_limits<double>::epsilon();
  std::deque<CurvaturePair> mem;
  StepResult result;
  int iter = 0;
  for (;;) {
    const double gnorm = cur.grad.lpNorm<Eigen::Infinity>();
    if (gnorm <= opt.eps_inner * (1.0 + std::abs(cur.value))) {
      result.stats.converged = true;
      break;
    }
    if (iter >= opt.max_iters) break;
    Vector d = -two_loop(mem, cur.grad, h0);
    double slope = cur.grad.dot(d);
    if (!(slope < 0.0)) {
      mem.clear();
      d = h0 ? Vector(-h0(cur.grad)) : Vector(-cur.grad / std::max(1.0, gnorm));
      slope = cur.grad.dot(d);
      if (!(slope < 0.0)) d = -cur.grad / std::max(1.0, gnorm), slope = cur.grad.dot(d);
    }
    double t = 1.0;
    ObjectiveValue next;
    Vector xn;
    bool accepted = false;
    bool saw_nonfinite = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      xn = x + t * d;
      // Steps below the resolution of x cannot make progress.
      if ((xn.array() == x.array()).all()) break;
      next = f(xn);
      if (std::isfinite(next.value) && next.grad.allFinite()) {
        const double armijo = cur.value + opt.armijo_c1 * t * slope;
        // Within roundoff of the Armijo bound the value cannot decide; require the gradient
        // to shrink instead so that an inconsistent gradient still fails.
        if (next.value <= armijo ||
            (next.value <= armijo + roundoff * std::abs(cur.value) &&
             next.grad.lpNorm<Eigen::Infinity>() < gnorm)) {
          accepted = true;
          break;
        }
      } else {
        saw_nonfinite = true;
      }
      t *= 0.5;
    }
    if (!accepted) {
      const std::string msg = fmt::format(
          "line search failed at iteration {} after step {:.3e} (objective {:.17g}, grad sup "
          "{:.3e}, directional derivative {:.3e})",
          iter, t, cur.value, gnorm, slope);
      if (saw_nonfinite) throw NumericError(msg + "; objective became non-finite");
      throw StepFailure(msg);
    }
    CurvaturePair p{xn - x, next.grad - cur.grad, 0.0};
    const double sy = p.s.dot(p.y);
    if (sy > 1e-14 * p.s.norm() * p.y.norm() && sy > 0.0) {
      p.rho = 1.0 / sy;
      mem.push_back(std::move(p));
      if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
    }
    x = std::move(xn);
    cur = std::move(next);
    ++iter;
  }
  if (cur.value > f_start) {
    // Roundoff slack accumulated past the warm start; keep the warm start.
    x = x0;
    cur = f(x0);
  }
  result.state = std::move(x);
  result.stats.iterations = iter;
  result.stats.grad_norm = cur.grad.lpNorm<Eigen::Infinity>();
  result.stats.objective = cur.value;
  return result;
}

StepResult mm_step(const MetricSpace& space, double tau, const Vector& prev,
                   const InnerOptions& options) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError(fmt::format("time step must be positive, got {}", tau));
  }
  const Vector start = space.project ? space.project(prev) : prev;
  LinearMap h0;
  if (space.preconditioner) h0 = space.preconditioner(tau, start);
  auto f = [&](const Vector& y) { return space.objective(tau, start, y); };
  StepResult r = lbfgs_minimize(f, start, options, h0);
  if (space.project) r.state = space.project(r.state);
  return r;
}

const Vector& Trajectory::at_time(double t) const {
  if (states.empty()) throw PreconditionError("empty trajectory");
  if (t <= 0.0) return states.front();
  const double q = t / tau;
  int n = static_cast<int>(std::ceil(q - 1e-9 * std::max(1.0, q)));
  n = std::clamp(n, 0, static_cast<int>(states.size()) - 1);
  return states[static_cast<std::size_t>(n)];
}

int step_count(double tau, double t_end) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError(fmt::format("time step must be positive, got {}", tau));
  }
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) {
    throw ConfigError(fmt::format("end time must be non-negative, got {}", t_end));
  }
  const double q = t_end / tau;
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, q)) return static_cast<int>(r);
  return static_cast<int>(std::ceil(q));
}

Trajectory mm_run(const MetricSpace& space, double tau, double t_end, const Vector& init,
                  const RunOptions& options) {
  const int n_steps = step_count(tau, t_end);
  Trajectory traj;
  traj.tau = tau;
  const Vector y0 = space.project ? space.project(init) : init;
  traj.states.push_back(y0);
  traj.energies.push_back(space.phi(y0));
  traj.eps_cert = 1e-10 * (1.0 + std::abs(traj.energies.front()));
  if (options.slope) traj.slopes.push_back(options.slope(y0));
  for (int n = 1; n <= n_steps; ++n) {
    StepResult r;
    try {
      r = mm_step(space, tau, traj.states.back(), options.inner);
    } catch (const StepFailure& e) {
      traj.complete = false;
      traj.failure = fmt::format("step {}: {}", n, e.what());
      break;
    }
    const double phi = space.phi(r.state);
    const double d = std::sqrt(std::max(0.0, space.dist2(traj.states.back(), r.state)));
    if (phi + d * d / (2.0 * tau) > traj.energies.back() + traj.eps_cert) {
      ++traj.certificate_failures;
    }
    traj.energies.push_back(phi);
    traj.increments.push_back(d);
    traj.stats.push_back(r.stats);
    traj.states.push_back(std::move(r.state));
    if (options.slope) traj.slopes.push_back(options.slope(traj.states.back()));
    if (options.on_step) options.on_step(n, traj.states.back());
  }
  return traj;
}

std::vector<double> metric_derivative_estimate(const Trajectory& traj) {
  std::vector<double> speeds;
  speeds.reserve(traj.increments.size());
  for (double d : traj.increments) speeds.push_back(d / traj.tau);
  return speeds;
}

double energy_identity_defect(const Trajectory& traj, const std::vector<double>& slopes) {
  if (slopes.size() != traj.states.size()) {
    throw ConfigError(fmt::format("energy identity needs one slope per state: got {}, expected {}",
                                  slopes.size(), traj.states.size()));
  }
  if (traj.energies.size() != traj.states.size()) {
    throw PreconditionError("trajectory energies and states disagree in length");
  }
  const double tau = traj.tau;
  double speed_term = 0.0;
  double slope_term = 0.0;
  for (std::size_t n = 1; n < traj.states.size(); ++n) {
    const double speed = traj.increments[n - 1] / tau;
    speed_term += 0.5 * tau * speed * speed;
    slope_term += 0.5 * tau * slopes[n] * slopes[n];
  }
  return speed_term + slope_term + traj.energies.back() - traj.energies.front();
}

MetricSpace make_toy_space() {
  MetricSpace s;
  s.phi = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
  s.dist2 = [](const Vector& a, const Vector& b) { return (a - b).squaredNorm(); };
  s.objective = [](double tau, const Vector& prev, const Vector& x) {
    ObjectiveValue o;
    o.value = 0.5 * x.squaredNorm() + (x - prev).squaredNorm() / (2.0 * tau);
    o.grad = x + (x - prev) / tau;
    return o;
  };
  return s;
}

MetricSpace make_plate_space(const PlateState& base, const ReducedForms& forms,
                             const LoadField& load, bool allow_unverified) {
  auto shared_base = std::make_shared<const PlateState>(base);
  MetricSpace s;
  s.phi = [=](const Vector& x) {
    return energy_phi0(with_interior(*shared_base, x), forms, load, allow_unverified).total;
  };
  s.dist2 = [=](const Vector& a, const Vector& b) {
    return dissipation_D0_squared(with_interior(*shared_base, a), with_interior(*shared_base, b),
                                  forms);
  };
  s.objective = [=](double tau, const Vector& prev, const Vector& trial) {
    return incremental_objective(tau, with_interior(*shared_base, prev),
                                 with_interior(*shared_base, trial), forms, load,
                                 allow_unverified);
  };
  s.preconditioner = [=](double tau, const Vector& prev) -> LinearMap {
    const GridSpec& grid = shared_base->grid;
    const CellDerivatives at = cell_derivatives(with_interior(*shared_base, prev));
    const Eigen::SparseMatrix<double> J = h_matrix(grid, at);
    const double area = grid.cell_area();
    const Mat3 wm = area * (forms.cw2 + forms.cd2 / tau);
    const Mat3 wb = wm / 12.0;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(grid.num_cells()) * 18);
    for (int c = 0; c < grid.num_cells(); ++c) {
      for (int r = 0; r < 3; ++r) {
        for (int q = 0; q < 3; ++q) {
          trip.emplace_back(6 * c + r, 6 * c + q, wm(r, q));
          trip.emplace_back(6 * c + 3 + r, 6 * c + 3 + q, wb(r, q));
        }
      }
    }
    Eigen::SparseMatrix<double> W(J.rows(), J.rows());
    W.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseMatrix<double> K = Eigen::SparseMatrix<double>(J.transpose()) * W * J;
    auto solver = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    solver->compute(K);
    if (solver->info() != Eigen::Success) return {};
    return [solver](const Vector& q) { return Vector(solver->solve(q)); };
  };
  return s;
}

}  // namespace vk
