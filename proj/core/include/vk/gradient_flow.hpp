#pragma once

// Minimizing movements over an abstract metric space of coordinate vectors.
//
// Each step minimizes phi(y) + dist(prev, y)^2 / (2 tau) locally with L-BFGS,
// warm-started at prev. The scheme asks for a global minimizer; only the
// decrease against the warm start is enforced and certified here.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vk/energy2d.hpp"
#include "vk/plate_field.hpp"
#include "vk/tensor_core.hpp"

namespace vk {

using Vector = Eigen::VectorXd;
/// Approximate inverse Hessian application used as the L-BFGS initial matrix.
using LinearMap = std::function<Vector(const Vector&)>;

struct MetricSpace {
  std::function<double(const Vector&)> phi;
  std::function<double(const Vector&, const Vector&)> dist2;
  /// Value and gradient of phi(trial) + dist2(prev, trial) / (2 tau).
  std::function<ObjectiveValue(double tau, const Vector& prev, const Vector& trial)> objective;
  /// Optional map onto admissible states; identity when empty.
  std::function<Vector(const Vector&)> project;
  /// Optional preconditioner factory for the step leaving `prev`.
  std::function<LinearMap(double tau, const Vector& prev)> preconditioner;
};

struct InnerOptions {
  int memory = 10;
  double eps_inner = 1e-10;  // relative to 1 + |objective|
  int max_iters = 5000;
  double armijo_c1 = 1e-4;
  int max_halvings = 60;
};

struct StepStats {
  int iterations = 0;
  double grad_norm = 0.0;  // sup norm at the returned point
  double objective = 0.0;
  bool converged = false;
};

struct StepResult {
  Vector state;
  StepStats stats;
};

/// One minimizing-movement step. Throws ConfigError for tau <= 0, StepFailure when the line
/// search exhausts its halvings, NumericError for a non-finite objective at the warm start.
StepResult mm_step(const MetricSpace& space, double tau, const Vector& prev,
                   const InnerOptions& options = {});

/// L-BFGS with Armijo backtracking on a smooth function; exposed for reuse and testing.
StepResult lbfgs_minimize(const std::function<ObjectiveValue(const Vector&)>& f, const Vector& x0,
                          const InnerOptions& options, const LinearMap& h0 = {});

struct Trajectory {
  double tau = 0.0;
  std::vector<Vector> states;        // Y_0 .. Y_N
  std::vector<double> energies;      // phi(Y_n)
  std::vector<double> increments;    // d_n = dist(Y_{n-1}, Y_n), n = 1..N
  std::vector<double> slopes;        // empty unless recorded; one per state
  std::vector<StepStats> stats;      // one per step
  double eps_cert = 0.0;
  int certificate_failures = 0;
  bool complete = true;
  std::string failure;

  int steps() const { return static_cast<int>(increments.size()); }
  double time(int n) const { return n * tau; }
  /// Piecewise-constant interpolation: Y_n on ((n-1) tau, n tau], Y_0 at t <= 0.
  const Vector& at_time(double t) const;
};

struct RunOptions {
  InnerOptions inner;
  /// When set, evaluated at every state and stored in Trajectory::slopes.
  std::function<double(const Vector&)> slope;
  /// Called after each accepted step with (n, Y_n).
  std::function<void(int, const Vector&)> on_step;
};

/// Number of steps covering [0, t_end]; ratios within 1e-9 of an integer are rounded.
int step_count(double tau, double t_end);

/// Iterates mm_step step_count(tau, t_end) times. A StepFailure ends the run with
/// `complete = false` and the failure message recorded.
Trajectory mm_run(const MetricSpace& space, double tau, double t_end, const Vector& init,
                  const RunOptions& options = {});

/// Discrete metric speeds d_n / tau.
std::vector<double> metric_derivative_estimate(const Trajectory& traj);

/// 1/2 sum tau (d_n/tau)^2 + 1/2 sum tau g_n^2 + phi(Y_N) - phi(Y_0), with right-endpoint slopes
/// g_1..g_N taken from `slopes` (one entry per state).
double energy_identity_defect(const Trajectory& traj, const std::vector<double>& slopes);

/// phi(x) = |x|^2/2 with Euclidean distance.
MetricSpace make_toy_space();

/// Plate states on the grid and boundary data of `base`, coordinates = interior values.
/// The preconditioner is a sparse factorization of the Gauss-Newton Hessian at prev.
MetricSpace make_plate_space(const PlateState& base, const ReducedForms& forms,
                             const LoadField& load, bool allow_unverified = false);

}  // namespace vk
