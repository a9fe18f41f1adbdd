#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vk/errors.hpp"
#include "vk/gradient_flow.hpp"

using namespace vk;
using namespace vk::testing;

namespace {

Trajectory toy_run(double tau, double t_end, double x0 = 1.0) {
  return mm_run(make_toy_space(), tau, t_end, Vector::Constant(1, x0));
}

std::vector<double> toy_slopes(const Trajectory& t) {
  std::vector<double> s;
  for (const Vector& x : t.states) s.push_back(std::abs(x(0)));
  return s;
}

}  // namespace

TEST(MmStep, ToyClosedForm) {
  const MetricSpace space = make_toy_space();
  for (double tau : {1e-3, 0.1, 2.0}) {
    const StepResult r = mm_step(space, tau, Vector::Constant(1, 0.8));
    EXPECT_NEAR(r.state(0), 0.8 / (1 + tau), 1e-10);
    EXPECT_TRUE(r.stats.converged);
  }
}

TEST(MmStep, StationaryPointIsKept) {
  const StepResult r = mm_step(make_toy_space(), 0.1, Vector::Zero(1));
  EXPECT_EQ(r.state(0), 0.0);
  EXPECT_EQ(r.stats.iterations, 0);

  const GridSpec g = GridSpec::make(1, 1, 9, 9);
  const PlateState flat = zero_state(g);
  const MetricSpace plate = make_plate_space(flat, unit_forms(), {});
  const StepResult p = mm_step(plate, 0.05, pack_interior(flat));
  EXPECT_EQ(p.state.norm(), 0.0);
}

TEST(MmStep, RejectsBadInputs) {
  EXPECT_THROW(mm_step(make_toy_space(), 0.0, Vector::Zero(1)), ConfigError);

  MetricSpace nan_space = make_toy_space();
  nan_space.objective = [](double, const Vector&, const Vector& x) {
    return ObjectiveValue{std::nan(""), Vector::Zero(x.size())};
  };
  EXPECT_THROW(mm_step(nan_space, 0.1, Vector::Ones(1)), NumericError);

  // A gradient pointing uphill defeats every backtracking step.
  MetricSpace uphill = make_toy_space();
  uphill.objective = [](double tau, const Vector& prev, const Vector& x) {
    const Vector d = x - prev;
    return ObjectiveValue{0.5 * x.squaredNorm() + d.squaredNorm() / (2 * tau),
                          -(x + d / tau)};
  };
  EXPECT_THROW(mm_step(uphill, 0.1, Vector::Ones(1)), StepFailure);
  const Trajectory t = mm_run(uphill, 0.1, 0.5, Vector::Ones(1));
  EXPECT_FALSE(t.complete);
  EXPECT_EQ(t.steps(), 0);
  EXPECT_NE(t.failure.find("step 1"), std::string::npos);
}

TEST(Lbfgs, MinimizesRosenbrock) {
  auto f = [](const Vector& x) {
    const double a = 1 - x(0), b = x(1) - x(0) * x(0);
    Vector g(2);
    g << -2 * a - 400 * x(0) * b, 200 * b;
    return ObjectiveValue{a * a + 100 * b * b, g};
  };
  InnerOptions opt;
  opt.eps_inner = 1e-10;
  const StepResult r = lbfgs_minimize(f, Vector::Constant(2, -1.2), opt);
  EXPECT_TRUE(r.stats.converged);
  EXPECT_NEAR(r.state(0), 1.0, 1e-6);
  EXPECT_NEAR(r.state(1), 1.0, 1e-6);
}

TEST(MmRun, ToyMatchesExponential) {
  const Trajectory t = toy_run(1e-3, 1.0);
  EXPECT_EQ(t.steps(), 1000);
  EXPECT_LE(std::abs(t.at_time(1.0)(0) - std::exp(-1.0)), 5e-3);
  EXPECT_EQ(t.certificate_failures, 0);
  const std::vector<double> speeds = metric_derivative_estimate(t);
  EXPECT_NEAR(speeds[499] / std::exp(-0.5), 1.0, 0.02);
  for (std::size_t n = 1; n < t.energies.size(); ++n) EXPECT_LE(t.energies[n], t.energies[n - 1]);
}

TEST(MmRun, ZeroStepsAndStepCounts) {
  const Trajectory t = toy_run(0.1, 0.0);
  EXPECT_EQ(t.states.size(), 1u);
  EXPECT_EQ(step_count(0.1, 1.0), 10);
  EXPECT_EQ(step_count(1e-3, 1.0), 1000);
  EXPECT_EQ(step_count(0.3, 1.0), 4);
  EXPECT_THROW(step_count(-1.0, 1.0), ConfigError);
}

TEST(MmRun, PiecewiseConstantInterpolation) {
  const Trajectory t = toy_run(0.25, 1.0);
  EXPECT_EQ(&t.at_time(0.0), &t.states[0]);
  EXPECT_EQ(&t.at_time(0.1), &t.states[1]);
  EXPECT_EQ(&t.at_time(0.25), &t.states[1]);
  EXPECT_EQ(&t.at_time(0.26), &t.states[2]);
  EXPECT_EQ(&t.at_time(1.0), &t.states[4]);
  EXPECT_EQ(&t.at_time(7.0), &t.states[4]);
}

TEST(MmRun, StationaryTrajectory) {
  const Trajectory t = toy_run(0.1, 0.5, 0.0);
  for (double s : metric_derivative_estimate(t)) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(energy_identity_defect(t, toy_slopes(t)), 0.0);
  EXPECT_THROW(energy_identity_defect(t, {0.0}), ConfigError);
}

TEST(MmRun, ToyEnergyIdentityLadder) {
  const Trajectory a = toy_run(1e-2, 1.0), b = toy_run(5e-3, 1.0);
  const double da = energy_identity_defect(a, toy_slopes(a));
  const double db = energy_identity_defect(b, toy_slopes(b));
  EXPECT_LT(std::abs(db), std::abs(da));
}

TEST(MmRun, PlateRelaxationCertificates) {
  const GridSpec g = GridSpec::make(1, 1, 13, 13);
  auto bc = std::make_shared<const BoundaryData>(BoundaryData::from_functions(
      g, [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
      [](double x, double) { return 0.5 * x * x; }, [](double x, double) { return x; },
      [](double, double) { return 0.0; }));
  const PlateState s0 = make_state(g, bc, bc->u1_hat, bc->u2_hat, bc->v_hat);
  const MetricSpace space = make_plate_space(s0, unit_forms(), {});
  const double tau = 0.02;
  const Trajectory t = mm_run(space, tau, 0.2, pack_interior(s0));
  ASSERT_TRUE(t.complete);
  EXPECT_EQ(t.certificate_failures, 0);
  double dissipated = 0.0;
  for (int n = 1; n <= t.steps(); ++n) {
    const double d = t.increments[n - 1];
    EXPECT_GE(d, 0.0);
    EXPECT_LE(t.energies[n] + d * d / (2 * tau), t.energies[n - 1] + t.eps_cert);
    dissipated += d * d / (2 * tau);
  }
  EXPECT_LE(dissipated, t.energies.front() - t.energies.back() + t.steps() * t.eps_cert);
  EXPECT_LT(t.energies.back(), t.energies.front());

  const Trajectory again = mm_run(space, tau, 0.2, pack_interior(s0));
  for (std::size_t n = 0; n < t.states.size(); ++n) {
    EXPECT_EQ(t.states[n], again.states[n]);
    EXPECT_EQ(t.energies[n], again.energies[n]);
  }
}

TEST(MmRun, OnStepCallbackSeesEveryState) {
  RunOptions opt;
  std::vector<int> seen;
  opt.on_step = [&](int n, const Vector&) { seen.push_back(n); };
  mm_run(make_toy_space(), 0.1, 0.3, Vector::Ones(1), opt);
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3}));
}
