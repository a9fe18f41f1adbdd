#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>
#include <random>

#include "vk/energy2d.hpp"
#include "vk/gradient_flow.hpp"
#include "vk/slope2d.hpp"
#include "vk/thin3d.hpp"

using namespace vk;

namespace {

PlateState bent_state(int cells) {
  const GridSpec g = GridSpec::make(1, 1, cells + 1, cells + 1);
  auto zero = [](double, double) { return 0.0; };
  auto bc = std::make_shared<const BoundaryData>(BoundaryData::from_functions(
      g, zero, zero, [](double x, double) { return 0.5 * x * x; },
      [](double x, double) { return x; }, zero));
  PlateState s = make_state(g, bc, bc->u1_hat, bc->u2_hat, bc->v_hat);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e-3, 1e-3);
  Eigen::VectorXd x = pack_interior(s);
  for (auto& v : x) v += u(rng);
  return with_interior(s, x);
}

}  // namespace

static void Phi0Gradient(benchmark::State& state) {
  const PlateState s = bent_state(static_cast<int>(state.range(0)));
  const ReducedForms f = ReducedForms::from_material(MaterialSpec{});
  for (auto _ : state) {
    benchmark::DoNotOptimize(grad_phi0(s, f, {}));
  }
  state.SetComplexityN(s.grid.num_interior());
}
BENCHMARK(Phi0Gradient)->RangeMultiplier(2)->Range(16, 128)->Complexity();

static void IncrementalObjective(benchmark::State& state) {
  const PlateState prev = bent_state(static_cast<int>(state.range(0)));
  const PlateState trial = bent_state(static_cast<int>(state.range(0)));
  const ReducedForms f = ReducedForms::from_material(MaterialSpec{});
  for (auto _ : state) {
    benchmark::DoNotOptimize(incremental_objective(0.01, prev, trial, f, {}));
  }
}
BENCHMARK(IncrementalObjective)->RangeMultiplier(2)->Range(16, 128);

static void MmStep(benchmark::State& state) {
  const PlateState s = bent_state(static_cast<int>(state.range(0)));
  const MetricSpace space = make_plate_space(s, ReducedForms::from_material(MaterialSpec{}), {});
  const Vector x = pack_interior(s);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mm_step(space, 0.01, x));
  }
}
BENCHMARK(MmStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void LocalSlope(benchmark::State& state) {
  const PlateState s = bent_state(static_cast<int>(state.range(0)));
  const ReducedForms f = ReducedForms::from_material(MaterialSpec{});
  CgOptions opt;
  opt.preconditioner = state.range(1) ? SlopePreconditioner::SparseCholesky
                                      : SlopePreconditioner::Jacobi;
  for (auto _ : state) {
    benchmark::DoNotOptimize(local_slope(s, f, {}, opt).slope);
  }
}
BENCHMARK(LocalSlope)->Args({32, 0})->Args({32, 1})->Args({64, 1})->Unit(benchmark::kMillisecond);

static void ThinPlateEnergy(benchmark::State& state) {
  const ThinDeformation def(Generator::pure_bend(1.0), 0.05);
  QuadratureSpec q;
  q.cells1 = q.cells2 = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(energy_phi_h(def, MaterialSpec{}, q).total);
  }
}
BENCHMARK(ThinPlateEnergy)->RangeMultiplier(2)->Range(8, 64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
