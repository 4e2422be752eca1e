// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include "fcomb/design.hpp"
#include "fcomb/parallel.hpp"
#include "fcomb/subset.hpp"
#include "fcomb/synthgen.hpp"
#include "fcomb/trees.hpp"

namespace {

using namespace fcomb;

const LagDesign& bench_design() {
  static const LagDesign d = [] {
    const SeriesPanel panel = generate_panel(default_dgp_spec(3, 522));
    return build_lag_design(panel, panel.disease_names().front(), 1, PredictorSpec::C);
  }();
  return d;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

void BM_random_forest(benchmark::State& state) {
  const LagDesign& d = bench_design();
  const Eigen::MatrixXd x = d.x.topRows(360);
  const Eigen::VectorXd y = d.y.head(360);
  ForestParams params;
  params.trees = 50;
  params.seed = 11;
  for (auto _ : state) benchmark::DoNotOptimize(fit_random_forest(x, y, params, exec_of(state)));
}

void BM_gbm(benchmark::State& state) {
  const LagDesign& d = bench_design();
  const Eigen::MatrixXd x = d.x.topRows(360);
  const Eigen::VectorXd y = d.y.head(360);
  GbmParams params;
  params.trees = 100;
  for (auto _ : state) benchmark::DoNotOptimize(fit_gbm(x, y, params, exec_of(state)));
}

void BM_subset_ensemble(benchmark::State& state) {
  const LagDesign& d = bench_design();
  const SubsetPlan plan = plan_for(d, Scheme::P10, 2, 5);
  for (auto _ : state) benchmark::DoNotOptimize(fit_subset_ensemble(d, 360, plan, exec_of(state)));
}

void BM_projection_ensemble(benchmark::State& state) {
  const LagDesign& d = bench_design();
  const SubsetPlan plan = plan_for(d, Scheme::P11, 3, 5);
  for (auto _ : state) benchmark::DoNotOptimize(fit_subset_ensemble(d, 360, plan, exec_of(state)));
}

// Arg 0 = serial reference, 1 = parallel
BENCHMARK(BM_random_forest)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gbm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_subset_ensemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_projection_ensemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
