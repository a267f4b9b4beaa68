#include "pstarmax/estimate.hpp"
#include "pstarmax/likelihood.hpp"
#include "pstarmax/simulate.hpp"
#include "pstarmax/spatial_weights.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace pstarmax;

struct Setup {
  ModelSpec spec;
  WeightMatrixSet w;
  ParameterVector theta;
  CountPanel y;
};

// Linear (1,1) model with one spatial order on an n x n grid.
Setup make_setup(int n, Index T) {
  Setup s;
  s.spec.link = Link::linear;
  s.spec.a = {1};
  s.spec.b = {1};
  s.w = build_grid_4nn({n});
  s.theta.delta = Eigen::VectorXd::Constant(1, 5.0);
  s.theta.alpha = {{0.2, 0.1}};
  s.theta.beta = {{0.2, 0.1}};
  SimulationConfig cfg;
  cfg.T = T;
  cfg.seed = 11;
  s.y = simulate_path(s.theta, s.spec, s.w, nullptr, cfg).counts;
  return s;
}

void BM_Simulate(benchmark::State& state) {
  const auto s = make_setup(static_cast<int>(state.range(0)), 10);
  SimulationConfig cfg;
  cfg.T = 250;
  cfg.copula = {CopulaFamily::clayton, 2.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_path(s.theta, s.spec, s.w, nullptr, cfg));
    ++cfg.seed;
  }
  state.SetItemsProcessed(state.iterations() * s.w.p() * (cfg.T + cfg.burn_in + 1));
}
BENCHMARK(BM_Simulate)->Arg(5)->Arg(9)->Unit(benchmark::kMillisecond);

void BM_LikelihoodValue(benchmark::State& state) {
  const auto s = make_setup(static_cast<int>(state.range(0)), state.range(1));
  const QuasiLikelihood ql(s.spec, s.w, s.y, nullptr);
  const Eigen::VectorXd theta = pack(s.theta);
  for (auto _ : state) benchmark::DoNotOptimize(ql.value(theta));
}
BENCHMARK(BM_LikelihoodValue)->Args({9, 250})->Args({9, 1000})->Args({20, 250})->Unit(benchmark::kMicrosecond);

void BM_LikelihoodScore(benchmark::State& state) {
  const auto s = make_setup(static_cast<int>(state.range(0)), state.range(1));
  const QuasiLikelihood ql(s.spec, s.w, s.y, nullptr);
  const Eigen::VectorXd theta = pack(s.theta);
  const bool with_info = state.range(2) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(ql.evaluate(theta, with_info));
}
BENCHMARK(BM_LikelihoodScore)
    ->Args({9, 250, 0})
    ->Args({9, 250, 1})
    ->Args({20, 250, 1})
    ->Unit(benchmark::kMicrosecond);

void BM_Fit(benchmark::State& state) {
  const auto s = make_setup(static_cast<int>(state.range(0)), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(fit(s.spec, s.w, s.y, nullptr));
}
BENCHMARK(BM_Fit)->Args({9, 250})->Args({9, 500})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
