// Serial reference vs OpenMP kernels. Pass --benchmark_filter to narrow.

#include "flowfilt/ensemble_stats.hpp"
#include "flowfilt/kernels.hpp"
#include "flowfilt/lyapunov.hpp"
#include "flowfilt/sde_integrator.hpp"

#include <benchmark/benchmark.h>

using namespace flowfilt;

namespace {

Homotopy bench_homotopy(int n) {
  Matrix p = Matrix::Identity(n, n);
  for (int i = 0; i + 1 < n; ++i) p(i, i + 1) = p(i + 1, i) = 0.3;
  Matrix h = Matrix::Zero(1, n);
  h(0, 0) = 1.0;
  return Homotopy(from_gaussian_prior(Vector::Zero(n), p),
                  from_linear_gaussian_measurement(h, Matrix::Constant(1, 1, 0.5), Vector::Ones(1)));
}

Execution exec_of(const benchmark::State& state) {
  return state.range(2) == 0 ? Execution::serial : Execution::parallel;
}

void BM_EulerStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto hom = bench_homotopy(n);
  Ensemble ens = sample_prior(hom, static_cast<std::size_t>(state.range(1)), 1);
  const auto coef = flow_coefficients(hom, 0.5, 0.5 * Matrix::Identity(n, n));
  std::uint32_t step = 0;
  for (auto _ : state) {
    kernels::euler_maruyama(ens.particles, ens.ids, coef, 1e-4, NoiseKey{9, StreamDomain::flow_noise}, step++,
                            exec_of(state));
    benchmark::DoNotOptimize(ens.particles.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_Rk4Step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto hom = bench_homotopy(n);
  Ensemble ens = sample_prior(hom, static_cast<std::size_t>(state.range(1)), 1);
  const Matrix zero = Matrix::Zero(n, n);
  const auto a = flow_coefficients(hom, 0.5, zero);
  const auto b = flow_coefficients(hom, 0.50005, zero);
  const auto c = flow_coefficients(hom, 0.5001, zero);
  for (auto _ : state) {
    kernels::rk4_affine(ens.particles, a, b, c, 1e-4, exec_of(state));
    benchmark::DoNotOptimize(ens.particles.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_Records(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto hom = bench_homotopy(n);
  const Ensemble ens = sample_prior(hom, static_cast<std::size_t>(state.range(1)), 1);
  const auto frame = make_frame(hom, 0.0, Matrix::Identity(n, n));
  for (auto _ : state) {
    auto recs = kernels::evaluate_records(frame, ens, exec_of(state));
    benchmark::DoNotOptimize(recs.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_SampleMoments(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Ensemble ens = sample_prior(bench_homotopy(n), static_cast<std::size_t>(state.range(1)), 1);
  for (auto _ : state) {
    auto sm = sample_moments(ens, exec_of(state));
    benchmark::DoNotOptimize(sm.mean.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

// args: dimension, particles, parallel?
void kernel_args(benchmark::internal::Benchmark* b) {
  for (int n : {1, 4}) {
    for (int par : {0, 1}) b->Args({n, 50000, par});
  }
  b->ArgNames({"n", "N", "parallel"});
}

}  // namespace

BENCHMARK(BM_EulerStep)->Apply(kernel_args);
BENCHMARK(BM_Rk4Step)->Apply(kernel_args);
BENCHMARK(BM_Records)->Apply(kernel_args);
BENCHMARK(BM_SampleMoments)->Apply(kernel_args);

BENCHMARK_MAIN();
