#include <benchmark/benchmark.h>

#include "homlab/corrector.hpp"
#include "homlab/elliptic.hpp"
#include "homlab/ensemble.hpp"

using namespace homlab;

namespace {

CoefficientField field(int d, int L) {
    CounterRng rng(7);
    return sample_field(SingleSiteMeasure::two_point(0.5, 0.25), TorusGrid(d, L), rng);
}

ScalarField rhs(int d, int L) { return discretize_rhs(RhsDescriptor::named("default", d), TorusGrid(d, L)); }

void BM_ApplyOperator(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0)), L = static_cast<int>(state.range(1));
    const CoefficientField a = field(d, L);
    const ScalarField v = rhs(d, L);
    for (auto _ : state) benchmark::DoNotOptimize(apply_operator(a, v));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(a.grid.size()));
}

void BM_SpectralSolve(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0)), L = static_cast<int>(state.range(1));
    const SpectralSolver solver(TorusGrid(d, L), 0.6 * Matrix::Identity(d, d));
    const ScalarField f = rhs(d, L);
    for (auto _ : state) benchmark::DoNotOptimize(solver.solve(f));
}

void BM_PreconditionedCG(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0)), L = static_cast<int>(state.range(1));
    const VariableSolver solver(field(d, L));
    const ScalarField f = rhs(d, L);
    std::size_t iters = 0;
    for (auto _ : state) {
        const SolveResult r = solver.solve(f);
        iters = r.diagnostics.iterations;
        benchmark::DoNotOptimize(r.u.values.data());
    }
    state.counters["iterations"] = static_cast<double>(iters);
}

void BM_Correctors(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0)), L = static_cast<int>(state.range(1));
    const CoefficientField a = field(d, L);
    for (auto _ : state) benchmark::DoNotOptimize(solve_correctors(a));
}

}  // namespace

BENCHMARK(BM_ApplyOperator)->Args({2, 64})->Args({3, 32});
BENCHMARK(BM_SpectralSolve)->Args({2, 64})->Args({3, 32})->Args({3, 30});
BENCHMARK(BM_PreconditionedCG)->Args({2, 64})->Args({3, 16})->Args({3, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Correctors)->Args({2, 32})->Args({3, 16})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
