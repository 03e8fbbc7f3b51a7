#include <benchmark/benchmark.h>

#include "dyncontract/auxcost.hpp"
#include "dyncontract/mechanism.hpp"
#include "dyncontract/parallel.hpp"
#include "dyncontract/solver.hpp"

using namespace dyncontract;

namespace {

Exec mode(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

RelaxedSolution fixture_solution(const ModelPrimitives& m, int T) {
    const double lo = full_info_utility(m, Type::low, T).V, hi = full_info_utility(m, Type::high, T).V;
    return solve_relaxed(m, {T, lo, 0.5 * (lo + hi)});
}

// range(0): 0 serial, 1 parallel
void BM_ic_enumeration(benchmark::State& st) {
    const auto m = default_fixture();
    const auto sol = fixture_solution(m, 3);
    for (auto _ : st)
        benchmark::DoNotOptimize(check_IC_exhaustive(m, sol.mechanism, 1e-8, 10'000'000, mode(st)));
}
BENCHMARK(BM_ic_enumeration)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_bellman_grid(benchmark::State& st) {
    const auto m = default_fixture();
    const auto sol = fixture_solution(m, 2);
    for (auto _ : st)
        benchmark::DoNotOptimize(bellman_crosscheck(m, sol, 200, mode(st)));
}
BENCHMARK(BM_bellman_grid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_brute_force_chi(benchmark::State& st) {
    const auto base = default_fixture();
    const ModelPrimitives m(base.prefs(), base.types(), IncomeModel{{1.0, 2.5, 4.0}, {0.3, 0.4, 0.3}, {0.1, 0.3, 0.6}},
                            SignalStructure::realization_independent(3));
    for (auto _ : st)
        benchmark::DoNotOptimize(brute_force_chi(m, {2.0, 0.4}, 2e-3, mode(st)));
}
BENCHMARK(BM_brute_force_chi)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_profit_grid(benchmark::State& st) {
    const auto m = default_fixture();
    const double lo = full_info_utility(m, Type::low, 2).V, hi = full_info_utility(m, Type::high, 2).V;
    std::vector<std::pair<double, double>> grid;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            grid.emplace_back(lo + 0.05 * i, lo + (hi - lo) * j / 7.0);
    for (auto _ : st)
        benchmark::DoNotOptimize(profit_function(m, 2, grid, 1e-4, mode(st)));
}
BENCHMARK(BM_profit_grid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

int main(int argc, char** argv) {
    set_kernel_threads(4);
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv))
        return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
