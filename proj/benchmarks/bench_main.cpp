#include <benchmark/benchmark.h>

#include "drmpc/experiments.hpp"

using namespace drmpc;

namespace {

struct MassSpringProgram {
    Preset preset = preset_mass_spring();
    StackedHorizon stacked;
    DisturbanceMoments moments;
    AmbiguitySet ambiguity;

    explicit MassSpringProgram(int n_samples)
        : stacked(build_stacked(preset.system, preset.loop.N, preset.x0)),
          moments(DisturbanceMoments::iid(preset.loop.mu_step, preset.loop.sigma_step,
                                          preset.loop.N)),
          ambiguity(make_ambiguity(n_samples)) {}

    AmbiguitySet make_ambiguity(int n_samples) const {
        Rng rng(99);
        DisturbanceStore store(preset.system.n_w);
        for (int k = 0; k < preset.loop.N + n_samples - 1; ++k)
            store.push(preset.disturbance.sample(rng));
        return AmbiguitySet::create(window_samples(store, preset.loop.N, n_samples),
                                    preset.loop.window_support, preset.loop.epsilon,
                                    preset.loop.ground_norm);
    }
};

void BM_BuildStacked(benchmark::State& state) {
    Preset p = preset_mass_spring();
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_stacked(p.system, p.loop.N, p.x0));
    }
}
BENCHMARK(BM_BuildStacked);

void BM_Assemble(benchmark::State& state) {
    MassSpringProgram fixture(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(assemble(fixture.stacked, fixture.preset.loop.weights,
                                          fixture.moments, fixture.preset.loop.bounds,
                                          fixture.ambiguity));
    }
}
BENCHMARK(BM_Assemble)->Arg(1)->Arg(5)->Arg(10);

void BM_SolvePolicy(benchmark::State& state) {
    MassSpringProgram fixture(static_cast<int>(state.range(0)));
    const QpProblem qp = assemble(fixture.stacked, fixture.preset.loop.weights, fixture.moments,
                                  fixture.preset.loop.bounds, fixture.ambiguity);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_policy(qp, fixture.preset.loop.solver));
    }
}
BENCHMARK(BM_SolvePolicy)->Arg(1)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_ClosedLoopStep(benchmark::State& state) {
    Preset p = preset_mass_spring();
    Rng rng(7);
    for (auto _ : state) {
        state.PauseTiming();
        DisturbanceStore store(p.system.n_w);
        for (int k = 0; k < 3 * p.loop.N; ++k) store.push(p.disturbance.sample(rng));
        ClosedLoop loop(p.system, p.loop, p.x0, std::move(store));
        const Vector w = p.disturbance.sample(rng);
        state.ResumeTiming();
        benchmark::DoNotOptimize(loop.step(w));
    }
}
BENCHMARK(BM_ClosedLoopStep)->Unit(benchmark::kMillisecond);

void BM_SolveRandomBoxQp(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(11);
    Matrix M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = 2.0 * rng.uniform() - 1.0;
    Matrix P = M.transpose() * M + 0.3 * Matrix::Identity(n, n);
    Vector q(n);
    for (int i = 0; i < n; ++i) q[i] = 2.0 * rng.uniform() - 1.0;
    Matrix G(2 * n, n);
    G.topRows(n) = Matrix::Identity(n, n);
    G.bottomRows(n) = -Matrix::Identity(n, n);
    Vector h = Vector::Ones(2 * n);
    QpInstance inst = QpInstance::from_dense(P, q, G, h);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve(inst));
    }
}
BENCHMARK(BM_SolveRandomBoxQp)->Arg(10)->Arg(30);

}  // namespace

BENCHMARK_MAIN();
