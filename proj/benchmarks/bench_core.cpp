#include <benchmark/benchmark.h>

#include "pbdw/dictionary.hpp"
#include "pbdw/problems.hpp"
#include "pbdw/rng.hpp"

using namespace pbdw;

namespace {

struct DeskBench {
    Problem prob;
    ObservationSpace obs;
    Dictionary dict;
    SketchedOffline off;
    UEmbedding emb;
    std::vector<VectorXd> test_states;

    static DeskBench& instance() {
        static DeskBench bench = make();
        return bench;
    }

    static DeskBench make() {
        Problem prob = thermal_block(33);
        ObservationSpace obs = build_observation(
            *prob.space, sensors_radial(*prob.space, prob.mesh, sensor_pattern("m36")));
        const int K = 200;
        const auto params = sample_parameters(prob.model->box(), K, 90001);
        MatrixXd snaps(prob.space->dim(), K);
        for (int i = 0; i < K; ++i) snaps.col(i) = prob.model->solve_state(params[i]);
        Dictionary dict = build_dictionary(*prob.space, obs, snaps, K, &params);
        UEmbedding emb = UEmbedding::realize(
            {EmbeddingKind::gaussian, 100, 0,
             static_cast<int>(prob.space->factor().rows()), 90002},
            *prob.space);
        SketchedOffline off = sketched_offline(*prob.model, obs, dict.atoms, emb);
        std::vector<VectorXd> test_states;
        for (const auto& xi : sample_parameters(prob.model->box(), 8, 90003))
            test_states.push_back(prob.model->solve_state(xi));
        return {std::move(prob), std::move(obs), std::move(dict), std::move(off),
                std::move(emb), std::move(test_states)};
    }
};

void BM_StateSolve(benchmark::State& state) {
    auto& b = DeskBench::instance();
    const auto params = sample_parameters(b.prob.model->box(), 4, 90004);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(b.prob.model->solve_state(params[i++ % params.size()]));
    }
}
BENCHMARK(BM_StateSolve);

void BM_SketchPrimalGaussian(benchmark::State& state) {
    auto& b = DeskBench::instance();
    const VectorXd v = b.test_states[0];
    for (auto _ : state) benchmark::DoNotOptimize(b.emb.sketch_primal(v));
}
BENCHMARK(BM_SketchPrimalGaussian);

void BM_SketchDual(benchmark::State& state) {
    auto& b = DeskBench::instance();
    const VectorXd r = b.prob.space->gram() * b.test_states[0];
    for (auto _ : state) benchmark::DoNotOptimize(b.emb.sketch_dual(r));
}
BENCHMARK(BM_SketchDual);

void BM_Psrht(benchmark::State& state) {
    auto& b = DeskBench::instance();
    const UEmbedding psrht = UEmbedding::realize(
        {EmbeddingKind::psrht, 256, 0, static_cast<int>(b.prob.space->factor().rows()),
         90005},
        *b.prob.space);
    const VectorXd v = b.test_states[0];
    for (auto _ : state) benchmark::DoNotOptimize(psrht.sketch_primal(v));
}
BENCHMARK(BM_Psrht);

void BM_LarsPath(benchmark::State& state) {
    auto& b = DeskBench::instance();
    std::size_t i = 0;
    for (auto _ : state) {
        const VectorXd w = b.obs.observe(b.test_states[i++ % b.test_states.size()]);
        benchmark::DoNotOptimize(lars_path(b.dict, w));
    }
}
BENCHMARK(BM_LarsPath);

void BM_DictRecover(benchmark::State& state) {
    auto& b = DeskBench::instance();
    std::size_t i = 0;
    for (auto _ : state) {
        const VectorXd w = b.obs.observe(b.test_states[i++ % b.test_states.size()]);
        benchmark::DoNotOptimize(dict_recover(b.dict, b.obs, b.off, w));
    }
}
BENCHMARK(BM_DictRecover);

void BM_SurrogateSketched(benchmark::State& state) {
    auto& b = DeskBench::instance();
    CounterRng rng(90006);
    SparseCoeffs a;
    a.w_block = VectorXd::Zero(b.off.m);
    for (int i = 0; i < b.off.m; ++i) a.w_block(i) = rng.normal();
    for (int nz = 0; nz < 6; ++nz)
        a.dict_entries.emplace_back(static_cast<int>(rng.below(b.off.K)), rng.normal());
    for (auto _ : state) benchmark::DoNotOptimize(surrogate_sketched(b.off, a));
}
BENCHMARK(BM_SurrogateSketched);

void BM_Pod(benchmark::State& state) {
    auto& b = DeskBench::instance();
    MatrixXd snaps(b.prob.space->dim(), 64);
    for (int i = 0; i < 64; ++i) snaps.col(i) = b.dict.atoms.columns.col(i % b.dict.K());
    for (auto _ : state)
        benchmark::DoNotOptimize(pod(*b.prob.space, BasisMatrix{snaps, false}, 36));
}
BENCHMARK(BM_Pod);

}  // namespace

BENCHMARK_MAIN();
