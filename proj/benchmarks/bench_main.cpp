#include "oracles.hpp"

#include "swarmchor/filter.hpp"
#include "swarmchor/music.hpp"

#include <benchmark/benchmark.h>

using namespace swarmchor;

namespace {

ReferenceSet gridWave(int rows, int cols) {
    return oracle::compile(fmt::format("primitive wave from 0 to 6 {{amplitude=0.3}} layout=grid({},{},0.7)", rows, cols),
                           oracle::beatsEvery(0.5, 6.0));
}

// One receding-horizon step for the whole swarm, mid-show.
void BM_StepSwarm(benchmark::State& st) {
    const int n = static_cast<int>(st.range(0));
    const ReferenceSet refs = gridWave(n / 10 == 0 ? 1 : n / 10, n < 10 ? n : 10);
    FilterConfig config;
    config.threads = 1;
    const FilterContext ctx(discretizeModel(10.0, 5.0, 0.1), PhysicalLimits{}, config);
    std::vector<DroneState> states;
    for (int i = 0; i < refs.drones(); ++i) states.push_back(DroneState::hoverAt(refs.at(i, 20)));
    const std::vector<DronePlan> plans = initialPlans(refs);
    for (auto _ : st) benchmark::DoNotOptimize(stepSwarm(states, refs, plans, 20, ctx));
    st.counters["drones"] = refs.drones();
}
BENCHMARK(BM_StepSwarm)->Arg(1)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_RunFilter10(benchmark::State& st) {
    const ReferenceSet refs = gridWave(1, 10);
    FilterConfig config;
    config.threads = 1;
    const ClosedLoopModel m = discretizeModel(10.0, 5.0, 0.1);
    for (auto _ : st) benchmark::DoNotOptimize(runFilter(refs, m, PhysicalLimits{}, config));
}
BENCHMARK(BM_RunFilter10)->Unit(benchmark::kMillisecond);

void BM_BuildBasis(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(buildBasis(8, 15, 0.1));
}
BENCHMARK(BM_BuildBasis);

void BM_SpectralNovelty(benchmark::State& st) {
    const AudioSignal sig = oracle::clickTrack(120.0, static_cast<double>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(spectralNovelty(sig));
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(sig.samples.size()));
}
BENCHMARK(BM_SpectralNovelty)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
