#include <benchmark/benchmark.h>

#include "qlink/analysis.hpp"
#include "qlink/config.hpp"
#include "qlink/fiber.hpp"
#include "qlink/node.hpp"
#include "qlink/sequencer.hpp"

using namespace qlink;

namespace {

LinkConfig shipped(const char* name) { return load_config(std::string(QLINK_SOURCE_ROOT) + "/configs/" + name); }

void BM_Session(benchmark::State& state) {
    const LinkConfig cfg = shipped("km20.cfg");
    SessionOptions o;
    o.n_trials = static_cast<std::uint64_t>(state.range(0));
    for (auto _ : state) {
        ++o.seed;
        benchmark::DoNotOptimize(run_session(cfg, o).heralds);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Session)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

void BM_Compensate(benchmark::State& state) {
    Rng rng(1);
    for (auto _ : state) {
        CompensationState s;
        s.fiber_unitary = haar_random_unitary(rng);
        benchmark::DoNotOptimize(compensate(s).last_error);
    }
}
BENCHMARK(BM_Compensate)->Unit(benchmark::kMicrosecond);

void BM_FitFringe(benchmark::State& state) {
    FringeDataset d;
    for (int i = 0; i < 8; ++i) {
        const double x = 11.25 * i;
        d.settings.push_back(x);
        d.singles.push_back(920);
        d.coincidences.push_back(460 * (1 + 0.89 * std::cos(4 * x * 3.141592653589793 / 180)));
    }
    const PeriodMode mode = state.range(0) ? PeriodMode::free : PeriodMode::fixed;
    for (auto _ : state) benchmark::DoNotOptimize(fit_fringe(d, mode, 90.0).V);
}
BENCHMARK(BM_FitFringe)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_MemoryChannel(benchmark::State& state) {
    const NodeParams p;
    const TwoQubitState rho = initial_state(p);
    Rng rng(2);
    for (auto _ : state) benchmark::DoNotOptimize(apply_memory_channel(rho, 99.25, p, rng).bell_fidelity());
}
BENCHMARK(BM_MemoryChannel);

void BM_ReadoutSample(benchmark::State& state) {
    const NodeParams p;
    const AtomState atom = initial_state(p).reduced_atom();
    Rng rng(3);
    for (auto _ : state) benchmark::DoNotOptimize(readout_sample(atom, ReadoutBasis::x, 99.25, p, true, rng).retrieved);
}
BENCHMARK(BM_ReadoutSample);

}  // namespace

BENCHMARK_MAIN();
