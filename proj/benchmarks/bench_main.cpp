// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "arc/eberle.hpp"
#include "arc/experiments.hpp"
#include "arc/sde.hpp"

namespace {

const arc::CalibrationInputs kInputs{1.0, 1.0, 2.0, 1.0, 2};

void BM_CalibrationBuild(benchmark::State& state) {
    arc::CalibrationOptions opt;
    opt.grid_points = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(arc::EberleCalibration::build(kInputs, opt).rate());
    }
}
BENCHMARK(BM_CalibrationBuild)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_Rho2(benchmark::State& state) {
    const auto cal = arc::EberleCalibration::build(kInputs);
    arc::RandomStream rng(1);
    std::vector<arc::Vector> xs(256), ys(256);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = {4.0 * rng.normal(), 4.0 * rng.normal()};
        ys[i] = {4.0 * rng.normal(), 4.0 * rng.normal()};
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cal.rho2(xs[i & 255], ys[i & 255]));
        ++i;
    }
}
BENCHMARK(BM_Rho2);

void BM_CoupledStep(benchmark::State& state) {
    const auto loss = arc::ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0,
                                                      static_cast<std::size_t>(state.range(0)))
                          .build(1);
    const auto drv = arc::DriverSpec::continuous(loss, 1.0, 0.01);
    arc::CouplingSpec c;
    c.eps = 0.01;
    arc::RandomStream rng(2);
    arc::Vector x{1.0, 0.0}, y{-1.0, 0.0};
    for (auto _ : state) {
        auto s = arc::step_coupled(x, y, drv, drv, c, 0.01, rng);
        benchmark::DoNotOptimize(s.x.data());
    }
}
BENCHMARK(BM_CoupledStep)->Arg(8)->Arg(64);

void BM_PairTrajectory(benchmark::State& state) {
    const auto loss = arc::ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 8).build(1);
    const auto drv = arc::DriverSpec::continuous(loss, 1.0, 0.01);
    arc::PairSimulator sim(drv, drv, arc::CouplingSpec{}, arc::TimeGrid{1.0, 0.01, 100});
    const arc::Vector x0{1.0, 0.0}, y0{-1.0, 0.0};
    std::uint64_t k = 0;
    for (auto _ : state) {
        auto streams = arc::PairStreams::derive(1, "bench", k++);
        benchmark::DoNotOptimize(sim.run(x0, y0, streams, {}));
    }
}
BENCHMARK(BM_PairTrajectory)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
