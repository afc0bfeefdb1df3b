#include <benchmark/benchmark.h>

#include "keyflow/pointcloud.hpp"
#include "keyflow/rng.hpp"
#include "keyflow/synth.hpp"

namespace {

keyflow::PointCloud test_cloud(int n) {
    keyflow::Rng rng(7);
    return keyflow::make_box({0.12, 0.08, 0.03}, {0.5, 0.5, 0.5}, n, rng);
}

void BM_voxel_downsample(benchmark::State& state) {
    const keyflow::PointCloud cloud = test_cloud(static_cast<int>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(keyflow::voxel_downsample(cloud, 0.004));
}
BENCHMARK(BM_voxel_downsample)->Arg(2048)->Arg(5000);

void BM_resample(benchmark::State& state) {
    const keyflow::PointCloud cloud = test_cloud(5000);
    std::uint64_t seed = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(keyflow::resample(cloud, state.range(0), seed++));
}
BENCHMARK(BM_resample)->Arg(256)->Arg(2048);

void BM_preprocess_desk(benchmark::State& state) {
    const keyflow::PointCloud cloud = test_cloud(2200);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        auto [centred, centroid] = keyflow::center(cloud);
        benchmark::DoNotOptimize(
            keyflow::resample(keyflow::voxel_downsample(centred, 0.004), 256, seed++));
        benchmark::DoNotOptimize(centroid);
    }
}
BENCHMARK(BM_preprocess_desk);

}  // namespace

BENCHMARK_MAIN();
