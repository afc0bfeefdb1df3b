#include <benchmark/benchmark.h>

#include "keyflow/registration.hpp"
#include "keyflow/rng.hpp"

namespace {

void BM_kabsch_fit(benchmark::State& state) {
    const Eigen::Index n = state.range(0);
    keyflow::Rng rng(11);
    keyflow::PointCloud src;
    src.points.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) src.points(i, k) = rng.uniform(-0.1, 0.1);
    keyflow::RigidTransform t = keyflow::random_rotation(3);
    t.translation = {0.05, -0.02, 0.11};
    const keyflow::PointCloud tgt = keyflow::apply_transform(t, src);
    for (auto _ : state)
        benchmark::DoNotOptimize(keyflow::kabsch_fit(src, tgt));
}
BENCHMARK(BM_kabsch_fit)->Arg(256)->Arg(2048);

}  // namespace
