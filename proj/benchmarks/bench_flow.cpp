#include <benchmark/benchmark.h>

#include "keyflow/config.hpp"
#include "keyflow/flow.hpp"

namespace {

using namespace keyflow;

struct FlowFixture {
    NetConfig net;
    ParamStore params;
    Cond cond;
    Mat xt_a, xt_b;
    Mat target_a, target_b;

    explicit FlowFixture(int n_points) {
        net = desk_profile().net(3);
        Rng init_rng(5);
        init_params(params, net, init_rng);
        Rng rng(17);
        auto random_rows = [&rng](Eigen::Index n, Eigen::Index c, double scale) {
            Mat m(n, c);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
            return m;
        };
        cond.enc_a = random_rows(n_points, 6, 0.05);
        cond.enc_b = random_rows(n_points, 6, 0.05);
        cond.instruction_id = 0;
        xt_a = random_rows(n_points, 3, 0.05);
        xt_b = random_rows(n_points, 3, 0.05);
        target_a = random_rows(n_points, 3, 0.05);
        target_b = random_rows(n_points, 3, 0.05);
    }
};

void BM_velocity_forward(benchmark::State& state) {
    FlowFixture fx(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        Tape tape;
        ParamTape pt(tape, fx.params);
        benchmark::DoNotOptimize(
            tape.value(velocity_node(pt, fx.net, fx.xt_a, fx.xt_b, 0.5, fx.cond)));
    }
}
BENCHMARK(BM_velocity_forward)->Arg(256);

void BM_train_step(benchmark::State& state) {
    FlowFixture fx(static_cast<int>(state.range(0)));
    StepSample sample;
    sample.t = 0.5;
    sample.xt_a = fx.xt_a;
    sample.xt_b = fx.xt_b;
    sample.drift_a = fx.target_a;
    sample.drift_b = fx.target_b;
    const AdamConfig adam;
    for (auto _ : state) {
        Tape tape;
        ParamTape pt(tape, fx.params);
        const Tape::NodeId loss = flow_loss_node(pt, fx.net, Variant::pair, sample, fx.cond);
        tape.backward(loss);
        adam_step(fx.params, tape.grads(), adam);
    }
}
BENCHMARK(BM_train_step)->Arg(256);

}  // namespace
