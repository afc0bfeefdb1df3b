// Slow training-convergence check, registered as its own ctest entry so the
// fast unit suite stays fast: a single-record overfit run at the desk profile
// must drive the flow loss well below its starting value.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "keyflow/policy.hpp"
#include "keyflow/synth.hpp"

TEST_CASE("single-record training converges to a small fraction of the initial loss") {
    keyflow::RunConfig cfg = keyflow::desk_profile();
    cfg.train_steps = 20000;
    // Memorization check on the flow itself; with one record, augmented
    // training spends its budget on pose invariance instead of convergence.
    cfg.augment = false;

    const keyflow::Dataset data = keyflow::generate_task_dataset("peg-in-slot", 1, 121, 122);
    const keyflow::TrainResult result = keyflow::train_policy(data, "place", cfg);

    REQUIRE(result.initial_loss > 0.0);
    REQUIRE(result.loss_log.size() >= 40);

    // The per-step loss is a single random draw (record subsample, time, and
    // noise), so the settled level is judged on the mean over the last
    // quarter of the log, not on whichever draw happened to come last.
    double tail_sum = 0.0;
    int tail_count = 0;
    for (const auto& [step, loss] : result.loss_log) {
        if (step >= (3 * cfg.train_steps) / 4) {
            tail_sum += loss;
            ++tail_count;
        }
    }
    REQUIRE(tail_count >= 10);
    const double tail_mean = tail_sum / tail_count;

    // Measured settled level for this run shape is ~1-2% of the initial loss
    // (the single-draw objective has an irreducible sampling floor); 5% is a
    // robust bound that still fails loudly if optimization breaks.
    CHECK(tail_mean < 0.05 * result.initial_loss);
    INFO("tail mean ", tail_mean, " initial ", result.initial_loss);
}
