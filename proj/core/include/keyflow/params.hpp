#pragma once

#include "keyflow/tape.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace keyflow {

// Named trainable arrays plus Adam moment estimates. Iteration order is the
// map's key order, so every loop over parameters is deterministic.
struct ParamStore {
    std::map<std::string, Mat> values;
    std::map<std::string, Mat> m;  // first-moment estimates, created on first update
    std::map<std::string, Mat> v;  // second-moment estimates
    long step_count = 0;

    Mat& value(const std::string& name);
    const Mat& value(const std::string& name) const;
    void create(const std::string& name, Mat initial);
    std::size_t total_entries() const;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update over every entry in `grads`. Each gradient
// name must match an existing array; non-finite gradients abort with the
// offending parameter named. Increments store.step_count once.
void adam_step(ParamStore& store, const std::map<std::string, Mat>& grads, const AdamConfig& cfg);

// Checkpoint: parameters + optimizer state + enough metadata to resume or to
// run inference (flow variant and noise scale are baked in at train time).
struct Checkpoint {
    ParamStore params;
    long step = 0;
    std::string variant;  // "pair" or "single"
    double sigma = 0.0;
    std::string config_text;
};

// Binary container: magic "KFLOWCK1", u32 version, u64 metadata length, JSON
// metadata (array names and shapes in sorted order), then raw little-endian
// float64 payload (all values, then all first moments, then all second
// moments, in metadata order). Writing the same checkpoint twice produces
// byte-identical files.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace keyflow
