#pragma once

#include "keyflow/net.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace keyflow {

// Full run configuration. Two named profiles ship with the project:
//   desk — small dimensions that train and evaluate in minutes on one core
//   full — the full-scale reference dimensions (163-wide per-point input)
// Profiles are starting points; any key can be overridden in a config file.
struct RunConfig {
    std::string profile = "desk";

    // data
    int n_points = 256;
    double voxel_cell = 0.004;  // metres; 0 disables the voxel stage

    // model
    int feat_dim = 32;
    int lang_dim = 32;
    int time_dim = 32;
    int mask_dim = 32;
    int enc_hidden = 64;
    int vel_hidden = 64;

    // flow
    int flow_steps = 50;  // the learned field is near-straight; 50 Euler steps suffice
    double sigma_scale = 0.5;  // noise scale as a fraction of target RMS radius

    // train
    long train_steps = 4000;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long seed = 0;
    bool augment = true;  // random-rotation augmentation of the encoder inputs
    bool resample_each_step = true;
    long log_every = 100;

    // eval
    int eval_runs = 100;
    long eval_seed = 0;

    NetConfig net(int vocab_size) const;
    void validate() const;
};

RunConfig desk_profile();
RunConfig full_profile();

// Text format: one `key = value` per line, `#` comments, blank lines ignored.
// The `profile` key (if present) is applied first and selects the baseline;
// every other key overrides that baseline. Unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::filesystem::path& path);

// Canonical form: fixed key order, shortest round-trip numerals. Equal
// configs serialize to identical bytes.
std::string serialize_config(const RunConfig& cfg);

// FNV-1a 64-bit over the canonical serialization, as 16 lower-case hex
// digits. Stamped into reports so results can be traced to a configuration.
std::string config_hash(const RunConfig& cfg);

}  // namespace keyflow
