#pragma once

#include "keyflow/config.hpp"
#include "keyflow/dataset.hpp"
#include "keyflow/flow.hpp"
#include "keyflow/registration.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace keyflow {

// Observation pipeline: centre, voxel-downsample (skipped when cell == 0),
// then resample to exactly n_points. The centroid is returned so actions can
// be composed back into raw coordinates.
struct PreprocessResult {
    PointCloud cloud;          // centred, exactly n_points rows
    Eigen::Vector3d centroid;  // of the raw input
};
PreprocessResult preprocess(const PointCloud& raw, double voxel_cell, int n_points,
                            std::uint64_t seed);

// Encoder input rows [xyz | rgb]; clouds without colors get 0.5 per channel.
Mat encoder_input(const PointCloud& cloud);

// A trained policy for one phase, self-contained on disk: parameters and
// optimizer state, the exact config, the instruction vocabulary, and (for
// grasp policies) the canonical gripper model cloud.
struct ModelBundle {
    RunConfig config;
    Variant variant = Variant::pair;
    double sigma = 0.0;  // frozen at train start
    long trained_steps = 0;
    std::string task;
    long shape_seed = 0;  // object geometry the bundle was trained on
    ParamStore params;
    std::vector<std::string> vocabulary;
    PointCloud gripper_cloud;  // empty for place bundles

    NetConfig net() const { return config.net(static_cast<int>(vocabulary.size())); }
};

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& dir);

struct TrainHooks {
    std::function<void(long step, double loss)> on_log;
};

struct TrainResult {
    ModelBundle bundle;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<std::pair<long, double>> loss_log;
};

// Trains one phase of a task dataset. phase "pick" uses the single-cloud
// flow variant (gripper rows pinned, loss on object rows); phase "place"
// uses the pair variant. Per step: one record drawn uniformly, one uniform
// t, fresh noise, fresh random rotations on the encoder inputs (unless
// augmentation is off; the gripper cloud is never rotated), and a fresh
// resampling of the cached centred+voxelised clouds when
// train.resample_each_step is set. A non-finite loss aborts, naming the
// step.
TrainResult train_policy(const Dataset& data, const std::string& phase, const RunConfig& cfg,
                         const TrainHooks& hooks = {});

// Testing hook: replaces the generative sampler with a caller-supplied
// function of the preprocessed conditioning, letting plumbing be validated
// independently of learning.
struct GenRequest {
    Mat pts_a, pts_b;  // centred, preprocessed conditioning rows
    Eigen::Vector3d centroid_a = Eigen::Vector3d::Zero();
    Eigen::Vector3d centroid_b = Eigen::Vector3d::Zero();
    int instruction_id = 0;
};
using GeneratorOverride = std::function<std::pair<Mat, Mat>(const GenRequest&)>;

struct InferenceOptions {
    std::uint64_t seed = 0;
    int flow_steps_override = 0;     // 0 keeps the bundle config
    double voxel_override = -1.0;    // negative keeps the config; 0 disables
    bool constant_features = false;  // forced-invariant conditioning
    GeneratorOverride generator;     // empty = run the learned sampler
};

struct PlaceResult {
    RigidTransform action;    // raw-b coordinates -> raw-a goal coordinates
    RigidTransform preplace;  // action lifted by the retreat offset
    FitReport fit_a, fit_b;
    Mat generated_a, generated_b;  // goal-frame generations (diagnostics)
};

struct PickResult {
    RigidTransform action;  // gripper model coordinates -> world grasp pose
    FitReport fit_b;
    Mat generated_b;
};

// World-frame pre-place retreat applied above the placement.
inline constexpr double kPreplaceRetreat = 0.05;

PlaceResult infer_place(const ModelBundle& bundle, const PointCloud& raw_a,
                        const PointCloud& raw_b, int instruction_id,
                        const InferenceOptions& opts = {});

PickResult infer_pick(const ModelBundle& bundle, const PointCloud& raw_b, int instruction_id,
                      const InferenceOptions& opts = {});

// Full keyframe plan: grasp pose, then the placement applied to the grasped
// object carries the gripper to pre-place and place.
struct KeyframePlan {
    RigidTransform pick_pose;
    RigidTransform preplace_pose;
    RigidTransform place_pose;
    PickResult pick;
    PlaceResult place;
};

KeyframePlan keyframe_rollout(const ModelBundle& pick_bundle, const ModelBundle& place_bundle,
                              const PointCloud& raw_a, const PointCloud& raw_b,
                              int pick_instruction, int place_instruction,
                              const InferenceOptions& opts = {});

}  // namespace keyflow
