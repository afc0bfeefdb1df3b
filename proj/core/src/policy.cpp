#include "keyflow/policy.hpp"

#include "keyflow/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace keyflow {

PreprocessResult preprocess(const PointCloud& raw, double voxel_cell, int n_points,
                            std::uint64_t seed) {
    if (raw.size() < 3) throw std::invalid_argument("preprocess: need at least 3 points");
    auto [centred, centroid] = center(raw);
    PointCloud working = voxel_cell > 0.0 ? voxel_downsample(centred, voxel_cell)
                                          : std::move(centred);
    PreprocessResult out;
    out.cloud = resample(working, n_points, seed);
    out.centroid = centroid;
    return out;
}

Mat encoder_input(const PointCloud& cloud) {
    Mat out(cloud.size(), 6);
    out.leftCols<3>() = cloud.points;
    if (cloud.colors)
        out.rightCols<3>() = *cloud.colors;
    else
        out.rightCols<3>().setConstant(0.5);
    return out;
}

namespace {

// One record, fully prepared for training: centred + voxelised clouds kept
// at full fidelity for per-step resampling, plus the transforms that carry
// each centred cloud into the drawn goal-configuration frame.
struct PreparedRecord {
    PointCloud cache_a, cache_b;  // centred (+ voxel) clouds
    RigidTransform gen_a, gen_b;  // centred coords -> generation frame
    int instruction_id = 0;
};

PreparedRecord prepare_record(const DemonstrationRecord& rec, const std::string& phase,
                              double voxel_cell) {
    PreparedRecord out;
    auto [centred_a, c_a] = center(rec.cloud_a);
    auto [centred_b, c_b] = center(rec.cloud_b);
    out.cache_a = voxel_cell > 0.0 ? voxel_downsample(centred_a, voxel_cell) : std::move(centred_a);
    out.cache_b = voxel_cell > 0.0 ? voxel_downsample(centred_b, voxel_cell) : std::move(centred_b);
    out.instruction_id = rec.instruction_id;

    // Centred coords -> goal frame, before the frame-normalising shift.
    const RigidTransform base_a = compose(rec.t_a, RigidTransform::from_translation(c_a));
    const RigidTransform base_b = compose(rec.t_b, RigidTransform::from_translation(c_b));

    Eigen::Vector3d shift;
    if (phase == "pick") {
        // The goal frame is the gripper's own model frame; recentring by the
        // gripper centroid keeps the pinned rows identical to the observed
        // gripper cloud, and inference undoes the same offset.
        shift = -c_a;
    } else {
        // Centre the combined goal configuration so generations live near
        // the origin regardless of where the demonstration happened.
        const PointCloud goal_a = apply_transform(base_a, out.cache_a);
        const PointCloud goal_b = apply_transform(base_b, out.cache_b);
        const Eigen::Vector3d sum = goal_a.points.colwise().sum() + goal_b.points.colwise().sum();
        shift = -sum / static_cast<double>(goal_a.size() + goal_b.size());
    }
    const RigidTransform recentre = RigidTransform::from_translation(shift);
    out.gen_a = compose(recentre, base_a);
    out.gen_b = compose(recentre, base_b);
    return out;
}

Mat rotated_encoder_input(const PointCloud& cloud, const RigidTransform& rot) {
    Mat out = encoder_input(cloud);
    out.leftCols<3>() = out.leftCols<3>() * rot.rotation.transpose();
    return out;
}

}  // namespace

TrainResult train_policy(const Dataset& data, const std::string& phase, const RunConfig& cfg,
                         const TrainHooks& hooks) {
    cfg.validate();
    data.validate();
    if (phase != "pick" && phase != "place")
        throw std::invalid_argument("train_policy: phase must be 'pick' or 'place'");
    const auto records = data.phase_records(phase);
    if (records.empty()) throw DataError("train_policy: dataset has no '" + phase + "' records");
    const Variant variant = phase == "pick" ? Variant::single : Variant::pair;

    std::vector<PreparedRecord> prepared;
    prepared.reserve(records.size());
    for (const DemonstrationRecord* rec : records)
        prepared.push_back(prepare_record(*rec, phase, cfg.voxel_cell));

    // Noise scale: a configured fraction of the RMS radius of the goal-frame
    // target rows (the rows the flow actually has to reach).
    double sq_sum = 0.0;
    long n_rows = 0;
    for (const PreparedRecord& pr : prepared) {
        const PointCloud tgt_b = apply_transform(pr.gen_b, pr.cache_b);
        sq_sum += tgt_b.points.rowwise().squaredNorm().sum();
        n_rows += tgt_b.size();
        if (variant == Variant::pair) {
            const PointCloud tgt_a = apply_transform(pr.gen_a, pr.cache_a);
            sq_sum += tgt_a.points.rowwise().squaredNorm().sum();
            n_rows += tgt_a.size();
        }
    }
    const double sigma = cfg.sigma_scale * std::sqrt(sq_sum / static_cast<double>(n_rows));
    if (!(sigma > 0.0)) throw std::runtime_error("train_policy: degenerate target scale");

    TrainResult result;
    result.bundle.config = cfg;
    result.bundle.variant = variant;
    result.bundle.sigma = sigma;
    result.bundle.task = data.task;
    result.bundle.shape_seed = data.shape_seed;
    result.bundle.vocabulary = data.vocabulary;
    if (phase == "pick") result.bundle.gripper_cloud = records.front()->cloud_a;

    const NetConfig net = result.bundle.net();
    Rng init_rng(Rng::derive(static_cast<std::uint64_t>(cfg.seed), "init"));
    init_params(result.bundle.params, net, init_rng);

    Rng rng(Rng::derive(static_cast<std::uint64_t>(cfg.seed), "train"));
    const std::uint64_t resample_base = Rng::derive(static_cast<std::uint64_t>(cfg.seed), "resample");

    for (long step = 0; step < cfg.train_steps; ++step) {
        const std::size_t ri = static_cast<std::size_t>(rng.uniform_index(prepared.size()));
        const PreparedRecord& pr = prepared[ri];

        const std::uint64_t draw = cfg.resample_each_step
                                       ? Rng::derive(resample_base, static_cast<std::uint64_t>(step))
                                       : Rng::derive(resample_base, static_cast<std::uint64_t>(ri));
        const PointCloud pts_a = resample(pr.cache_a, cfg.n_points, Rng::derive(draw, "a"));
        const PointCloud pts_b = resample(pr.cache_b, cfg.n_points, Rng::derive(draw, "b"));

        Mat target_a = apply_transform(pr.gen_a, pts_a).points;
        Mat target_b = apply_transform(pr.gen_b, pts_b).points;
        if (variant == Variant::pair) {
            // The record maps already put the combined goal configuration
            // near the origin, but each step's subsample drags the combined
            // mean a few millimetres off it. That mean is pure gauge — a
            // common shift of both clouds cancels in the relative action —
            // so it is removed here, making "combined mean is zero" an exact
            // property of every target. The sampler restores the same gauge
            // instead of asking the network to predict the subsample mean.
            const Eigen::RowVector3d mean =
                (target_a.colwise().sum() + target_b.colwise().sum()) /
                static_cast<double>(target_a.rows() + target_b.rows());
            target_a.rowwise() -= mean;
            target_b.rowwise() -= mean;
        }

        // Rotation augmentation touches only what the encoders see; the
        // generation targets stay in the goal frame, which is what pushes
        // the learned conditioning toward rotation invariance. The gripper
        // cloud is never rotated: its orientation is the output frame.
        Cond cond;
        cond.instruction_id = pr.instruction_id;
        const bool rotate_a = cfg.augment && variant == Variant::pair;
        cond.enc_a = rotate_a ? rotated_encoder_input(pts_a, random_rotation(rng.bits()))
                              : encoder_input(pts_a);
        cond.enc_b = cfg.augment ? rotated_encoder_input(pts_b, random_rotation(rng.bits()))
                                 : encoder_input(pts_b);

        const StepSample sample = make_step_sample(target_a, target_b, variant, sigma, rng);

        Tape tape;
        ParamTape pt(tape, result.bundle.params);
        const Tape::NodeId loss_node = flow_loss_node(pt, net, variant, sample, cond);
        const double loss = tape.value(loss_node)(0, 0);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_policy: non-finite loss at step " +
                                     std::to_string(step));
        tape.backward(loss_node);
        // Cosine decay to zero: the single-draw objective is noisy, so the
        // late-training step size has to shrink for the parameters to settle
        // instead of jittering around the optimum.
        const double lr =
            cfg.lr * 0.5 *
            (1.0 + std::cos(M_PI * static_cast<double>(step) /
                            static_cast<double>(cfg.train_steps)));
        adam_step(result.bundle.params, tape.grads(), AdamConfig{lr, cfg.beta1, cfg.beta2, cfg.eps});

        if (step == 0) result.initial_loss = loss;
        result.final_loss = loss;
        if (step % cfg.log_every == 0 || step == cfg.train_steps - 1) {
            result.loss_log.emplace_back(step, loss);
            if (hooks.on_log) hooks.on_log(step, loss);
        }
    }
    result.bundle.trained_steps = cfg.train_steps;
    return result;
}

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle) {
    std::filesystem::create_directories(dir);

    Checkpoint ck;
    ck.params = bundle.params;
    ck.step = bundle.trained_steps;
    ck.variant = variant_name(bundle.variant);
    ck.sigma = bundle.sigma;
    ck.config_text = serialize_config(bundle.config);
    save_checkpoint(dir / "checkpoint.bin", ck);

    {
        std::ofstream os(dir / "vocab.txt", std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("save_bundle: cannot write vocab.txt");
        for (const std::string& word : bundle.vocabulary) os << word << "\n";
    }
    {
        nlohmann::json meta;
        meta["task"] = bundle.task;
        meta["shape_seed"] = bundle.shape_seed;
        meta["has_gripper"] = !bundle.gripper_cloud.empty();
        std::ofstream os(dir / "bundle.json", std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("save_bundle: cannot write bundle.json");
        os << meta.dump(2) << "\n";
    }
    if (!bundle.gripper_cloud.empty())
        write_pointcloud(bundle.gripper_cloud, dir / "gripper.xyz");
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
    Checkpoint ck = load_checkpoint(dir / "checkpoint.bin");

    ModelBundle bundle;
    bundle.config = parse_config(ck.config_text);
    bundle.variant = variant_from_name(ck.variant);
    bundle.sigma = ck.sigma;
    bundle.trained_steps = ck.step;
    bundle.params = std::move(ck.params);

    std::ifstream vocab(dir / "vocab.txt");
    if (!vocab) throw DataError("load_bundle: missing vocab.txt in " + dir.string());
    std::string line;
    while (std::getline(vocab, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) bundle.vocabulary.push_back(line);
    }
    if (bundle.vocabulary.empty()) throw DataError("load_bundle: empty vocabulary in " + dir.string());

    std::ifstream meta_in(dir / "bundle.json");
    if (!meta_in) throw DataError("load_bundle: missing bundle.json in " + dir.string());
    nlohmann::json meta;
    try {
        meta_in >> meta;
        bundle.task = meta.at("task").get<std::string>();
        bundle.shape_seed = meta.at("shape_seed").get<long>();
        if (meta.at("has_gripper").get<bool>())
            bundle.gripper_cloud = read_pointcloud(dir / "gripper.xyz");
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_bundle: bundle.json error in " + dir.string() + ": " + e.what());
    }
    if (bundle.variant == Variant::single && bundle.gripper_cloud.empty())
        throw DataError("load_bundle: grasp bundle without a gripper cloud in " + dir.string());
    return bundle;
}

namespace {

struct Generation {
    Mat gen_a, gen_b;
    PreprocessResult prep_a, prep_b;
};

// Shared generation front half of pick and place inference.
Generation run_generation(const ModelBundle& bundle, const PointCloud& raw_a,
                          const PointCloud& raw_b, int instruction_id,
                          const InferenceOptions& opts) {
    const RunConfig& cfg = bundle.config;
    if (instruction_id < 0 ||
        static_cast<std::size_t>(instruction_id) >= bundle.vocabulary.size())
        throw std::invalid_argument("inference: instruction id outside the bundle vocabulary");
    const double voxel = opts.voxel_override < 0.0 ? cfg.voxel_cell : opts.voxel_override;
    const int steps = opts.flow_steps_override > 0 ? opts.flow_steps_override : cfg.flow_steps;

    Generation out;
    out.prep_a = preprocess(raw_a, voxel, cfg.n_points, Rng::derive(opts.seed, "prep_a"));
    out.prep_b = preprocess(raw_b, voxel, cfg.n_points, Rng::derive(opts.seed, "prep_b"));

    if (opts.generator) {
        GenRequest request;
        request.pts_a = out.prep_a.cloud.points;
        request.pts_b = out.prep_b.cloud.points;
        request.centroid_a = out.prep_a.centroid;
        request.centroid_b = out.prep_b.centroid;
        request.instruction_id = instruction_id;
        std::tie(out.gen_a, out.gen_b) = opts.generator(request);
        if (out.gen_a.rows() != out.prep_a.cloud.size() ||
            out.gen_b.rows() != out.prep_b.cloud.size())
            throw std::invalid_argument("inference: generator override row mismatch");
        return out;
    }

    Cond cond;
    cond.enc_a = encoder_input(out.prep_a.cloud);
    cond.enc_b = encoder_input(out.prep_b.cloud);
    cond.instruction_id = instruction_id;

    Rng noise_rng(Rng::derive(opts.seed, "noise"));
    const Eigen::Index na = out.prep_a.cloud.size();
    const Eigen::Index nb = out.prep_b.cloud.size();
    // The empirical mean of a noise draw is a rigid translation of the whole
    // starting state, and the learned drift only partially cancels it during
    // integration; it surfaces as a seed-dependent offset of the generated
    // cloud. Re-centring each draw picks the modal start (the mean over draws,
    // still inside the training distribution) and removes that wobble while
    // leaving the per-point noise untouched.
    const auto centred_noise = [&](Eigen::Index n) {
        Mat x0 = sample_noise(n, bundle.sigma, noise_rng);
        x0.rowwise() -= x0.colwise().mean();
        return x0;
    };
    const Mat start_a = bundle.variant == Variant::single
                            ? Mat(out.prep_a.cloud.points)
                            : centred_noise(na);
    const Mat start_b = centred_noise(nb);

    const Mat final_state = euler_sample(bundle.params, bundle.net(), bundle.variant, cond,
                                         start_a, start_b, steps, opts.constant_features);
    out.gen_a = final_state.topRows(na);
    out.gen_b = final_state.bottomRows(nb);
    if (bundle.variant == Variant::pair) {
        // Pair training targets are centred so the combined goal
        // configuration has exactly zero mean (see train_policy); restoring
        // that gauge removes the one mode integration cannot pin down. The
        // shift is common to both clouds, so the relative action is
        // untouched, and it commutes with rotations of the inputs. The
        // single-cloud variant keeps its frame anchored by the pinned
        // gripper rows instead.
        const Eigen::RowVector3d mean =
            (out.gen_a.colwise().sum() + out.gen_b.colwise().sum()) /
            static_cast<double>(na + nb);
        out.gen_a.rowwise() -= mean;
        out.gen_b.rowwise() -= mean;
    }
    return out;
}

PointCloud cloud_from_rows(const Mat& rows) {
    PointCloud c;
    c.points = rows;
    return c;
}

}  // namespace

PlaceResult infer_place(const ModelBundle& bundle, const PointCloud& raw_a,
                        const PointCloud& raw_b, int instruction_id,
                        const InferenceOptions& opts) {
    if (bundle.variant != Variant::pair)
        throw std::invalid_argument("infer_place: bundle was trained for grasping");
    Generation gen = run_generation(bundle, raw_a, raw_b, instruction_id, opts);

    PlaceResult result;
    result.fit_a = kabsch_fit(gen.prep_a.cloud, cloud_from_rows(gen.gen_a));
    result.fit_b = kabsch_fit(gen.prep_b.cloud, cloud_from_rows(gen.gen_b));
    // Undo both centring offsets around the relative goal-frame action; the
    // generation frame itself cancels between the two fits.
    result.action = compose(
        compose(RigidTransform::from_translation(gen.prep_a.centroid),
                place_action(result.fit_a, result.fit_b)),
        RigidTransform::from_translation(-gen.prep_b.centroid));
    result.preplace = compose(
        RigidTransform::from_translation(Eigen::Vector3d(0, 0, kPreplaceRetreat)), result.action);
    result.generated_a = std::move(gen.gen_a);
    result.generated_b = std::move(gen.gen_b);
    return result;
}

PickResult infer_pick(const ModelBundle& bundle, const PointCloud& raw_b, int instruction_id,
                      const InferenceOptions& opts) {
    if (bundle.variant != Variant::single)
        throw std::invalid_argument("infer_pick: bundle was trained for placement");
    if (bundle.gripper_cloud.empty())
        throw std::invalid_argument("infer_pick: bundle has no gripper cloud");
    Generation gen = run_generation(bundle, bundle.gripper_cloud, raw_b, instruction_id, opts);

    PickResult result;
    result.fit_b = kabsch_fit(gen.prep_b.cloud, cloud_from_rows(gen.gen_b));
    // The generated object rows live in the gripper's (centred) model frame,
    // so inverting the fit and undoing the two centroids yields the world
    // grasp pose of the gripper model.
    result.action = compose(
        compose(RigidTransform::from_translation(gen.prep_b.centroid),
                pick_action(result.fit_b)),
        RigidTransform::from_translation(-gen.prep_a.centroid));
    result.generated_b = std::move(gen.gen_b);
    return result;
}

KeyframePlan keyframe_rollout(const ModelBundle& pick_bundle, const ModelBundle& place_bundle,
                              const PointCloud& raw_a, const PointCloud& raw_b,
                              int pick_instruction, int place_instruction,
                              const InferenceOptions& opts) {
    InferenceOptions pick_opts = opts;
    pick_opts.seed = Rng::derive(opts.seed, "rollout_pick");
    InferenceOptions place_opts = opts;
    place_opts.seed = Rng::derive(opts.seed, "rollout_place");

    KeyframePlan plan;
    plan.pick = infer_pick(pick_bundle, raw_b, pick_instruction, pick_opts);
    plan.place = infer_place(place_bundle, raw_a, raw_b, place_instruction, place_opts);
    plan.pick_pose = plan.pick.action;
    // The grasped object moves rigidly with the gripper, so the placement
    // action transports the grasp pose to the later keyframes.
    plan.place_pose = compose(plan.place.action, plan.pick_pose);
    plan.preplace_pose = compose(plan.place.preplace, plan.pick_pose);
    return plan;
}

}  // namespace keyflow
