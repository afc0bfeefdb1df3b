// Command-line front end for the generate-then-register pipeline:
// dataset synthesis, training, sampling, evaluation, the equivariance
// certificate, and artifact inspection.

#include <CLI11.hpp>

#include "keyflow/config.hpp"
#include "keyflow/dataset.hpp"
#include "keyflow/errors.hpp"
#include "keyflow/evalharness.hpp"
#include "keyflow/policy.hpp"
#include "keyflow/synth.hpp"
#include "keyflow/textio.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDataFormat = 2;
constexpr int kExitCertificateFailed = 3;

namespace fs = std::filesystem;
using namespace keyflow;

struct CertificateFailure {};

RunConfig resolve_config(const std::string& config_path, long steps_override,
                         double lr_override, long seed_override) {
    RunConfig cfg = config_path.empty() ? desk_profile() : load_config_file(config_path);
    if (steps_override > 0) cfg.train_steps = steps_override;
    if (lr_override > 0.0) cfg.lr = lr_override;
    if (seed_override >= 0) cfg.seed = seed_override;
    cfg.validate();
    return cfg;
}

void print_transform(std::ostream& os, const std::string& label, const RigidTransform& t) {
    const Eigen::Matrix4d m = t.as_matrix();
    os << label << "\n";
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) os << (c ? " " : "  ") << format_double(m(r, c));
        os << "\n";
    }
}

void write_transform(const fs::path& path, const RigidTransform& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    const Eigen::Matrix4d m = t.as_matrix();
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) os << (c ? " " : "") << format_double(m(r, c));
        os << "\n";
    }
}

int run_synth(const std::string& task, int demos, long seed, long pose_seed,
              const std::string& out_dir) {
    const long poses = pose_seed >= 0 ? pose_seed : seed;
    const Dataset data = generate_task_dataset(task, demos, seed, poses);
    write_dataset(out_dir, data);
    std::cout << "wrote " << data.records.size() << " records (" << demos << " demos) for task '"
              << task << "' to " << out_dir << "\n";
    return kExitOk;
}

int run_train(const std::string& data_dir, const std::string& phase,
              const std::string& config_path, long steps_override, double lr_override,
              long seed_override, const std::string& out_dir, const std::string& log_path) {
    const Dataset data = read_dataset(data_dir);
    const RunConfig cfg = resolve_config(config_path, steps_override, lr_override, seed_override);

    TrainHooks hooks;
    hooks.on_log = [](long step, double loss) {
        std::cout << "step " << step << " loss " << format_double(loss) << "\n";
    };
    TrainResult result = train_policy(data, phase, cfg, hooks);
    save_bundle(out_dir, result.bundle);

    if (!log_path.empty()) {
        std::ofstream os(log_path, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + log_path);
        os << "step,loss\n";
        for (const auto& [step, loss] : result.loss_log)
            os << step << "," << format_double(loss) << "\n";
    }
    std::cout << "trained " << phase << " policy for task '" << data.task << "': initial loss "
              << format_double(result.initial_loss) << ", final loss "
              << format_double(result.final_loss) << "; bundle at " << out_dir << "\n";
    return kExitOk;
}

int lookup_instruction(const std::vector<std::string>& vocabulary, const std::string& text) {
    for (std::size_t i = 0; i < vocabulary.size(); ++i)
        if (vocabulary[i] == text) return static_cast<int>(i);
    std::string known;
    for (const std::string& word : vocabulary) known += "\n  \"" + word + "\"";
    throw DataError("sample: instruction \"" + text +
                    "\" is not in the bundle vocabulary; known instructions:" + known);
}

int sample_pick(const ModelBundle& bundle, const PointCloud& cloud_b, int instruction_id,
                const InferenceOptions& opts, const std::string& out_prefix) {
    const PickResult result = infer_pick(bundle, cloud_b, instruction_id, opts);
    PointCloud gen;
    gen.points = result.generated_b;
    write_pointcloud(gen, out_prefix + "_gen_b.xyz");
    write_transform(out_prefix + "_action.txt", result.action);
    print_transform(std::cout, "grasp pose (gripper model -> world):", result.action);
    std::cout << "fit rms " << format_double(result.fit_b.rms_residual) << "\n";
    return kExitOk;
}

int sample_place(const ModelBundle& bundle, const PointCloud& cloud_a, const PointCloud& cloud_b,
                 int instruction_id, const InferenceOptions& opts,
                 const std::string& out_prefix) {
    const PlaceResult result = infer_place(bundle, cloud_a, cloud_b, instruction_id, opts);
    PointCloud gen_a, gen_b;
    gen_a.points = result.generated_a;
    gen_b.points = result.generated_b;
    write_pointcloud(gen_a, out_prefix + "_gen_a.xyz");
    write_pointcloud(gen_b, out_prefix + "_gen_b.xyz");
    write_transform(out_prefix + "_action.txt", result.action);
    print_transform(std::cout, "place action (raw b -> raw a goal):", result.action);
    std::cout << "fit rms a " << format_double(result.fit_a.rms_residual) << ", b "
              << format_double(result.fit_b.rms_residual) << "\n";
    return kExitOk;
}

int run_sample(const std::string& bundle_dir, const std::string& data_dir, int record_index,
               const std::string& cloud_a_path, const std::string& cloud_b_path,
               const std::string& instruction, std::uint64_t seed,
               const std::string& out_prefix) {
    const ModelBundle bundle = load_bundle(bundle_dir);
    InferenceOptions opts;
    opts.seed = seed;

    if (!data_dir.empty()) {
        // Dataset mode: re-run inference on a stored demonstration record.
        const Dataset data = read_dataset(data_dir);
        if (record_index < 0 || static_cast<std::size_t>(record_index) >= data.records.size())
            throw DataError("sample: record index out of range");
        const DemonstrationRecord& rec = data.records[static_cast<std::size_t>(record_index)];
        if (rec.phase == "pick") {
            if (bundle.variant != Variant::single)
                throw DataError("sample: record is a pick but the bundle is a place policy");
            return sample_pick(bundle, rec.cloud_b, rec.instruction_id, opts, out_prefix);
        }
        if (bundle.variant != Variant::pair)
            throw DataError("sample: record is a place but the bundle is a grasp policy");
        return sample_place(bundle, rec.cloud_a, rec.cloud_b, rec.instruction_id, opts,
                            out_prefix);
    }

    // Scene-file mode: clouds straight from disk, instruction given as text
    // and resolved through the bundle's closed vocabulary.
    const int instruction_id = lookup_instruction(bundle.vocabulary, instruction);
    if (bundle.variant == Variant::single) {
        if (cloud_b_path.empty())
            throw DataError("sample: a grasp bundle needs --cloud-b");
        return sample_pick(bundle, read_pointcloud(cloud_b_path), instruction_id, opts,
                           out_prefix);
    }
    if (cloud_a_path.empty() || cloud_b_path.empty())
        throw DataError("sample: a place bundle needs --cloud-a and --cloud-b");
    return sample_place(bundle, read_pointcloud(cloud_a_path), read_pointcloud(cloud_b_path),
                        instruction_id, opts, out_prefix);
}

int run_eval(const std::string& bundle_dir, int n_scenes, int runs, std::uint64_t seed,
             long pose_seed, const std::string& out_dir) {
    const ModelBundle bundle = load_bundle(bundle_dir);
    const std::string phase = bundle.variant == Variant::single ? "pick" : "place";
    const long poses = pose_seed >= 0
                           ? pose_seed
                           : static_cast<long>(Rng::derive(
                                 static_cast<std::uint64_t>(bundle.shape_seed), "heldout"));
    const std::vector<EvalScene> scenes =
        make_eval_scenes(bundle.task, phase, n_scenes, bundle.shape_seed, poses);

    ProtocolOptions opts;
    opts.runs = runs;
    opts.seed = seed;
    const ProtocolResult result = run_eval_protocol(bundle, scenes, opts);

    fs::create_directories(out_dir);
    const std::string hash = config_hash(bundle.config);
    write_metrics_csv(fs::path(out_dir) / "metrics.csv", result, seed, hash);
    write_scatter_svg(fs::path(out_dir) / "scatter.svg", result);

    std::cout << "task '" << bundle.task << "' (" << phase << "), " << n_scenes << " scenes x "
              << runs << " runs\n";
    std::cout << "rotation error (deg): mean " << format_double(result.rotation.mean) << ", min "
              << format_double(result.rotation.min) << ", max "
              << format_double(result.rotation.max) << "\n";
    std::cout << "translation error (cm): mean " << format_double(result.translation.mean * 100)
              << ", min " << format_double(result.translation.min * 100) << ", max "
              << format_double(result.translation.max * 100) << "\n";
    std::cout << "reports in " << out_dir << " (config " << hash << ")\n";
    return kExitOk;
}

int run_equicheck(const std::string& bundle_dir, int n_scenes, int trials, std::uint64_t seed,
                  long pose_seed, const std::string& mode) {
    const bool learned = mode == "learned";
    const ModelBundle bundle = load_bundle(bundle_dir);
    const std::string phase = bundle.variant == Variant::single ? "pick" : "place";
    const long poses = pose_seed >= 0
                           ? pose_seed
                           : static_cast<long>(Rng::derive(
                                 static_cast<std::uint64_t>(bundle.shape_seed), "equicheck"));
    const std::vector<EvalScene> scenes =
        make_eval_scenes(bundle.task, phase, n_scenes, bundle.shape_seed, poses);

    bool all_passed = true;
    double worst_rot = 0.0, worst_trans = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        CertificateOptions opts;
        opts.trials = trials;
        opts.seed = Rng::derive(seed, static_cast<std::uint64_t>(i));
        opts.forced = !learned;
        const CertificateReport report = equivariance_certificate(bundle, scenes[i], opts);
        worst_rot = std::max(worst_rot, report.max_rotation_dev_deg);
        worst_trans = std::max(worst_trans, report.max_translation_dev_m);
        all_passed = all_passed && report.passed;
        std::cout << "scene " << i << ": max dev " << format_double(report.max_rotation_dev_deg)
                  << " deg / " << format_double(report.max_translation_dev_m) << " m over "
                  << report.trials << " trials\n";
    }
    std::cout << (learned ? "learned" : "forced-invariant") << " mode; worst deviation "
              << format_double(worst_rot) << " deg / " << format_double(worst_trans) << " m\n";
    if (!learned) {
        std::cout << "tolerance " << format_double(kCertificateRotTolDeg) << " deg / "
                  << format_double(kCertificateTransTolM) << " m: "
                  << (all_passed ? "PASS" : "FAIL") << "\n";
        if (!all_passed) throw CertificateFailure{};
    }
    return kExitOk;
}

int run_inspect(const std::string& bundle_dir, const std::string& data_dir) {
    if (!bundle_dir.empty()) {
        const ModelBundle bundle = load_bundle(bundle_dir);
        std::cout << "bundle: task '" << bundle.task << "', variant "
                  << variant_name(bundle.variant) << ", trained steps " << bundle.trained_steps
                  << "\n";
        std::cout << "sigma " << format_double(bundle.sigma) << ", shape seed "
                  << bundle.shape_seed << ", vocabulary " << bundle.vocabulary.size()
                  << " entries\n";
        std::cout << "parameters: " << bundle.params.values.size() << " arrays, "
                  << bundle.params.total_entries() << " entries\n";
        std::cout << "config hash " << config_hash(bundle.config) << "\n";
        for (std::size_t i = 0; i < bundle.vocabulary.size(); ++i)
            std::cout << "  instruction " << i << ": " << bundle.vocabulary[i] << "\n";
    }
    if (!data_dir.empty()) {
        const Dataset data = read_dataset(data_dir);
        std::cout << "dataset: task '" << data.task << "', shape seed " << data.shape_seed
                  << ", " << data.records.size() << " records\n";
        for (std::size_t i = 0; i < data.records.size(); ++i) {
            const DemonstrationRecord& rec = data.records[i];
            std::cout << "  record " << i << ": " << rec.phase << ", \"" << rec.instruction
                      << "\", clouds " << rec.cloud_a.size() << "/" << rec.cloud_b.size()
                      << " points\n";
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generate-then-register keyframe pick-and-place pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic demonstration dataset");
    std::string synth_task = "peg-in-slot";
    int synth_demos = 10;
    long synth_seed = 1;
    long synth_pose_seed = -1;
    std::string synth_out;
    synth->add_option("--task", synth_task, "task name")
        ->check(CLI::IsMember(task_names()));
    synth->add_option("--demos", synth_demos, "number of demonstrations")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "shape + pose seed");
    synth->add_option("--pose-seed", synth_pose_seed, "override the pose seed (held-out sets)");
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train a policy on one phase of a dataset");
    std::string train_data, train_phase, train_config, train_out, train_log;
    long train_steps = 0, train_seed = -1;
    double train_lr = 0.0;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--phase", train_phase, "pick or place")
        ->required()
        ->check(CLI::IsMember({"pick", "place"}));
    train->add_option("--config", train_config, "config file (defaults to the desk profile)");
    train->add_option("--steps", train_steps, "override train.steps");
    train->add_option("--lr", train_lr, "override train.lr");
    train->add_option("--seed", train_seed, "override train.seed");
    train->add_option("--out", train_out, "bundle output directory")->required();
    train->add_option("--log", train_log, "write a step,loss csv");

    // sample
    auto* sample = app.add_subcommand(
        "sample", "run inference on a dataset record or on scene files");
    std::string sample_bundle, sample_data, sample_prefix;
    std::string sample_cloud_a, sample_cloud_b, sample_instruction;
    int sample_record = 0;
    std::uint64_t sample_seed = 0;
    sample->add_option("--bundle", sample_bundle, "bundle directory")->required();
    auto* sample_data_opt = sample->add_option("--data", sample_data, "dataset directory");
    sample->add_option("--record", sample_record, "record index (with --data)")
        ->needs(sample_data_opt);
    sample->add_option("--cloud-a", sample_cloud_a, "stationary-object cloud file")
        ->excludes(sample_data_opt);
    auto* sample_cloud_b_opt =
        sample->add_option("--cloud-b", sample_cloud_b, "moved-object cloud file")
            ->excludes(sample_data_opt);
    sample->add_option("--instruction", sample_instruction,
                       "instruction text (with --cloud-b), matched against the vocabulary")
        ->needs(sample_cloud_b_opt);
    sample->add_option("--seed", sample_seed, "inference seed");
    sample->add_option("--out", sample_prefix, "output file prefix")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "held-out pose evaluation protocol");
    std::string eval_bundle, eval_out;
    int eval_scenes = 25, eval_runs = 100;
    std::uint64_t eval_seed = 0;
    long eval_pose_seed = -1;
    eval->add_option("--bundle", eval_bundle, "bundle directory")->required();
    eval->add_option("--scenes", eval_scenes, "number of held-out scenes")->check(CLI::PositiveNumber);
    eval->add_option("--runs", eval_runs, "protocol runs")->check(CLI::PositiveNumber);
    eval->add_option("--seed", eval_seed, "protocol seed");
    eval->add_option("--pose-seed", eval_pose_seed, "override the held-out pose seed");
    eval->add_option("--report", eval_out, "report directory")->required();

    // equicheck
    auto* equicheck = app.add_subcommand("equicheck", "pipeline equivariance certificate");
    std::string equi_bundle;
    int equi_scenes = 5, equi_trials = 100;
    std::uint64_t equi_seed = 0;
    long equi_pose_seed = -1;
    std::string equi_mode = "forced";
    equicheck->add_option("--bundle", equi_bundle, "bundle directory")->required();
    equicheck->add_option("--scenes", equi_scenes, "scenes to certify")->check(CLI::PositiveNumber);
    equicheck->add_option("--trials", equi_trials, "group elements per scene")->check(CLI::PositiveNumber);
    equicheck->add_option("--seed", equi_seed, "certificate seed");
    equicheck->add_option("--pose-seed", equi_pose_seed, "override the scene pose seed");
    equicheck->add_option("--mode", equi_mode,
                          "forced asserts the invariant-conditioning bound and fails loudly; "
                          "learned reports the trained encoders' deviation")
        ->check(CLI::IsMember({"forced", "learned"}));

    // inspect
    auto* inspect = app.add_subcommand("inspect", "print bundle or dataset metadata");
    std::string inspect_bundle, inspect_data;
    inspect->add_option("--bundle", inspect_bundle, "bundle directory");
    inspect->add_option("--data", inspect_data, "dataset directory");

    try {
        app.parse(argc, argv);
        if (synth->parsed())
            return run_synth(synth_task, synth_demos, synth_seed, synth_pose_seed, synth_out);
        if (train->parsed())
            return run_train(train_data, train_phase, train_config, train_steps, train_lr,
                             train_seed, train_out, train_log);
        if (sample->parsed()) {
            if (sample_data.empty() && sample_cloud_b.empty()) {
                std::cerr << "sample: pass --data/--record or --cloud-b [--cloud-a] "
                             "--instruction\n";
                return kExitUsage;
            }
            return run_sample(sample_bundle, sample_data, sample_record, sample_cloud_a,
                              sample_cloud_b, sample_instruction, sample_seed, sample_prefix);
        }
        if (eval->parsed())
            return run_eval(eval_bundle, eval_scenes, eval_runs, eval_seed, eval_pose_seed,
                            eval_out);
        if (equicheck->parsed())
            return run_equicheck(equi_bundle, equi_scenes, equi_trials, equi_seed,
                                 equi_pose_seed, equi_mode);
        if (inspect->parsed()) {
            if (inspect_bundle.empty() && inspect_data.empty()) {
                std::cerr << "inspect: pass --bundle and/or --data\n";
                return kExitUsage;
            }
            return run_inspect(inspect_bundle, inspect_data);
        }
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const CertificateFailure&) {
        return kExitCertificateFailed;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
