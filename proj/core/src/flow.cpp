#include "keyflow/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace keyflow {

std::string variant_name(Variant v) { return v == Variant::pair ? "pair" : "single"; }

Variant variant_from_name(const std::string& name) {
    if (name == "pair") return Variant::pair;
    if (name == "single") return Variant::single;
    throw std::invalid_argument("variant_from_name: unknown variant '" + name + "'");
}

Mat sample_noise(Eigen::Index n, double sigma, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_noise: n must be >= 1");
    // sigma == 0 is a legitimate degenerate draw (all points at the origin).
    if (!(sigma >= 0.0)) throw std::invalid_argument("sample_noise: sigma must be >= 0");
    Mat out(n, 3);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < 3; ++c) out(r, c) = sigma * rng.normal();
    return out;
}

double rms_radius(const Mat& points) {
    if (points.rows() < 1 || points.cols() != 3)
        throw std::invalid_argument("rms_radius: input must be N x 3 with N >= 1");
    return std::sqrt(points.rowwise().squaredNorm().mean());
}

StepSample make_step_sample(const Mat& target_a, const Mat& target_b, Variant variant,
                            double sigma, Rng& rng) {
    if (target_a.cols() != 3 || target_b.cols() != 3)
        throw std::invalid_argument("make_step_sample: targets must be N x 3");
    // The base distribution is the mean-centred Gaussian cloud: subtracting
    // the empirical mean of each draw removes the one component of the noise
    // that acts as a rigid translation of the whole start state. With it gone
    // the translation part of the drift is a deterministic function of the
    // conditioning instead of chasing the draw's mean, so the sampler (which
    // centres its start the same way) inherits a far tighter placement.
    const auto centred_noise = [&](Eigen::Index n) {
        Mat x0 = sample_noise(n, sigma, rng);
        x0.rowwise() -= x0.colwise().mean();
        return x0;
    };
    StepSample s;
    s.t = rng.uniform();
    const Mat x0_b = centred_noise(target_b.rows());
    s.drift_b = target_b - x0_b;
    s.xt_b = s.t * target_b + (1.0 - s.t) * x0_b;
    if (variant == Variant::pair) {
        const Mat x0_a = centred_noise(target_a.rows());
        s.drift_a = target_a - x0_a;
        s.xt_a = s.t * target_a + (1.0 - s.t) * x0_a;
    } else {
        s.xt_a = target_a;  // pinned context rows
        s.drift_a = Mat::Zero(target_a.rows(), 3);
    }
    return s;
}

namespace {

void check_velocity_inputs(const NetConfig& cfg, const Mat& xt_a, const Mat& xt_b,
                           const Cond& cond) {
    if (xt_a.rows() < 1 || xt_b.rows() < 1)
        throw std::invalid_argument("velocity_node: both clouds must be non-empty");
    if (xt_a.cols() != 3 || xt_b.cols() != 3)
        throw std::invalid_argument("velocity_node: states must be N x 3");
    if (cond.enc_a.rows() != xt_a.rows() || cond.enc_b.rows() != xt_b.rows())
        throw std::invalid_argument("velocity_node: conditioning rows must match state rows");
    if (cond.enc_a.cols() != 6 || cond.enc_b.cols() != 6)
        throw std::invalid_argument("velocity_node: conditioning must be N x 6 (xyz | rgb)");
    if (cond.instruction_id < 0 || cond.instruction_id >= cfg.vocab_size)
        throw std::invalid_argument("velocity_node: instruction id out of vocabulary range");
}

// Everything downstream of the per-point features: assemble the generator
// input rows and run the velocity trunk. `feat` is an (na + nb) x feat_dim
// node, either the live encoder graph (training) or a precomputed constant
// (sampling, forced-invariant mode).
Tape::NodeId velocity_from_features(ParamTape& pt, const NetConfig& cfg, const Mat& xt_a,
                                    const Mat& xt_b, double t, Tape::NodeId feat,
                                    int instruction_id) {
    Tape& tape = pt.tape();
    const Eigen::Index na = xt_a.rows();
    const Eigen::Index nb = xt_b.rows();

    Mat xt(na + nb, 3);
    xt << xt_a, xt_b;
    const Tape::NodeId xt_node = tape.input(std::move(xt));

    const Tape::NodeId lang_row = tape.rows(pt["embed.lang"], instruction_id, 1);
    const Tape::NodeId lang = tape.repeat_row(lang_row, na + nb);

    const Tape::NodeId time_row = tape.input(time_embedding(t, cfg.time_dim));
    const Tape::NodeId time = tape.repeat_row(time_row, na + nb);

    const Tape::NodeId mask = tape.vcat(tape.repeat_row(tape.rows(pt["embed.mask"], 0, 1), na),
                                        tape.repeat_row(tape.rows(pt["embed.mask"], 1, 1), nb));

    const Tape::NodeId assembled =
        tape.hcat(tape.hcat(tape.hcat(tape.hcat(xt_node, feat), lang), time), mask);
    return velocity_forward(pt, assembled);
}

}  // namespace

Tape::NodeId velocity_node(ParamTape& pt, const NetConfig& cfg, const Mat& xt_a, const Mat& xt_b,
                           double t, const Cond& cond, bool constant_features) {
    check_velocity_inputs(cfg, xt_a, xt_b, cond);
    Tape& tape = pt.tape();
    const Tape::NodeId feat =
        constant_features
            ? tape.input(Mat::Zero(xt_a.rows() + xt_b.rows(), cfg.feat_dim))
            : tape.vcat(encoder_forward(pt, "enc_a", cond.enc_a),
                        encoder_forward(pt, "enc_b", cond.enc_b));
    return velocity_from_features(pt, cfg, xt_a, xt_b, t, feat, cond.instruction_id);
}

Tape::NodeId flow_loss_node(ParamTape& pt, const NetConfig& cfg, Variant variant,
                            const StepSample& sample, const Cond& cond) {
    Tape& tape = pt.tape();
    const Tape::NodeId v =
        velocity_node(pt, cfg, sample.xt_a, sample.xt_b, sample.t, cond, false);
    if (variant == Variant::pair) {
        Mat drift(sample.drift_a.rows() + sample.drift_b.rows(), 3);
        drift << sample.drift_a, sample.drift_b;
        return tape.mse_scalar(v, tape.input(std::move(drift)));
    }
    const Tape::NodeId v_b = tape.rows(v, sample.xt_a.rows(), sample.xt_b.rows());
    return tape.mse_scalar(v_b, tape.input(sample.drift_b));
}

Mat euler_integrate(const std::function<Mat(const Mat&, double)>& field, Mat x, int steps) {
    if (steps < 1) throw std::invalid_argument("euler_integrate: steps must be >= 1");
    const double dt = 1.0 / static_cast<double>(steps);
    for (int i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        x += dt * field(x, t);
    }
    return x;
}

Mat euler_sample(const ParamStore& store, const NetConfig& cfg, Variant variant, const Cond& cond,
                 const Mat& start_a, const Mat& start_b, int steps, bool constant_features) {
    check_velocity_inputs(cfg, start_a, start_b, cond);
    const Eigen::Index na = start_a.rows();
    const Eigen::Index nb = start_b.rows();

    // The per-point features depend only on the conditioning, not on the
    // integration state or time, so the encoders run once up front instead
    // of once per step.
    Mat feat_value;
    if (constant_features) {
        feat_value = Mat::Zero(na + nb, cfg.feat_dim);
    } else {
        Tape tape;
        ParamTape pt(tape, store);
        feat_value = tape.value(tape.vcat(encoder_forward(pt, "enc_a", cond.enc_a),
                                          encoder_forward(pt, "enc_b", cond.enc_b)));
    }

    Mat x(na + nb, 3);
    x << start_a, start_b;
    auto field = [&](const Mat& state, double t) -> Mat {
        Tape tape;
        ParamTape pt(tape, store);
        const Tape::NodeId v =
            velocity_from_features(pt, cfg, state.topRows(na), state.bottomRows(nb), t,
                                   tape.input(feat_value), cond.instruction_id);
        Mat out = tape.value(v);
        if (variant == Variant::single) out.topRows(na).setZero();
        return out;
    };
    return euler_integrate(field, std::move(x), steps);
}

}  // namespace keyflow
