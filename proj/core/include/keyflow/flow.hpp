#pragma once

#include "keyflow/net.hpp"
#include "keyflow/rng.hpp"

#include <functional>
#include <string>

namespace keyflow {

// Which rows flow. `pair` moves both clouds toward their goal configuration
// (relative placement). `single` keeps cloud a pinned as fixed context — used
// for grasping, where cloud a is the gripper in its own canonical frame and
// only the object rows are generated.
enum class Variant { pair, single };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Conditioning for one generation: the observed, centred clouds as encoder
// inputs (xyz | rgb rows, in one-to-one row correspondence with the flowing
// points) plus the instruction id.
struct Cond {
    Mat enc_a;  // Na x 6
    Mat enc_b;  // Nb x 6
    int instruction_id = 0;
};

// Isotropic Gaussian start cloud, n x 3, entries N(0, sigma^2).
Mat sample_noise(Eigen::Index n, double sigma, Rng& rng);

// Root-mean-square point radius; the training noise scale is a configured
// fraction of this, measured over the goal-configuration targets.
double rms_radius(const Mat& points);

// One training draw on the straight interpolation path
//   X_t = t * target + (1 - t) * X_0,   drift target = target - X_0.
// For `single`, the a-rows carry no noise: xt_a = target_a and target_a's
// drift is excluded from the loss (the rows are pinned context).
struct StepSample {
    double t = 0.0;
    Mat xt_a, xt_b;
    Mat drift_a, drift_b;
};
StepSample make_step_sample(const Mat& target_a, const Mat& target_b, Variant variant,
                            double sigma, Rng& rng);

// Builds the full velocity-field graph on the tape: per-point rows
//   [ x_t | encoder feature | instruction embedding | time | side mask ]
// through the velocity trunk and head, returning the N x 3 velocity node.
// `constant_features` replaces the encoder output with zeros; every
// conditioning channel is then exactly rotation-invariant, which the
// equivariance certificate exploits.
Tape::NodeId velocity_node(ParamTape& pt, const NetConfig& cfg, const Mat& xt_a, const Mat& xt_b,
                           double t, const Cond& cond, bool constant_features = false);

// Scalar training loss node: mean squared error between the predicted field
// and the drift target, over both clouds (`pair`) or the b-rows only
// (`single`).
Tape::NodeId flow_loss_node(ParamTape& pt, const NetConfig& cfg, Variant variant,
                            const StepSample& sample, const Cond& cond);

// Explicit Euler over t = 0, 1/steps, ..., 1 - 1/steps with a caller-supplied
// field. Exposed separately so integration order can be tested against
// analytic fields.
Mat euler_integrate(const std::function<Mat(const Mat&, double)>& field, Mat x, int steps);

// Integrates the learned field from the given start rows. For `single` the
// a-rows are held at start_a throughout (zero velocity is imposed on them).
// Returns the final (Na + Nb) x 3 state; the caller splits it.
Mat euler_sample(const ParamStore& store, const NetConfig& cfg, Variant variant, const Cond& cond,
                 const Mat& start_a, const Mat& start_b, int steps,
                 bool constant_features = false);

}  // namespace keyflow
