#include "keyflow/net.hpp"

#include "keyflow/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace keyflow {

// Dimensions normally arrive from config files, so violations are data
// errors rather than programming errors.
void NetConfig::validate() const {
    if (feat_dim < 1 || lang_dim < 1 || time_dim < 1 || mask_dim < 1)
        throw DataError("NetConfig: embedding dims must be >= 1");
    if (time_dim % 2 != 0 || time_dim < 4)
        throw DataError("NetConfig: time_dim must be even and >= 4");
    if (enc_hidden < 1 || vel_hidden < 1)
        throw DataError("NetConfig: hidden widths must be >= 1");
    if (vocab_size < 1) throw DataError("NetConfig: vocab_size must be >= 1");
}

Eigen::RowVectorXd time_embedding(double t, int dim) {
    if (dim % 2 != 0 || dim < 4)
        throw std::invalid_argument("time_embedding: dim must be even and >= 4");
    Eigen::RowVectorXd out(dim);
    const int pairs = dim / 2;
    for (int k = 0; k < pairs; ++k) {
        const double freq = std::pow(10000.0, -2.0 * k / static_cast<double>(dim));
        const double angle = 2.0 * M_PI * t * freq;
        out(2 * k) = std::sin(angle);
        out(2 * k + 1) = std::cos(angle);
    }
    return out;
}

namespace {

Mat uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows));
    Mat out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = rng.uniform(-bound, bound);
    return out;
}

Mat normal_scaled(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    Mat out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = scale * rng.normal();
    return out;
}

void init_mlp_group(ParamStore& store, const std::string& prefix, int in_dim, int hidden,
                    int out_dim, Rng& rng) {
    store.create(prefix + ".W1", uniform_fan_in(in_dim, hidden, rng));
    store.create(prefix + ".b1", Mat::Zero(1, hidden));
    store.create(prefix + ".W2", uniform_fan_in(hidden, hidden, rng));
    store.create(prefix + ".b2", Mat::Zero(1, hidden));
    store.create(prefix + ".W3", uniform_fan_in(2 * hidden, hidden, rng));
    store.create(prefix + ".b3", Mat::Zero(1, hidden));
    store.create(prefix + ".W4", uniform_fan_in(hidden, out_dim, rng));
    store.create(prefix + ".b4", Mat::Zero(1, out_dim));
}

}  // namespace

void init_params(ParamStore& store, const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    // Fixed creation order keeps the RNG stream, and therefore the init,
    // reproducible for a given seed and config.
    init_mlp_group(store, "enc_a", 6, cfg.enc_hidden, cfg.feat_dim, rng);
    init_mlp_group(store, "enc_b", 6, cfg.enc_hidden, cfg.feat_dim, rng);
    init_mlp_group(store, "vel", cfg.point_dim(), cfg.vel_hidden, cfg.vel_hidden, rng);
    store.create("vel.head", Mat::Zero(cfg.vel_hidden, 3));
    store.create("vel.head_b", Mat::Zero(1, 3));
    const double lang_scale = 1.0 / std::sqrt(static_cast<double>(cfg.lang_dim));
    const double mask_scale = 1.0 / std::sqrt(static_cast<double>(cfg.mask_dim));
    store.create("embed.lang", normal_scaled(cfg.vocab_size, cfg.lang_dim, lang_scale, rng));
    store.create("embed.mask", normal_scaled(2, cfg.mask_dim, mask_scale, rng));
}

Tape::NodeId ParamTape::operator[](const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    const Tape::NodeId id = tape_->param(name, store_->value(name));
    ids_.emplace(name, id);
    return id;
}

namespace {

Tape::NodeId dense(ParamTape& pt, const std::string& w, const std::string& b, Tape::NodeId x) {
    Tape& t = pt.tape();
    return t.add_rowvec(t.matmul(x, pt[w]), pt[b]);
}

// Two shared layers, max pool, pool broadcast + concat, two more layers.
// The caller applies (or skips) a nonlinearity on the final layer.
Tape::NodeId trunk(ParamTape& pt, const std::string& prefix, Tape::NodeId x) {
    Tape& t = pt.tape();
    const Tape::NodeId h1 = t.gelu(dense(pt, prefix + ".W1", prefix + ".b1", x));
    const Tape::NodeId h2 = t.gelu(dense(pt, prefix + ".W2", prefix + ".b2", h1));
    const Tape::NodeId pooled = t.colwise_max(h2);
    const Tape::NodeId spread = t.repeat_row(pooled, t.value(h2).rows());
    const Tape::NodeId joined = t.hcat(h2, spread);
    const Tape::NodeId h3 = t.gelu(dense(pt, prefix + ".W3", prefix + ".b3", joined));
    return dense(pt, prefix + ".W4", prefix + ".b4", h3);
}

}  // namespace

Tape::NodeId encoder_forward(ParamTape& pt, const std::string& prefix, const Mat& points_rgb) {
    if (points_rgb.cols() != 6)
        throw std::invalid_argument("encoder_forward: input must be N x 6 (xyz | rgb)");
    if (points_rgb.rows() < 1)
        throw std::invalid_argument("encoder_forward: empty input");
    Tape& t = pt.tape();
    return trunk(pt, prefix, t.input(points_rgb));
}

Tape::NodeId velocity_forward(ParamTape& pt, Tape::NodeId assembled) {
    Tape& t = pt.tape();
    const Tape::NodeId h4 = t.gelu(trunk(pt, "vel", assembled));
    return t.add_rowvec(t.matmul(h4, pt["vel.head"]), pt["vel.head_b"]);
}

}  // namespace keyflow
