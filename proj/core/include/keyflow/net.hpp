#pragma once

#include "keyflow/params.hpp"
#include "keyflow/rng.hpp"
#include "keyflow/tape.hpp"

#include <map>
#include <string>

namespace keyflow {

// Architecture hyper-parameters shared by the point encoders and the velocity
// network. Per-point generator input width = 3 + feat_dim + lang_dim +
// time_dim + mask_dim.
struct NetConfig {
    int feat_dim = 64;
    int lang_dim = 32;
    int time_dim = 32;
    int mask_dim = 32;
    int enc_hidden = 256;
    int vel_hidden = 256;
    int vocab_size = 1;

    int point_dim() const { return 3 + feat_dim + lang_dim + time_dim + mask_dim; }
    void validate() const;
};

// Sinusoidal clock for the scalar flow time t in [0, 1]: interleaved
// (sin, cos) pairs of 2*pi*t*f_k with f_k = 10000^(-2k/dim). dim must be even
// and >= 4; the k >= 1 pairs complete less than a full turn over [0, 1], so
// the embedding separates every pair of distinct times including t=0 vs t=1.
Eigen::RowVectorXd time_embedding(double t, int dim);

// Creates every trainable array (two point encoders, velocity trunk and head,
// instruction and side embeddings) with a deterministic, seeded init. The
// velocity head starts at exactly zero so the initial predicted field is zero
// everywhere and the initial loss equals the mean squared drift target.
void init_params(ParamStore& store, const NetConfig& cfg, Rng& rng);

// Binds a ParamStore to a Tape, registering each array as a tape parameter on
// first use so repeated lookups share one node.
class ParamTape {
public:
    ParamTape(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}
    Tape::NodeId operator[](const std::string& name);
    Tape& tape() { return *tape_; }

private:
    Tape* tape_;
    const ParamStore* store_;
    std::map<std::string, Tape::NodeId> ids_;
};

// Per-point feature extractor over N x 6 rows (xyz | rgb): two shared layers,
// column-wise max pool, global vector concatenated back to every row, two more
// shared layers, linear output N x feat_dim. Row i of the output depends on
// row i and on the pooled vector only, so it is invariant to permutations of
// the other rows. `prefix` selects the weight group ("enc_a" or "enc_b").
Tape::NodeId encoder_forward(ParamTape& pt, const std::string& prefix, const Mat& points_rgb);

// Velocity trunk + head over a pre-assembled N x point_dim() input. Same
// pool-and-concat topology as the encoder; final linear head emits N x 3.
Tape::NodeId velocity_forward(ParamTape& pt, Tape::NodeId assembled);

}  // namespace keyflow
