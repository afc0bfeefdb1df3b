#pragma once

#include "keyflow/pointcloud.hpp"

namespace keyflow {

enum class FitCondition { well_posed, near_degenerate };

/// Result of a corresponded rigid fit. `rms_residual` captures how far the
/// target deviates from a rigid motion of the source (per-point root mean
/// square at the optimum).
struct FitReport {
    RigidTransform transform;
    double rms_residual = 0.0;
    FitCondition condition = FitCondition::well_posed;
};

/// Least-squares rigid alignment of corresponding point sets (row i of src
/// corresponds to row i of tgt) via SVD of the cross-covariance, with the
/// reflection case corrected so det(R) == +1 always.
///
/// Collinear or coincident sources (second singular value below 1e-9 times
/// the largest) are flagged near_degenerate; the fit is still returned.
/// Throws on fewer than 3 points or size mismatch.
FitReport kabsch_fit(const PointCloud& src, const PointCloud& tgt);

/// Relative place action: inverse(fit_a) o fit_b.
RigidTransform place_action(const FitReport& fit_a, const FitReport& fit_b);

/// Pick action against a canonical (identity-posed) gripper: inverse(fit_b).
RigidTransform pick_action(const FitReport& fit_b);

/// General pick action when the gripper itself was fitted: inverse(fit_b) o fit_a.
RigidTransform pick_action_general(const FitReport& fit_b, const FitReport& fit_a);

}  // namespace keyflow
