#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace keyflow {

/// Ordered point set; row i is a stable point identity used for
/// correspondence throughout the pipeline. Coordinates in meters,
/// colors (when present) per-channel in [0, 1].
struct PointCloud {
    Eigen::MatrixX3d points;                  // N x 3
    std::optional<Eigen::MatrixX3d> colors;   // N x 3, same row count

    Eigen::Index size() const { return points.rows(); }
    bool empty() const { return points.rows() == 0; }

    /// Throws std::invalid_argument on non-finite coordinates, color
    /// length mismatch, or out-of-range channels.
    void validate() const;
};

/// Rotation + translation on R^3. `rotation` must be special orthogonal
/// (checked to 1e-9 by validate()).
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static RigidTransform identity() { return {}; }
    static RigidTransform from_rotation(const Eigen::Matrix3d& r) { return {r, Eigen::Vector3d::Zero()}; }
    static RigidTransform from_translation(const Eigen::Vector3d& t) { return {Eigen::Matrix3d::Identity(), t}; }

    Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }

    Eigen::Matrix4d as_matrix() const;
    static RigidTransform from_matrix(const Eigen::Matrix4d& m);

    bool is_valid(double tol = 1e-9) const;
    void validate(double tol = 1e-9) const;
};

/// compose(t2, t1) applies t1 first: (t2 o t1)(p) == t2(t1(p)).
RigidTransform compose(const RigidTransform& t2, const RigidTransform& t1);
RigidTransform invert(const RigidTransform& t);

/// Rotates and translates every point; colors pass through untouched.
PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud);

/// Shifts the cloud so its centroid is the origin; returns the shifted
/// cloud and the original centroid.
std::pair<PointCloud, Eigen::Vector3d> center(const PointCloud& cloud);

/// Keeps at most one point per axis-aligned grid cell of size `cell`.
/// Cell index is floor(coordinate / cell) per axis with the grid anchored
/// at the world origin; the first point encountered in input order wins.
PointCloud voxel_downsample(const PointCloud& cloud, double cell);

/// Returns exactly n points: a uniform subset without replacement when the
/// cloud has at least n (kept in input order), otherwise all points plus
/// uniformly drawn duplicates.
PointCloud resample(const PointCloud& cloud, Eigen::Index n, std::uint64_t seed);

/// Haar-uniform rotation (normalized random quaternion), zero translation.
RigidTransform random_rotation(std::uint64_t seed);

/// Text format: one `x y z [r g b]` line per point, `#` comments allowed.
/// Numbers are locale-independent decimal; readers reject NaN/inf and
/// throw DataError naming the offending file and line.
PointCloud read_pointcloud(const std::filesystem::path& path);
void write_pointcloud(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace keyflow
