#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "keyflow/pointcloud.hpp"
#include "keyflow/registration.hpp"
#include "keyflow/rng.hpp"

using keyflow::FitCondition;
using keyflow::PointCloud;
using keyflow::RigidTransform;

namespace {

PointCloud random_cloud(std::uint64_t seed, Eigen::Index n) {
    keyflow::Rng rng(seed);
    PointCloud cloud;
    cloud.points.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) cloud.points(i, j) = rng.uniform(-0.5, 0.5);
    return cloud;
}

RigidTransform random_pose(std::uint64_t seed) {
    keyflow::Rng rng(keyflow::Rng::derive(seed, "pose_t"));
    RigidTransform t = keyflow::random_rotation(keyflow::Rng::derive(seed, "pose_r"));
    for (int j = 0; j < 3; ++j) t.translation(j) = rng.uniform(-1.0, 1.0);
    return t;
}

double rot_err_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    // atan2 of the skew norm against the trace: unlike acos(trace), this
    // resolves angles far below 1e-6 degrees, which the exact-recovery
    // bounds here sit under.
    const Eigen::Matrix3d m = a.transpose() * b;
    const double s = 0.5 * Eigen::Vector3d(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0),
                                           m(1, 0) - m(0, 1)).norm();
    return std::atan2(s, 0.5 * (m.trace() - 1.0)) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("kabsch_fit recovers an exact rigid motion to machine precision") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const PointCloud src = random_cloud(seed, 64);
        const RigidTransform truth = random_pose(seed);
        const PointCloud tgt = keyflow::apply_transform(truth, src);
        const auto fit = keyflow::kabsch_fit(src, tgt);
        CHECK(fit.condition == FitCondition::well_posed);
        CHECK(rot_err_deg(fit.transform.rotation, truth.rotation) < 1e-7);
        CHECK((fit.transform.translation - truth.translation).norm() < 1e-9);
        CHECK(fit.rms_residual < 1e-9);
    }
}

TEST_CASE("kabsch_fit residual tracks isotropic noise amplitude") {
    // With i.i.d. N(0, sigma^2) noise on each coordinate of the target, the
    // optimal rms residual concentrates near sigma * sqrt(3) for large N.
    const double sigma = 0.01;
    keyflow::Rng rng(404);
    const PointCloud src = random_cloud(11, 2000);
    const RigidTransform truth = random_pose(11);
    PointCloud tgt = keyflow::apply_transform(truth, src);
    for (Eigen::Index i = 0; i < tgt.size(); ++i)
        for (int j = 0; j < 3; ++j) tgt.points(i, j) += sigma * rng.normal();
    const auto fit = keyflow::kabsch_fit(src, tgt);
    const double expect = sigma * std::sqrt(3.0);
    CHECK(fit.rms_residual > 0.8 * expect);
    CHECK(fit.rms_residual < 1.2 * expect);
    // The pose estimate should still be close.
    CHECK(rot_err_deg(fit.transform.rotation, truth.rotation) < 0.5);
    CHECK((fit.transform.translation - truth.translation).norm() < 0.002);
}

TEST_CASE("kabsch_fit flags collinear and coincident sources") {
    PointCloud line;
    line.points.resize(5, 3);
    for (int i = 0; i < 5; ++i) line.points.row(i) << 0.1 * i, 0.2 * i, -0.1 * i;
    const RigidTransform pose = random_pose(3);
    const auto fit_line = keyflow::kabsch_fit(line, keyflow::apply_transform(pose, line));
    CHECK(fit_line.condition == FitCondition::near_degenerate);

    PointCloud point;
    point.points = Eigen::MatrixX3d::Constant(4, 3, 0.25);
    const auto fit_point = keyflow::kabsch_fit(point, keyflow::apply_transform(pose, point));
    CHECK(fit_point.condition == FitCondition::near_degenerate);

    // A planar cloud is still well posed (two significant singular values).
    PointCloud plane;
    plane.points.resize(6, 3);
    plane.points << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0.5, 0.2, 0, 0.3, 0.9, 0;
    const auto fit_plane = keyflow::kabsch_fit(plane, keyflow::apply_transform(pose, plane));
    CHECK(fit_plane.condition == FitCondition::well_posed);
    CHECK(rot_err_deg(fit_plane.transform.rotation, pose.rotation) < 1e-7);
}

TEST_CASE("kabsch_fit never returns a reflection") {
    // A near-planar cloud plus a mirrored target is where a naive SVD
    // solution flips; det(R) must still be +1.
    PointCloud src;
    src.points.resize(6, 3);
    src.points << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1e-4, 0.5, 0.5, -1e-4, 0.2, 0.8, 0;
    PointCloud tgt = src;
    tgt.points.col(2) *= -1.0;  // mirror through the xy plane
    const auto fit = keyflow::kabsch_fit(src, tgt);
    CHECK(fit.transform.rotation.determinant() > 0.999999);
}

TEST_CASE("kabsch_fit rejects bad inputs") {
    const PointCloud ok = random_cloud(1, 8);
    PointCloud two;
    two.points = Eigen::MatrixX3d::Random(2, 3);
    CHECK_THROWS(keyflow::kabsch_fit(two, two));
    PointCloud mismatch;
    mismatch.points = Eigen::MatrixX3d::Random(5, 3);
    CHECK_THROWS(keyflow::kabsch_fit(ok, mismatch));
}

TEST_CASE("place_action composes fits in the documented order") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const RigidTransform ta = random_pose(seed);
        const RigidTransform tb = random_pose(seed + 1000);
        keyflow::FitReport fa, fb;
        fa.transform = ta;
        fb.transform = tb;
        const RigidTransform action = keyflow::place_action(fa, fb);
        const RigidTransform expect = keyflow::compose(keyflow::invert(ta), tb);
        CHECK((action.rotation - expect.rotation).norm() < 1e-14);
        CHECK((action.translation - expect.translation).norm() < 1e-14);
    }
}

TEST_CASE("place_action is invariant to a shared left-multiplied motion") {
    // Moving both fitted poses by the same world motion g leaves the relative
    // action untouched: inv(g ta) (g tb) == inv(ta) tb.
    const RigidTransform ta = random_pose(7);
    const RigidTransform tb = random_pose(8);
    const RigidTransform g = random_pose(9);
    keyflow::FitReport fa, fb, fga, fgb;
    fa.transform = ta;
    fb.transform = tb;
    fga.transform = keyflow::compose(g, ta);
    fgb.transform = keyflow::compose(g, tb);
    const RigidTransform plain = keyflow::place_action(fa, fb);
    const RigidTransform moved = keyflow::place_action(fga, fgb);
    CHECK((plain.rotation - moved.rotation).norm() < 1e-12);
    CHECK((plain.translation - moved.translation).norm() < 1e-12);
}

TEST_CASE("pick_action inverts the gripper-frame fit") {
    const RigidTransform tb = random_pose(21);
    keyflow::FitReport fb;
    fb.transform = tb;
    const RigidTransform a = keyflow::pick_action(fb);
    const RigidTransform expect = keyflow::invert(tb);
    CHECK((a.rotation - expect.rotation).norm() < 1e-14);
    CHECK((a.translation - expect.translation).norm() < 1e-14);
}

TEST_CASE("pick_action_general reduces to pick_action at identity") {
    const RigidTransform tb = random_pose(33);
    keyflow::FitReport fb, fid;
    fb.transform = tb;
    fid.transform = RigidTransform::identity();
    const RigidTransform general = keyflow::pick_action_general(fb, fid);
    const RigidTransform simple = keyflow::pick_action(fb);
    CHECK((general.rotation - simple.rotation).norm() < 1e-14);
    CHECK((general.translation - simple.translation).norm() < 1e-14);
}

TEST_CASE("fit-then-act round trip: the action maps b onto its goal") {
    // Synthetic "goal frame" exercise: clouds a and b live in a shared goal
    // frame; the world observes them under separate motions. The place action
    // computed from world-frame fits repositions world-b into the goal
    // relation with world-a.
    const PointCloud goal_a = random_cloud(51, 40);
    const PointCloud goal_b = random_cloud(52, 40);
    const RigidTransform wa = random_pose(53);  // goal a -> world
    const RigidTransform wb = random_pose(54);  // goal b -> world
    const PointCloud world_a = keyflow::apply_transform(wa, goal_a);
    const PointCloud world_b = keyflow::apply_transform(wb, goal_b);
    // Fit observed -> goal for each cloud, the direction the pipeline uses
    // with its generated goal clouds.
    const auto fit_a = keyflow::kabsch_fit(world_a, goal_a);
    const auto fit_b = keyflow::kabsch_fit(world_b, goal_b);
    const RigidTransform action = keyflow::place_action(fit_a, fit_b);
    // Moving world-b by the action lands it where the goal relation puts it
    // in world-a coordinates: action == wa o inv(wb).
    const RigidTransform expect = keyflow::compose(wa, keyflow::invert(wb));
    CHECK((action.rotation - expect.rotation).norm() < 1e-9);
    CHECK((action.translation - expect.translation).norm() < 1e-9);
    const PointCloud moved = keyflow::apply_transform(action, world_b);
    const PointCloud target = keyflow::apply_transform(wa, goal_b);
    CHECK((moved.points - target.points).norm() < 1e-8);
}
