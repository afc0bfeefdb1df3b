#pragma once

#include "keyflow/dataset.hpp"
#include "keyflow/rng.hpp"

#include <string>
#include <vector>

namespace keyflow {

// Procedural object library. Every generator samples uniformly by surface
// area and is deterministic in the Rng stream. Point colors blend the
// requested per-part base color with a position ramp over the model-frame
// bounding box, giving each surface point a distinct pose-independent
// appearance (the stand-in for real texture that lets an encoder tell
// points apart under rotation). Dimensions are metres; shapes are centred
// on a natural model origin.

// Closed box centred at the origin.
PointCloud make_box(const Eigen::Vector3d& size, const Eigen::Vector3d& rgb, int n, Rng& rng);

// Capped cylinder, axis z, centred at the origin.
PointCloud make_cylinder(double radius, double height, const Eigen::Vector3d& rgb, int n,
                         Rng& rng);

// Torus, axis z, centred at the origin. Points satisfy
// sqrt(x^2+y^2) >= major_radius - tube_radius (the hole stays open).
PointCloud make_ring(double major_radius, double tube_radius, const Eigen::Vector3d& rgb, int n,
                     Rng& rng);

// Wall hook: vertical post rising from the origin plus a horizontal arm
// along +x near the top.
PointCloud make_hook(int n, Rng& rng);

// Open cup: lateral wall and bottom disc centred at the origin, plus a
// handle slab on the +x side in its own color (instructions refer to it).
PointCloud make_cup(const Eigen::Vector3d& body_rgb, const Eigen::Vector3d& handle_rgb, int n,
                    Rng& rng);

// Slab with a rectangular through-slot. The slot is deliberately off-centre
// so the goal pose is unambiguous.
PointCloud make_slotted_slab(const Eigen::Vector3d& size, const Eigen::Vector2d& slot_center,
                             const Eigen::Vector2d& slot_size, const Eigen::Vector3d& rgb, int n,
                             Rng& rng);

// Parallel-jaw gripper model: palm slab plus two fingers pointing down -z,
// tool origin midway between the fingertips. The grasp reference point
// (between the fingers, mid-height) is gripper_grip_point().
PointCloud make_gripper_cloud(int n, Rng& rng);
Eigen::Vector3d gripper_grip_point();

// One way to grasp object b: instruction text plus the grasp transform
// mapping gripper model coordinates into object-b model coordinates.
struct GraspMode {
    std::string instruction;
    RigidTransform grasp;
};

// Everything that defines a task instance: both model clouds, the goal
// placement (b-model coordinates -> a-model coordinates), the grasp modes,
// and the bounding diameter of the moved object (error budgets are quoted
// against it).
struct TaskObjects {
    PointCloud model_a;
    PointCloud model_b;
    RigidTransform goal;
    std::vector<GraspMode> grasps;
    std::string place_instruction;
    double object_size_b = 0.0;
};

std::vector<std::string> task_names();
TaskObjects make_task_objects(const std::string& task, long shape_seed);

// Demonstration set: per demo, one pick record (gripper model cloud vs the
// observed object) and one place record (both observed objects), with
// goal-frame transforms exact by construction. Grasp modes rotate through
// demo index. shape_seed fixes the object geometry; pose_seed drives the
// object placements, so held-out pose sets reuse the same objects.
Dataset generate_task_dataset(const std::string& task, int n_demos, long shape_seed,
                              long pose_seed);

// Workspace pose prior: translation uniform in [-0.25, 0.25]^3, uniform
// random orientation.
RigidTransform sample_workspace_pose(Rng& rng);

}  // namespace keyflow
