#include "keyflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace keyflow {

namespace {

using Eigen::Vector2d;
using Eigen::Vector3d;

struct Part {
    double area = 0.0;
    Vector3d rgb = Vector3d::Constant(0.5);
    std::function<Vector3d(Rng&)> sample;
};

PointCloud sample_surface(const std::vector<Part>& parts, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_surface: n must be >= 1");
    std::vector<double> cumulative;
    cumulative.reserve(parts.size());
    double total = 0.0;
    for (const Part& part : parts) {
        if (!(part.area > 0.0)) throw std::invalid_argument("sample_surface: non-positive area");
        total += part.area;
        cumulative.push_back(total);
    }
    PointCloud cloud;
    cloud.points.resize(n, 3);
    cloud.colors.emplace(n, 3);
    for (int i = 0; i < n; ++i) {
        const double r = rng.uniform() * total;
        const std::size_t idx = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
        const Part& part = parts[std::min(idx, parts.size() - 1)];
        cloud.points.row(i) = part.sample(rng).transpose();
        cloud.colors->row(i) = part.rgb.transpose();
    }
    // Textured appearance: blend each part's base color with the point's
    // normalized model-frame position. Appearance rides with the surface, so
    // it is unchanged by object rotation, and it identifies individual points
    // rather than just parts — the signal a rotation-augmented encoder needs
    // to learn point correspondence, standing in for the texture a real
    // camera would capture.
    const Eigen::RowVector3d lo = cloud.points.colwise().minCoeff();
    const Eigen::RowVector3d hi = cloud.points.colwise().maxCoeff();
    const Eigen::RowVector3d span = (hi - lo).cwiseMax(1e-9);
    for (int i = 0; i < n; ++i) {
        const Eigen::RowVector3d ramp =
            (Eigen::RowVector3d(cloud.points.row(i)) - lo).cwiseQuotient(span);
        cloud.colors->row(i) = 0.5 * cloud.colors->row(i) + 0.5 * ramp;
    }
    return cloud;
}

// Planar patch spanned by two edge vectors from an origin corner.
Part rect_part(const Vector3d& origin, const Vector3d& edge_u, const Vector3d& edge_v,
               const Vector3d& rgb) {
    Part part;
    part.area = edge_u.cross(edge_v).norm();
    part.rgb = rgb;
    part.sample = [origin, edge_u, edge_v](Rng& rng) {
        return Vector3d(origin + rng.uniform() * edge_u + rng.uniform() * edge_v);
    };
    return part;
}

void append_box(std::vector<Part>& parts, const Vector3d& center, const Vector3d& size,
                const Vector3d& rgb) {
    const Vector3d h = 0.5 * size;
    const Vector3d ex(size.x(), 0, 0), ey(0, size.y(), 0), ez(0, 0, size.z());
    const Vector3d corner = center - h;
    parts.push_back(rect_part(corner, ex, ey, rgb));                          // z-
    parts.push_back(rect_part(corner + ez, ex, ey, rgb));                     // z+
    parts.push_back(rect_part(corner, ex, ez, rgb));                          // y-
    parts.push_back(rect_part(corner + ey, ex, ez, rgb));                     // y+
    parts.push_back(rect_part(corner, ey, ez, rgb));                          // x-
    parts.push_back(rect_part(corner + ex, ey, ez, rgb));                     // x+
}

Part cylinder_lateral_part(double radius, double z0, double z1, const Vector3d& rgb) {
    Part part;
    part.area = 2.0 * M_PI * radius * (z1 - z0);
    part.rgb = rgb;
    part.sample = [radius, z0, z1](Rng& rng) {
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        return Vector3d(radius * std::cos(a), radius * std::sin(a), rng.uniform(z0, z1));
    };
    return part;
}

Part disc_part(double radius, double z, const Vector3d& rgb) {
    Part part;
    part.area = M_PI * radius * radius;
    part.rgb = rgb;
    part.sample = [radius, z](Rng& rng) {
        const double r = radius * std::sqrt(rng.uniform());
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        return Vector3d(r * std::cos(a), r * std::sin(a), z);
    };
    return part;
}

RigidTransform rot_y(double degrees) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(degrees * M_PI / 180.0, Vector3d::UnitY()).toRotationMatrix();
    return t;
}

RigidTransform rot_z(double degrees) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(degrees * M_PI / 180.0, Vector3d::UnitZ()).toRotationMatrix();
    return t;
}

// Grasp with the grip point at `at` (object model coordinates) and gripper
// orientation `orient` (object-frame axes of the gripper model axes).
RigidTransform grasp_at(const Vector3d& at, const RigidTransform& orient) {
    return compose(compose(RigidTransform::from_translation(at), orient),
                   RigidTransform::from_translation(-gripper_grip_point()));
}

double bounding_diameter(const PointCloud& cloud) {
    const Vector3d centroid = cloud.points.colwise().mean();
    return 2.0 * (cloud.points.rowwise() - centroid.transpose()).rowwise().norm().maxCoeff();
}

// Fixed cup geometry shared by the builder and the grasp definitions.
constexpr double kCupRadius = 0.035;
constexpr double kCupHeight = 0.10;
constexpr double kHandleAway = 0.05;   // handle box centre, +x of the cup axis

}  // namespace

PointCloud make_box(const Vector3d& size, const Vector3d& rgb, int n, Rng& rng) {
    if (size.minCoeff() <= 0.0) throw std::invalid_argument("make_box: size must be positive");
    std::vector<Part> parts;
    append_box(parts, Vector3d::Zero(), size, rgb);
    return sample_surface(parts, n, rng);
}

PointCloud make_cylinder(double radius, double height, const Vector3d& rgb, int n, Rng& rng) {
    if (radius <= 0.0 || height <= 0.0)
        throw std::invalid_argument("make_cylinder: radius and height must be positive");
    std::vector<Part> parts;
    parts.push_back(cylinder_lateral_part(radius, -0.5 * height, 0.5 * height, rgb));
    parts.push_back(disc_part(radius, -0.5 * height, rgb));
    parts.push_back(disc_part(radius, 0.5 * height, rgb));
    return sample_surface(parts, n, rng);
}

PointCloud make_ring(double major_radius, double tube_radius, const Vector3d& rgb, int n,
                     Rng& rng) {
    if (!(major_radius > tube_radius && tube_radius > 0.0))
        throw std::invalid_argument("make_ring: need major_radius > tube_radius > 0");
    Part part;
    part.area = 4.0 * M_PI * M_PI * major_radius * tube_radius;
    part.rgb = rgb;
    part.sample = [major_radius, tube_radius](Rng& rng) {
        // Surface area density over the tube angle is proportional to
        // R + r cos(theta); rejection against the flat envelope keeps the
        // sampling exactly uniform by area.
        double theta;
        for (;;) {
            theta = rng.uniform(0.0, 2.0 * M_PI);
            const double accept = (major_radius + tube_radius * std::cos(theta)) /
                                  (major_radius + tube_radius);
            if (rng.uniform() < accept) break;
        }
        const double phi = rng.uniform(0.0, 2.0 * M_PI);
        const double ring = major_radius + tube_radius * std::cos(theta);
        return Vector3d(ring * std::cos(phi), ring * std::sin(phi),
                        tube_radius * std::sin(theta));
    };
    return sample_surface({part}, n, rng);
}

PointCloud make_hook(int n, Rng& rng) {
    std::vector<Part> parts;
    // Post from the origin up, arm along +x near the top.
    append_box(parts, Vector3d(0, 0, 0.06), Vector3d(0.02, 0.02, 0.12), Vector3d(0.55, 0.35, 0.2));
    append_box(parts, Vector3d(0.05, 0, 0.11), Vector3d(0.08, 0.015, 0.015),
               Vector3d(0.75, 0.55, 0.3));
    return sample_surface(parts, n, rng);
}

PointCloud make_cup(const Vector3d& body_rgb, const Vector3d& handle_rgb, int n, Rng& rng) {
    std::vector<Part> parts;
    parts.push_back(cylinder_lateral_part(kCupRadius, -0.5 * kCupHeight, 0.5 * kCupHeight,
                                          body_rgb));
    parts.push_back(disc_part(kCupRadius, -0.5 * kCupHeight, body_rgb));
    append_box(parts, Vector3d(kHandleAway, 0, 0), Vector3d(0.03, 0.01, 0.05), handle_rgb);
    return sample_surface(parts, n, rng);
}

PointCloud make_slotted_slab(const Vector3d& size, const Vector2d& slot_center,
                             const Vector2d& slot_size, const Vector3d& rgb, int n, Rng& rng) {
    const double hx = 0.5 * size.x(), hy = 0.5 * size.y(), hz = 0.5 * size.z();
    const double x0 = slot_center.x() - 0.5 * slot_size.x();
    const double x1 = slot_center.x() + 0.5 * slot_size.x();
    const double y0 = slot_center.y() - 0.5 * slot_size.y();
    const double y1 = slot_center.y() + 0.5 * slot_size.y();
    if (x0 <= -hx || x1 >= hx || y0 <= -hy || y1 >= hy)
        throw std::invalid_argument("make_slotted_slab: slot must lie strictly inside the slab");

    std::vector<Part> parts;
    auto face_with_hole = [&](double z) {
        // Four strips around the slot cover the face exactly once.
        parts.push_back(rect_part(Vector3d(-hx, -hy, z), Vector3d(x0 + hx, 0, 0),
                                  Vector3d(0, size.y(), 0), rgb));
        parts.push_back(rect_part(Vector3d(x1, -hy, z), Vector3d(hx - x1, 0, 0),
                                  Vector3d(0, size.y(), 0), rgb));
        parts.push_back(rect_part(Vector3d(x0, -hy, z), Vector3d(x1 - x0, 0, 0),
                                  Vector3d(0, y0 + hy, 0), rgb));
        parts.push_back(rect_part(Vector3d(x0, y1, z), Vector3d(x1 - x0, 0, 0),
                                  Vector3d(0, hy - y1, 0), rgb));
    };
    face_with_hole(-hz);
    face_with_hole(hz);
    // Outer walls.
    parts.push_back(rect_part(Vector3d(-hx, -hy, -hz), Vector3d(size.x(), 0, 0), Vector3d(0, 0, size.z()), rgb));
    parts.push_back(rect_part(Vector3d(-hx, hy, -hz), Vector3d(size.x(), 0, 0), Vector3d(0, 0, size.z()), rgb));
    parts.push_back(rect_part(Vector3d(-hx, -hy, -hz), Vector3d(0, size.y(), 0), Vector3d(0, 0, size.z()), rgb));
    parts.push_back(rect_part(Vector3d(hx, -hy, -hz), Vector3d(0, size.y(), 0), Vector3d(0, 0, size.z()), rgb));
    // Slot walls.
    parts.push_back(rect_part(Vector3d(x0, y0, -hz), Vector3d(x1 - x0, 0, 0), Vector3d(0, 0, size.z()), rgb));
    parts.push_back(rect_part(Vector3d(x0, y1, -hz), Vector3d(x1 - x0, 0, 0), Vector3d(0, 0, size.z()), rgb));
    parts.push_back(rect_part(Vector3d(x0, y0, -hz), Vector3d(0, y1 - y0, 0), Vector3d(0, 0, size.z()), rgb));
    parts.push_back(rect_part(Vector3d(x1, y0, -hz), Vector3d(0, y1 - y0, 0), Vector3d(0, 0, size.z()), rgb));
    return sample_surface(parts, n, rng);
}

PointCloud make_gripper_cloud(int n, Rng& rng) {
    std::vector<Part> parts;
    append_box(parts, Vector3d(0, 0, 0.05), Vector3d(0.06, 0.02, 0.02), Vector3d(0.5, 0.5, 0.5));
    append_box(parts, Vector3d(-0.025, 0, 0.02), Vector3d(0.01, 0.02, 0.04), Vector3d(0.3, 0.3, 0.3));
    append_box(parts, Vector3d(0.025, 0, 0.02), Vector3d(0.01, 0.02, 0.04), Vector3d(0.3, 0.3, 0.3));
    return sample_surface(parts, n, rng);
}

Eigen::Vector3d gripper_grip_point() { return {0.0, 0.0, 0.015}; }

std::vector<std::string> task_names() {
    return {"peg-in-slot", "hang-ring-on-hook", "stack-on-slab", "pour-from-cup"};
}

TaskObjects make_task_objects(const std::string& task, long shape_seed) {
    const std::uint64_t seed = static_cast<std::uint64_t>(shape_seed);
    Rng rng_a(Rng::derive(seed, "shape_a"));
    Rng rng_b(Rng::derive(seed, "shape_b"));

    TaskObjects objs;
    if (task == "peg-in-slot") {
        objs.model_a = make_slotted_slab(Vector3d(0.12, 0.08, 0.03), Vector2d(0.02, 0.01),
                                         Vector2d(0.02, 0.02), Vector3d(0.7, 0.7, 0.75), 2200,
                                         rng_a);
        objs.model_b = make_cylinder(0.008, 0.08, Vector3d(0.8, 0.3, 0.2), 900, rng_b);
        // Orientation markings: a painted top half plus a side stripe. A
        // plain cylinder is symmetric under axial spin and end-for-end flip,
        // which would leave the demonstrated correspondences unlearnable;
        // the markings make the peg's pose visually identifiable, like the
        // printed face of a real dowel.
        for (Eigen::Index i = 0; i < objs.model_b.size(); ++i) {
            if (objs.model_b.points(i, 2) > 0.0)
                objs.model_b.colors->row(i) = Eigen::RowVector3d(0.9, 0.75, 0.3);
            if (objs.model_b.points(i, 0) > 0.0) (*objs.model_b.colors)(i, 2) += 0.2;
        }
        objs.goal = RigidTransform::from_translation(Vector3d(0.02, 0.01, 0.025));
        objs.grasps = {{"grasp the peg near its top", grasp_at(Vector3d(0, 0, 0.03), {})},
                       {"grasp the peg at its middle", grasp_at(Vector3d(0, 0, 0), rot_z(90))}};
        objs.place_instruction = "slide the peg into the slot";
    } else if (task == "hang-ring-on-hook") {
        objs.model_a = make_hook(1600, rng_a);
        objs.model_b = make_ring(0.03, 0.006, Vector3d(0.2, 0.4, 0.8), 1200, rng_b);
        objs.goal = compose(RigidTransform::from_translation(Vector3d(0.05, 0, 0.0935)),
                            rot_y(90));
        objs.grasps = {{"grasp the ring by its rim", grasp_at(Vector3d(0.03, 0, 0), {})}};
        objs.place_instruction = "hang the ring on the hook";
    } else if (task == "stack-on-slab") {
        objs.model_a = make_box(Vector3d(0.12, 0.08, 0.03), Vector3d(0.45, 0.45, 0.5), 1800,
                                rng_a);
        objs.model_b = make_box(Vector3d(0.05, 0.04, 0.03), Vector3d(0.85, 0.65, 0.2), 800,
                                rng_b);
        objs.goal = RigidTransform::from_translation(Vector3d(-0.02, 0.015, 0.03));
        objs.grasps = {{"grasp the block", grasp_at(Vector3d(0, 0, 0.005), rot_z(90))}};
        objs.place_instruction = "stack the block on the slab";
    } else if (task == "pour-from-cup") {
        objs.model_a = make_cup(Vector3d(0.75, 0.25, 0.2), Vector3d(0.25, 0.35, 0.8), 2000,
                                rng_a);
        objs.model_b = make_cup(Vector3d(0.2, 0.6, 0.3), Vector3d(0.85, 0.6, 0.2), 2000, rng_b);
        objs.goal = compose(RigidTransform::from_translation(Vector3d(0, 0, 0.12)), rot_y(120));
        objs.grasps = {
            {"grasp the cup by the handle",
             grasp_at(Vector3d(kHandleAway, 0, 0.015), rot_z(90))},
            {"grasp the cup by its body",
             grasp_at(Vector3d(-kCupRadius, 0, 0.035), {})}};
        objs.place_instruction = "tip the cup to pour into the other cup";
    } else {
        throw std::invalid_argument("make_task_objects: unknown task '" + task + "'");
    }
    objs.object_size_b = bounding_diameter(objs.model_b);
    return objs;
}

RigidTransform sample_workspace_pose(Rng& rng) {
    RigidTransform pose = random_rotation(rng.bits());
    for (int k = 0; k < 3; ++k) pose.translation[k] = rng.uniform(-0.25, 0.25);
    return pose;
}

Dataset generate_task_dataset(const std::string& task, int n_demos, long shape_seed,
                              long pose_seed) {
    if (n_demos < 1) throw std::invalid_argument("generate_task_dataset: n_demos must be >= 1");
    const TaskObjects objs = make_task_objects(task, shape_seed);
    Rng gripper_rng(Rng::derive(static_cast<std::uint64_t>(shape_seed), "gripper"));
    const PointCloud gripper = make_gripper_cloud(1200, gripper_rng);

    Dataset data;
    data.task = task;
    data.shape_seed = shape_seed;
    for (const GraspMode& mode : objs.grasps) data.vocabulary.push_back(mode.instruction);
    data.vocabulary.push_back(objs.place_instruction);
    const int place_id = static_cast<int>(data.vocabulary.size()) - 1;

    for (int d = 0; d < n_demos; ++d) {
        const std::uint64_t sd =
            Rng::derive(Rng::derive(static_cast<std::uint64_t>(pose_seed), "demo"),
                        static_cast<std::uint64_t>(d));
        Rng pose_rng(sd);
        const RigidTransform w_pick_b = sample_workspace_pose(pose_rng);
        const RigidTransform w_place_a = sample_workspace_pose(pose_rng);
        const RigidTransform w_place_b = sample_workspace_pose(pose_rng);
        const std::size_t mode_idx = static_cast<std::size_t>(d) % objs.grasps.size();
        const GraspMode& mode = objs.grasps[mode_idx];

        DemonstrationRecord pick;
        pick.phase = "pick";
        pick.instruction_id = static_cast<int>(mode_idx);
        pick.instruction = mode.instruction;
        pick.cloud_a = gripper;  // canonical gripper model cloud
        pick.cloud_b = apply_transform(w_pick_b, objs.model_b);
        pick.t_a = RigidTransform::identity();
        pick.t_b = compose(invert(mode.grasp), invert(w_pick_b));
        pick.seed = static_cast<long>(sd);
        data.records.push_back(std::move(pick));

        DemonstrationRecord place;
        place.phase = "place";
        place.instruction_id = place_id;
        place.instruction = objs.place_instruction;
        place.cloud_a = apply_transform(w_place_a, objs.model_a);
        place.cloud_b = apply_transform(w_place_b, objs.model_b);
        place.t_a = invert(w_place_a);
        place.t_b = compose(objs.goal, invert(w_place_b));
        place.seed = static_cast<long>(sd);
        data.records.push_back(std::move(place));
    }
    data.validate();
    return data;
}

}  // namespace keyflow
