#pragma once

#include "keyflow/pointcloud.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace keyflow {

// One demonstration keyframe. Clouds are stored in raw observation
// coordinates; t_a and t_b map those coordinates into the demonstrated
// goal-configuration frame, so  t_a^-1 * t_b  is the ground-truth relative
// placement and, for grasps, t_b^-1 is the ground-truth gripper pose.
struct DemonstrationRecord {
    std::string phase;  // "pick" or "place"
    int instruction_id = 0;
    std::string instruction;
    PointCloud cloud_a;  // place: the stationary object; pick: the gripper model cloud
    PointCloud cloud_b;  // the object being placed or grasped
    RigidTransform t_a;
    RigidTransform t_b;
    long seed = 0;  // per-demo seed, kept for provenance

    void validate() const;
};

struct Dataset {
    std::string task;
    long shape_seed = 0;  // fixes the object geometry; held-out sets reuse it
    std::vector<std::string> vocabulary;  // instruction_id indexes this
    std::vector<DemonstrationRecord> records;

    void validate() const;
    std::vector<const DemonstrationRecord*> phase_records(const std::string& phase) const;
};

// Directory layout: manifest.json plus one .xyz file per cloud
// (r0000_a.xyz, r0000_b.xyz, ...). Writing is deterministic; reading
// validates shapes, transform orthonormality, and vocabulary indices and
// throws DataError on any violation.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace keyflow
