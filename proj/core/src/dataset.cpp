#include "keyflow/dataset.hpp"

#include "keyflow/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace keyflow {

namespace {

constexpr int kFormatVersion = 1;

std::string record_stem(std::size_t index) {
    std::ostringstream os;
    os << "r" << std::setw(4) << std::setfill('0') << index;
    return os.str();
}

nlohmann::json transform_to_json(const RigidTransform& t) {
    const Eigen::Matrix4d m = t.as_matrix();
    nlohmann::json out = nlohmann::json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) out.push_back(m(r, c));
    return out;
}

RigidTransform transform_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 16)
        throw DataError("dataset: " + where + " must be 16 numbers (row-major 4x4)");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            const auto& v = j[static_cast<std::size_t>(4 * r + c)];
            if (!v.is_number()) throw DataError("dataset: " + where + " has a non-numeric entry");
            m(r, c) = v.get<double>();
        }
    try {
        RigidTransform t = RigidTransform::from_matrix(m);
        t.validate();
        return t;
    } catch (const std::exception& e) {
        throw DataError("dataset: " + where + ": " + e.what());
    }
}

}  // namespace

void DemonstrationRecord::validate() const {
    if (phase != "pick" && phase != "place")
        throw DataError("dataset: record phase must be 'pick' or 'place', got '" + phase + "'");
    if (instruction.empty()) throw DataError("dataset: record has an empty instruction");
    if (cloud_a.size() < 3 || cloud_b.size() < 3)
        throw DataError("dataset: record clouds need at least 3 points");
    cloud_a.validate();
    cloud_b.validate();
    t_a.validate();
    t_b.validate();
}

void Dataset::validate() const {
    if (task.empty()) throw DataError("dataset: empty task name");
    if (vocabulary.empty()) throw DataError("dataset: empty vocabulary");
    if (records.empty()) throw DataError("dataset: no records");
    for (std::size_t i = 0; i < records.size(); ++i) {
        const DemonstrationRecord& rec = records[i];
        rec.validate();
        if (rec.instruction_id < 0 ||
            static_cast<std::size_t>(rec.instruction_id) >= vocabulary.size())
            throw DataError("dataset: record " + std::to_string(i) +
                            " instruction_id outside vocabulary");
        if (vocabulary[static_cast<std::size_t>(rec.instruction_id)] != rec.instruction)
            throw DataError("dataset: record " + std::to_string(i) +
                            " instruction text disagrees with vocabulary");
    }
}

std::vector<const DemonstrationRecord*> Dataset::phase_records(const std::string& phase) const {
    std::vector<const DemonstrationRecord*> out;
    for (const DemonstrationRecord& rec : records)
        if (rec.phase == phase) out.push_back(&rec);
    return out;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
    data.validate();
    std::filesystem::create_directories(dir);

    nlohmann::json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["task"] = data.task;
    manifest["shape_seed"] = data.shape_seed;
    manifest["vocabulary"] = data.vocabulary;
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        const DemonstrationRecord& rec = data.records[i];
        const std::string stem = record_stem(i);
        write_pointcloud(rec.cloud_a, dir / (stem + "_a.xyz"));
        write_pointcloud(rec.cloud_b, dir / (stem + "_b.xyz"));
        records.push_back({{"phase", rec.phase},
                           {"instruction_id", rec.instruction_id},
                           {"instruction", rec.instruction},
                           {"cloud_a", stem + "_a.xyz"},
                           {"cloud_b", stem + "_b.xyz"},
                           {"t_a", transform_to_json(rec.t_a)},
                           {"t_b", transform_to_json(rec.t_b)},
                           {"seed", rec.seed}});
    }
    manifest["records"] = std::move(records);

    std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_dataset: cannot open manifest in " + dir.string());
    os << manifest.dump(2) << "\n";
    if (!os) throw std::runtime_error("write_dataset: manifest write failed in " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
    const std::filesystem::path manifest_path = dir / "manifest.json";
    std::ifstream is(manifest_path, std::ios::binary);
    if (!is) throw DataError("dataset: cannot open " + manifest_path.string());

    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("dataset: manifest parse error in " + manifest_path.string() + ": " +
                        e.what());
    }

    Dataset data;
    try {
        if (manifest.at("format_version").get<int>() != kFormatVersion)
            throw DataError("dataset: unsupported format_version in " + manifest_path.string());
        data.task = manifest.at("task").get<std::string>();
        data.shape_seed = manifest.at("shape_seed").get<long>();
        data.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
        for (const auto& entry : manifest.at("records")) {
            DemonstrationRecord rec;
            rec.phase = entry.at("phase").get<std::string>();
            rec.instruction_id = entry.at("instruction_id").get<int>();
            rec.instruction = entry.at("instruction").get<std::string>();
            rec.cloud_a = read_pointcloud(dir / entry.at("cloud_a").get<std::string>());
            rec.cloud_b = read_pointcloud(dir / entry.at("cloud_b").get<std::string>());
            rec.t_a = transform_from_json(entry.at("t_a"), "t_a");
            rec.t_b = transform_from_json(entry.at("t_b"), "t_b");
            rec.seed = entry.at("seed").get<long>();
            data.records.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("dataset: manifest field error in " + manifest_path.string() + ": " +
                        e.what());
    }
    data.validate();
    return data;
}

}  // namespace keyflow
