#include "keyflow/pointcloud.hpp"

#include "keyflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "keyflow/rng.hpp"
#include "keyflow/textio.hpp"

namespace keyflow {

void PointCloud::validate() const {
    if (!points.allFinite())
        throw std::invalid_argument("point cloud contains non-finite coordinates");
    if (colors) {
        if (colors->rows() != points.rows())
            throw std::invalid_argument("color count does not match point count");
        if (!colors->allFinite() || colors->minCoeff() < 0.0 || colors->maxCoeff() > 1.0)
            throw std::invalid_argument("color channels must be finite and within [0, 1]");
    }
}

Eigen::Matrix4d RigidTransform::as_matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
    RigidTransform t{m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
    t.validate();
    return t;
}

bool RigidTransform::is_valid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

void RigidTransform::validate(double tol) const {
    if (!is_valid(tol))
        throw DataError("rotation is not special orthogonal within tolerance");
}

RigidTransform compose(const RigidTransform& t2, const RigidTransform& t1) {
    return {t2.rotation * t1.rotation, t2.rotation * t1.translation + t2.translation};
}

RigidTransform invert(const RigidTransform& t) {
    const Eigen::Matrix3d rt = t.rotation.transpose();
    return {rt, -(rt * t.translation)};
}

PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud) {
    if (cloud.empty()) throw std::invalid_argument("apply_transform: empty cloud");
    PointCloud out;
    out.points = (cloud.points * t.rotation.transpose()).rowwise() + t.translation.transpose();
    out.colors = cloud.colors;
    return out;
}

std::pair<PointCloud, Eigen::Vector3d> center(const PointCloud& cloud) {
    if (cloud.empty()) throw std::invalid_argument("center: empty cloud");
    const Eigen::Vector3d centroid = cloud.points.colwise().mean();
    PointCloud out;
    out.points = cloud.points.rowwise() - centroid.transpose();
    out.colors = cloud.colors;
    return {std::move(out), centroid};
}

PointCloud voxel_downsample(const PointCloud& cloud, double cell) {
    if (!(cell > 0.0)) throw std::invalid_argument("voxel_downsample: cell size must be positive");
    std::map<std::array<std::int64_t, 3>, bool> seen;
    std::vector<Eigen::Index> kept;
    kept.reserve(cloud.size());
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
        const std::array<std::int64_t, 3> key = {
            static_cast<std::int64_t>(std::floor(cloud.points(i, 0) / cell)),
            static_cast<std::int64_t>(std::floor(cloud.points(i, 1) / cell)),
            static_cast<std::int64_t>(std::floor(cloud.points(i, 2) / cell))};
        if (seen.emplace(key, true).second) kept.push_back(i);
    }
    PointCloud out;
    out.points.resize(static_cast<Eigen::Index>(kept.size()), 3);
    if (cloud.colors) out.colors.emplace(static_cast<Eigen::Index>(kept.size()), 3);
    for (std::size_t k = 0; k < kept.size(); ++k) {
        out.points.row(static_cast<Eigen::Index>(k)) = cloud.points.row(kept[k]);
        if (cloud.colors) out.colors->row(static_cast<Eigen::Index>(k)) = cloud.colors->row(kept[k]);
    }
    return out;
}

PointCloud resample(const PointCloud& cloud, Eigen::Index n, std::uint64_t seed) {
    if (cloud.empty()) throw std::invalid_argument("resample: empty cloud");
    if (n < 1) throw std::invalid_argument("resample: target count must be >= 1");
    Rng rng(seed);
    const Eigen::Index m = cloud.size();
    std::vector<Eigen::Index> idx;
    idx.reserve(static_cast<std::size_t>(n));
    if (m >= n) {
        // Partial Fisher-Yates, then restore input order so that n == |P|
        // reproduces the cloud exactly.
        std::vector<Eigen::Index> pool(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) pool[static_cast<std::size_t>(i)] = i;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto j = i + static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(m - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        idx.assign(pool.begin(), pool.begin() + n);
        std::sort(idx.begin(), idx.end());
    } else {
        for (Eigen::Index i = 0; i < m; ++i) idx.push_back(i);
        for (Eigen::Index i = m; i < n; ++i)
            idx.push_back(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(m))));
    }
    PointCloud out;
    out.points.resize(n, 3);
    if (cloud.colors) out.colors.emplace(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.points.row(i) = cloud.points.row(idx[static_cast<std::size_t>(i)]);
        if (cloud.colors) out.colors->row(i) = cloud.colors->row(idx[static_cast<std::size_t>(i)]);
    }
    return out;
}

RigidTransform random_rotation(std::uint64_t seed) {
    Rng rng(seed);
    // Normalized 4D Gaussian is uniform on S^3, hence Haar on SO(3).
    Eigen::Vector4d q;
    for (int i = 0; i < 4; ++i) q[i] = rng.normal();
    q.normalize();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    RigidTransform t;
    t.rotation << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return t;
}

PointCloud read_pointcloud(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open point cloud file: " + path.string());
    std::vector<Eigen::Vector3d> pts;
    std::vector<Eigen::Vector3d> cols;
    int arity = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto tokens = split_ws(line);
        if (tokens.empty() || tokens[0][0] == '#') continue;
        const std::string ctx = path.string() + ":" + std::to_string(lineno);
        if (tokens.size() != 3 && tokens.size() != 6)
            throw DataError("expected 3 or 6 numbers in " + ctx);
        if (arity == 0) arity = static_cast<int>(tokens.size());
        if (static_cast<int>(tokens.size()) != arity)
            throw DataError("inconsistent column count in " + ctx);
        Eigen::Vector3d p;
        for (int k = 0; k < 3; ++k) p[k] = parse_double(tokens[static_cast<std::size_t>(k)], ctx);
        if (!p.allFinite()) throw DataError("non-finite coordinate in " + ctx);
        pts.push_back(p);
        if (arity == 6) {
            Eigen::Vector3d c;
            for (int k = 0; k < 3; ++k) c[k] = parse_double(tokens[static_cast<std::size_t>(3 + k)], ctx);
            if (!c.allFinite() || c.minCoeff() < 0.0 || c.maxCoeff() > 1.0)
                throw DataError("color channel out of [0, 1] in " + ctx);
            cols.push_back(c);
        }
    }
    PointCloud cloud;
    cloud.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) cloud.points.row(static_cast<Eigen::Index>(i)) = pts[i];
    if (arity == 6) {
        cloud.colors.emplace(static_cast<Eigen::Index>(cols.size()), 3);
        for (std::size_t i = 0; i < cols.size(); ++i) cloud.colors->row(static_cast<Eigen::Index>(i)) = cols[i];
    }
    return cloud;
}

void write_pointcloud(const PointCloud& cloud, const std::filesystem::path& path) {
    cloud.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write point cloud file: " + path.string());
    std::string line;
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
        line.clear();
        for (int k = 0; k < 3; ++k) {
            if (k) line += ' ';
            line += format_double(cloud.points(i, k));
        }
        if (cloud.colors) {
            for (int k = 0; k < 3; ++k) {
                line += ' ';
                line += format_double((*cloud.colors)(i, k));
            }
        }
        line += '\n';
        out << line;
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace keyflow
