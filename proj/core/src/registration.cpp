#include "keyflow/registration.hpp"

#include <Eigen/SVD>
#include <stdexcept>

namespace keyflow {

FitReport kabsch_fit(const PointCloud& src, const PointCloud& tgt) {
    if (src.size() != tgt.size())
        throw std::invalid_argument("kabsch_fit: source and target sizes differ");
    if (src.size() < 3)
        throw std::invalid_argument("kabsch_fit: need at least 3 correspondences");

    const Eigen::Index n = src.size();
    const Eigen::Vector3d cs = src.points.colwise().mean();
    const Eigen::Vector3d ct = tgt.points.colwise().mean();
    const Eigen::MatrixX3d s = src.points.rowwise() - cs.transpose();
    const Eigen::MatrixX3d t = tgt.points.rowwise() - ct.transpose();

    const Eigen::Matrix3d cross = s.transpose() * t;  // maps src frame to tgt frame
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();

    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

    FitReport report;
    report.transform.rotation = svd.matrixV() * d * svd.matrixU().transpose();
    report.transform.translation = ct - report.transform.rotation * cs;
    report.rms_residual = std::sqrt(
        (t - s * report.transform.rotation.transpose()).rowwise().squaredNorm().sum() /
        static_cast<double>(n));
    if (sv(1) < 1e-9 * sv(0) || sv(0) == 0.0) report.condition = FitCondition::near_degenerate;
    return report;
}

RigidTransform place_action(const FitReport& fit_a, const FitReport& fit_b) {
    return compose(invert(fit_a.transform), fit_b.transform);
}

RigidTransform pick_action(const FitReport& fit_b) { return invert(fit_b.transform); }

RigidTransform pick_action_general(const FitReport& fit_b, const FitReport& fit_a) {
    return compose(invert(fit_b.transform), fit_a.transform);
}

}  // namespace keyflow
