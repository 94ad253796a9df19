#include "startrack/wahba.hpp"

#include <Eigen/SVD>

namespace startrack {

Rotation solve_wahba(std::span<const Vec3> observed, std::span<const Vec3> reference,
                     std::span<const double> weights) {
  if (observed.size() != reference.size() || (!weights.empty() && weights.size() != observed.size())) {
    throw Error(ErrorCode::kInvalidArgument, "wahba: mismatched input sizes");
  }
  if (observed.size() < 2) {
    throw Error(ErrorCode::kDegenerate, "wahba: at least two correspondences are required");
  }
  Mat3 b = Mat3::Zero();
  for (std::size_t p = 0; p < observed.size(); ++p) {
    const double w = weights.empty() ? 1.0 : weights[p];
    b.noalias() += w * observed[p] * reference[p].transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (!(s(0) > 0.0) || s(1) <= 1e-12 * s(0)) {
    throw Error(ErrorCode::kDegenerate, "wahba: attitude profile matrix has rank < 2");
  }
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return Rotation::from_matrix(svd.matrixU() * d * svd.matrixV().transpose());
}

double wahba_cost(const Rotation& r, std::span<const Vec3> observed, std::span<const Vec3> reference,
                  std::span<const double> weights) {
  double cost = 0.0;
  for (std::size_t p = 0; p < observed.size(); ++p) {
    const double w = weights.empty() ? 1.0 : weights[p];
    cost += w * (observed[p] - r.matrix() * reference[p]).squaredNorm();
  }
  return cost;
}

}  // namespace startrack
