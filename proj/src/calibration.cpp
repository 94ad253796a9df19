#include "startrack/calibration.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

namespace startrack {

namespace {

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
Mat3 normalizing_transform(const std::vector<Vec2>& pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += (p - c).norm();
  d /= static_cast<double>(pts.size());
  if (!(d > 0.0)) throw Error(ErrorCode::kDegenerate, "all points coincide");
  const double s = std::sqrt(2.0) / d;
  Mat3 t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

Vec2 apply(const Mat3& t, const Vec2& p) { return (t * p.homogeneous()).hnormalized(); }

/// Null vector of A with a rank check on the remaining singular values.
Eigen::Matrix<double, 9, 1> null_vector(const Eigen::MatrixXd& a, const char* what) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 9 || sv(7) <= 1e-10 * sv(0)) {
    throw Error(ErrorCode::kDegenerate, std::string(what) + ": rank-deficient configuration");
  }
  return svd.matrixV().col(8);
}

}  // namespace

Mat3 estimate_homography(std::span<const PlanePair> pairs) {
  if (pairs.size() < 4) {
    throw Error(ErrorCode::kInvalidArgument, "homography needs at least 4 pairs, got " + std::to_string(pairs.size()));
  }
  std::vector<Vec2> src;
  std::vector<Vec2> dst;
  for (const auto& p : pairs) {
    src.push_back(p.src);
    dst.push_back(p.dst);
  }
  const Mat3 ts = normalizing_transform(src);
  const Mat3 td = normalizing_transform(dst);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * pairs.size()), 9);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Vec3 x = apply(ts, src[k]).homogeneous();
    const Vec2 y = apply(td, dst[k]);
    const auto r = static_cast<Eigen::Index>(2 * k);
    a.block<1, 3>(r, 3) = -x.transpose();
    a.block<1, 3>(r, 6) = y.y() * x.transpose();
    a.block<1, 3>(r + 1, 0) = x.transpose();
    a.block<1, 3>(r + 1, 6) = -y.x() * x.transpose();
  }
  if (a.rows() < 9) {
    // Pad so the SVD exposes a full 9x9 right basis.
    a.conservativeResize(9, 9);
    a.row(8).setZero();
  }
  const Eigen::Matrix<double, 9, 1> h = null_vector(a, "homography");
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 out = td.inverse() * hn * ts;
  if (std::abs(out(2, 2)) < 1e-12 * out.norm()) {
    throw Error(ErrorCode::kDegenerate, "homography: (3,3) entry vanishes");
  }
  return out / out(2, 2);
}

Mat3 solve_projection(std::span<const RayPair> pairs) {
  if (pairs.size() < 6) {
    throw Error(ErrorCode::kInvalidArgument,
                "projection solve needs at least 6 pairs, got " + std::to_string(pairs.size()));
  }
  std::vector<Vec2> px;
  for (const auto& p : pairs) px.push_back(p.pixel);
  const Mat3 t = normalizing_transform(px);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * pairs.size()), 9);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Vec2 y = apply(t, pairs[k].pixel);
    const Vec3 x = pairs[k].direction.normalized();
    const auto r = static_cast<Eigen::Index>(2 * k);
    a.block<1, 3>(r, 3) = -x.transpose();
    a.block<1, 3>(r, 6) = y.y() * x.transpose();
    a.block<1, 3>(r + 1, 0) = x.transpose();
    a.block<1, 3>(r + 1, 6) = -y.x() * x.transpose();
  }
  const Eigen::Matrix<double, 9, 1> v = null_vector(a, "projection");
  Mat3 pn;
  pn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  Mat3 p = t.inverse() * pn;
  p /= p.norm();
  const double det = p.determinant();
  if (std::abs(det) < 1e-14) throw Error(ErrorCode::kDegenerate, "projection: singular solution");
  p /= (det > 0 ? 1.0 : -1.0) * p.row(2).norm();
  return p;
}

ProjectionFactors factor_projection(const Mat3& p_in) {
  if (!p_in.allFinite()) throw Error(ErrorCode::kInvalidArgument, "factor_projection: non-finite matrix");
  const double scale = p_in.norm();
  if (!(scale > 0.0) || std::abs((p_in / scale).determinant()) < 1e-12) {
    throw Error(ErrorCode::kDegenerate, "factor_projection: singular matrix");
  }
  Mat3 p = p_in / scale;
  if (p.determinant() < 0) p = -p;
  // RQ through QR of the row-reversed transpose.
  Mat3 flip;
  flip << 0, 0, 1, 0, 1, 0, 1, 0, 0;
  Eigen::HouseholderQR<Mat3> qr((flip * p).transpose());
  const Mat3 q = qr.householderQ();
  const Mat3 rr = qr.matrixQR().triangularView<Eigen::Upper>();
  Mat3 k = flip * rr.transpose() * flip;
  Mat3 r = flip * q.transpose();
  const Eigen::Vector3d d(k(0, 0) < 0 ? -1.0 : 1.0, k(1, 1) < 0 ? -1.0 : 1.0, k(2, 2) < 0 ? -1.0 : 1.0);
  k = k * d.asDiagonal();
  r = d.asDiagonal() * r;
  k /= k(2, 2);
  ProjectionFactors out;
  out.k = Intrinsics{k(0, 0), k(1, 1), k(0, 2), k(1, 2), k(0, 1)};
  out.r = Rotation::from_matrix(r);
  return out;
}

CalibSolution calibrate(std::span<const PlanePair> screen_to_sensor, std::span<const RayPair> screen_to_sky,
                        const Intrinsics& event_camera) {
  event_camera.validate();
  CalibSolution s;
  s.homography = estimate_homography(screen_to_sensor);
  const ProjectionFactors f = factor_projection(solve_projection(screen_to_sky));
  s.telescope = f.k;
  s.attitude = f.r;
  Mat3 c = event_camera.matrix() * s.homography * s.telescope.matrix();
  s.composite = c / c(2, 2);
  return s;
}

std::string format_calibration(const CalibSolution& s) {
  std::ostringstream os;
  os << std::setprecision(12);
  auto mat = [&](const char* name, const Mat3& m) {
    os << name << "\n";
    for (int r = 0; r < 3; ++r) os << m(r, 0) << "," << m(r, 1) << "," << m(r, 2) << "\n";
  };
  mat("composite_K", s.composite);
  mat("homography", s.homography);
  mat("telescope_K", s.telescope.matrix());
  const auto q = s.attitude.quaternion();
  os << "telescope_attitude_quaternion\n" << q.w() << "," << q.x() << "," << q.y() << "," << q.z() << "\n";
  return os.str();
}

}  // namespace startrack
