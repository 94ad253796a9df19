#include "startrack/geometry.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace startrack {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidIntrinsics: return "invalid-intrinsics";
    case ErrorCode::kInvalidAxis: return "invalid-axis";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kParse: return "parse-error";
    case ErrorCode::kDuplicateId: return "duplicate-id";
    case ErrorCode::kOutOfRange: return "out-of-range";
    case ErrorCode::kIo: return "io-error";
    case ErrorCode::kDegenerate: return "degenerate-configuration";
    case ErrorCode::kIdentificationFailed: return "identification-failed";
    case ErrorCode::kRegistrationFailed: return "registration-failed";
    case ErrorCode::kUnanchoredSegment: return "unanchored-segment";
    case ErrorCode::kAnchorFree: return "anchor-free";
    case ErrorCode::kUnchainedSegment: return "unchained-segment";
    case ErrorCode::kNumericalFailure: return "numerical-failure";
    case ErrorCode::kIndexMismatch: return "index-mismatch";
    case ErrorCode::kInvalidConfig: return "invalid-config";
  }
  return "unknown";
}

UnitVector3::UnitVector3(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kInvalidArgument, "cannot normalize a zero or non-finite vector");
  }
  v_ = v / n;
}

double UnitVector3::angle_to(const UnitVector3& other) const {
  return std::atan2(v_.cross(other.v_).norm(), v_.dot(other.v_));
}

Rotation Rotation::from_matrix(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return Rotation(svd.matrixU() * d * svd.matrixV().transpose(), Trusted{});
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  return from_quaternion(Eigen::Quaterniond(w, x, y, z));
}

Rotation Rotation::from_quaternion(const Eigen::Quaterniond& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kInvalidArgument, "zero or non-finite quaternion");
  }
  return Rotation(q.normalized().toRotationMatrix(), Trusted{});
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kInvalidAxis, "rotation axis must be non-zero");
  }
  return exp(axis / n * angle_rad);
}

Rotation Rotation::exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  double a;
  double b;
  if (theta < 1e-6) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Rotation(Mat3::Identity() + a * w + b * w * w, Trusted{});
}

Eigen::Quaterniond Rotation::quaternion() const {
  Eigen::Quaterniond q(m_);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Vec3 Rotation::log() const {
  const Eigen::Quaterniond q = quaternion();
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  const double theta = 2.0 * std::atan2(s, q.w());
  return v * (theta / s);
}

double Rotation::angle() const { return log().norm(); }

Rotation Rotation::operator*(const Rotation& other) const {
  return Rotation(m_ * other.m_, Trusted{});
}

UnitVector3 Rotation::operator*(const UnitVector3& v) const {
  return UnitVector3(Vec3(m_ * v.vec()));
}

double Rotation::orthonormality_error() const {
  return (m_.transpose() * m_ - Mat3::Identity()).norm();
}

Rotation rotation_from_axis_angle(const UnitVector3& axis, double angle_rad) {
  return Rotation::from_axis_angle(axis.vec(), angle_rad);
}

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, skew, cx,
       0.0, fy, cy,
       0.0, 0.0, 1.0;
  return k;
}

Intrinsics Intrinsics::from_fov(double fov_deg, int width, int height) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0) || width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidIntrinsics, "field of view must lie in (0, 180) degrees");
  }
  Intrinsics k;
  k.fx = 0.5 * width / std::tan(0.5 * fov_deg * kRadPerDeg);
  k.fy = k.fx;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  return k;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) ||
      !std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(skew)) {
    throw Error(ErrorCode::kInvalidIntrinsics, "intrinsics require finite fx > 0 and fy > 0");
  }
}

UnitVector3 backproject(const Vec2& pixel, const Intrinsics& k) {
  k.validate();
  // K is upper triangular: solve by back substitution.
  const double y = (pixel.y() - k.cy) / k.fy;
  const double x = (pixel.x() - k.cx - k.skew * y) / k.fx;
  return UnitVector3(Vec3(x, y, 1.0));
}

std::optional<Vec2> project(const Intrinsics& k, const Vec3& camera_ray) {
  if (!(camera_ray.z() > 0.0)) return std::nullopt;
  const double u = camera_ray.x() / camera_ray.z();
  const double v = camera_ray.y() / camera_ray.z();
  return Vec2(k.fx * u + k.skew * v + k.cx, k.fy * v + k.cy);
}

std::optional<Vec2> project(const Intrinsics& k, const Rotation& r, const UnitVector3& x) {
  return project(k, Vec3(r.matrix() * x.vec()));
}

double angular_error_deg(const Rotation& a, const Rotation& b) {
  const double s = (a.matrix() - b.matrix()).norm() / (2.0 * std::sqrt(2.0));
  // asin loses half the significant digits near a half turn; the relative
  // rotation's quaternion gives the same angle with full precision there.
  if (s > 0.9) return (a.inverse() * b).angle() * kDegPerRad;
  return 2.0 * std::asin(std::clamp(s, -1.0, 1.0)) * kDegPerRad;
}

Rotation chordal_mean(const std::vector<Rotation>& rotations) {
  if (rotations.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "chordal mean of an empty set");
  }
  Mat3 sum = Mat3::Zero();
  for (const auto& r : rotations) sum += r.matrix();
  return Rotation::from_matrix(sum);
}

}  // namespace startrack
