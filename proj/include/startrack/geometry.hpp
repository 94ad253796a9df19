#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>
#include <vector>

#include "startrack/error.hpp"

namespace startrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegPerRad = 180.0 / kPi;
inline constexpr double kRadPerDeg = kPi / 180.0;

/// Direction in R^3 with unit Euclidean norm.
class UnitVector3 {
 public:
  UnitVector3() : v_(0.0, 0.0, 1.0) {}
  /// Normalizes `v`; throws kInvalidArgument for a zero or non-finite input.
  explicit UnitVector3(const Vec3& v);
  UnitVector3(double x, double y, double z) : UnitVector3(Vec3(x, y, z)) {}

  const Vec3& vec() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }

  /// Angle between two directions in radians, stable near 0 and pi.
  double angle_to(const UnitVector3& other) const;

 private:
  Vec3 v_;
};

/// Element of SO(3). The matrix maps inertial directions into the camera
/// frame: x_cam = R * X.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Projects `m` onto SO(3) (nearest rotation in Frobenius norm).
  static Rotation from_matrix(const Mat3& m);
  /// Accepts any non-zero quaternion; it is normalized first.
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation from_quaternion(const Eigen::Quaterniond& q);
  static Rotation identity() { return Rotation(); }
  /// Rodrigues construction. Throws kInvalidAxis for a zero axis.
  static Rotation from_axis_angle(const Vec3& axis, double angle_rad);
  /// Exponential map of a rotation vector (axis * angle).
  static Rotation exp(const Vec3& omega);

  const Mat3& matrix() const { return m_; }
  /// Unit quaternion with w >= 0.
  Eigen::Quaterniond quaternion() const;
  /// Rotation vector with angle in [0, pi].
  Vec3 log() const;
  double angle() const;

  Rotation inverse() const { return Rotation(m_.transpose(), Trusted{}); }
  Rotation operator*(const Rotation& other) const;
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  UnitVector3 operator*(const UnitVector3& v) const;

  /// Orthonormality residual ||R^T R - I||_F.
  double orthonormality_error() const;

 private:
  struct Trusted {};
  Rotation(const Mat3& m, Trusted) : m_(m) {}

  Mat3 m_;
};

Rotation rotation_from_axis_angle(const UnitVector3& axis, double angle_rad);

/// Skew-symmetric cross-product matrix [v]_x.
Mat3 hat(const Vec3& v);

/// Pinhole intrinsics. Pixel coordinates: x right, y down, origin at the
/// centre of the top-left pixel.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;

  Mat3 matrix() const;
  /// Square-pixel intrinsics whose horizontal field of view is `fov_deg`
  /// across `width` pixels, principal point at the sensor centre.
  static Intrinsics from_fov(double fov_deg, int width, int height);
  /// Throws kInvalidIntrinsics unless fx > 0, fy > 0 and K is invertible.
  void validate() const;
};

/// K^-1 [x, y, 1]^T normalized to unit length.
UnitVector3 backproject(const Vec2& pixel, const Intrinsics& k);

/// Dehomogenized K R X, or nullopt when (R X).z <= 0 (behind the camera).
std::optional<Vec2> project(const Intrinsics& k, const Rotation& r, const UnitVector3& x);
std::optional<Vec2> project(const Intrinsics& k, const Vec3& camera_ray);

/// 2 asin(||R1 - R2||_F / (2 sqrt 2)) in degrees.
double angular_error_deg(const Rotation& a, const Rotation& b);

/// Mean rotation minimizing sum ||R - R_i||_F^2 (projected arithmetic mean).
Rotation chordal_mean(const std::vector<Rotation>& rotations);

}  // namespace startrack
