#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "startrack/catalog.hpp"
#include "startrack/frames.hpp"
#include "startrack/geometry.hpp"

namespace testing_support {

using startrack::Rotation;
using startrack::Vec3;

/// Uniform direction on the sphere from three normal deviates.
inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

/// Uniform rotation via a normalized Gaussian quaternion.
inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Rotation::from_quaternion(n(rng), n(rng), n(rng), n(rng));
}

/// Rotation by a fixed angle about a random axis.
inline Rotation random_rotation_of_angle(std::mt19937_64& rng, double angle_rad) {
  return Rotation::from_axis_angle(random_unit(rng), angle_rad);
}

/// Random direction within `radius_rad` of the +z axis.
inline Vec3 random_in_cap(std::mt19937_64& rng, double radius_rad) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double z = 1.0 - u(rng) * (1.0 - std::cos(radius_rad));
  const double phi = 2.0 * startrack::kPi * u(rng);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return Vec3(s * std::cos(phi), s * std::sin(phi), z);
}

/// Rotation angle from the trace, independent of the Frobenius formula.
inline double trace_angle_deg(const Rotation& a, const Rotation& b) {
  const double c = std::clamp(((a.matrix().transpose() * b.matrix()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * startrack::kDegPerRad;
}

/// Noise-free point set: every catalog star brighter than `mag_limit` that
/// projects inside the sensor, weighted by its flux.
inline startrack::PointSet render_points(const startrack::StarCatalog& catalog, const Rotation& attitude,
                                         const startrack::Intrinsics& k, int width, int height,
                                         double mag_limit, std::size_t frame = 0) {
  startrack::PointSet ps;
  ps.frame = frame;
  for (const auto& s : catalog.stars()) {
    if (s.magnitude > mag_limit) continue;
    const auto p = startrack::project(k, attitude, s.direction);
    if (!p || p->x() < 0 || p->y() < 0 || p->x() > width - 1 || p->y() > height - 1) continue;
    ps.points.push_back({*p, startrack::backproject(*p, k), std::pow(10.0, -0.4 * s.magnitude)});
  }
  return ps;
}

/// Uniformly random pixels with random weights.
inline startrack::PointSet random_points(std::mt19937_64& rng, std::size_t n, const startrack::Intrinsics& k,
                                         int width, int height) {
  std::uniform_real_distribution<double> ux(0.0, width - 1.0);
  std::uniform_real_distribution<double> uy(0.0, height - 1.0);
  std::uniform_real_distribution<double> uw(0.1, 1.0);
  startrack::PointSet ps;
  for (std::size_t i = 0; i < n; ++i) {
    const startrack::Vec2 p(ux(rng), uy(rng));
    ps.points.push_back({p, startrack::backproject(p, k), uw(rng)});
  }
  return ps;
}

}  // namespace testing_support
