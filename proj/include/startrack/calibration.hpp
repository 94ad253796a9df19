#pragma once

#include <span>
#include <string>

#include "startrack/geometry.hpp"

namespace startrack {

/// dst ~ H src.
struct PlanePair {
  Vec2 src;
  Vec2 dst;
};

/// pixel ~ P direction.
struct RayPair {
  Vec2 pixel;
  Vec3 direction;
};

/// Normalized DLT, (3,3) entry scaled to 1. Needs at least 4 pairs; throws
/// kInvalidArgument below that and kDegenerate for rank-deficient input.
Mat3 estimate_homography(std::span<const PlanePair> pairs);

/// Cross-product DLT for x ~ P X. Needs at least 6 pairs. The result is scaled
/// so that det(P) > 0 and the norm of its last row is 1, which gives the
/// factored intrinsics a unit (3,3) entry.
Mat3 solve_projection(std::span<const RayPair> pairs);

struct ProjectionFactors {
  Intrinsics k;
  Rotation r;
};

/// P = s K R with K upper triangular, positive diagonal, K(3,3) = 1, det R = +1.
ProjectionFactors factor_projection(const Mat3& p);

struct CalibSolution {
  Mat3 homography = Mat3::Identity();  // screen to event plane
  Intrinsics telescope;
  Rotation attitude;
  Mat3 composite = Mat3::Identity();   // K_ev * H * K_te, (3,3) entry 1
};

/// Runs the homography and projection solves and composes the result with the
/// event camera intrinsics.
CalibSolution calibrate(std::span<const PlanePair> screen_to_sensor, std::span<const RayPair> screen_to_sky,
                        const Intrinsics& event_camera);

/// Human readable block with the composite matrix and its components.
std::string format_calibration(const CalibSolution& s);

}  // namespace startrack
