#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "startrack/frames.hpp"
#include "startrack/geometry.hpp"

namespace startrack {

/// Source point `source` (frame i) associated with target point `target` (frame j).
struct InlierPair {
  std::size_t source = 0;
  std::size_t target = 0;
  double residual = 0.0;  // chordal distance ||R x_src - x_tgt||
};

/// R maps frame-i rays onto frame-j rays: x_j ~ R x_i.
struct RelativeRotation {
  std::size_t j = 0;
  std::size_t i = 0;
  Rotation rotation;
  double residual = 0.0;               // sum of the L smallest squared residuals
  std::vector<InlierPair> inliers;     // the L kept pairs at convergence
  std::vector<InlierPair> associations;  // mutual nearest neighbours at the final rotation
  std::vector<double> objective_history;  // trimmed objective at each iterate
  int iterations = 0;

  double rms() const;
};

struct IcpConfig {
  double trim_fraction = 0.7;
  int max_iterations = 50;
  double tolerance_rad = 1e-6;
};

/// Trimmed ICP on unit rays; keeps L = ceil(tau P) residuals per iteration.
/// Throws kInvalidArgument when a precondition fails and kRegistrationFailed
/// when the kept set is degenerate.
RelativeRotation trimmed_icp(const PointSet& source, const PointSet& target, const Rotation& init,
                             const IcpConfig& cfg = {});

struct RegistrationConfig {
  int window = 5;
  IcpConfig icp;
  /// Pairs whose trimmed RMS chordal residual exceeds this are treated as failed.
  double max_rms_rad = 3e-3;
};

/// Every pair 0 < i - j <= W, solved in order of increasing i and then
/// increasing separation, each warm-started from already accepted estimates.
std::vector<RelativeRotation> relative_rotations(std::span<const PointSet> point_sets,
                                                 const RegistrationConfig& cfg = {});

struct TrackObservation {
  std::size_t frame = 0;
  std::size_t point = 0;
  Vec2 pixel;
  UnitVector3 ray;
  double intensity = 1.0;  // weight of the extracted point
};

struct StarTrack {
  std::size_t id = 0;
  std::vector<TrackObservation> observations;  // ascending frame, one per frame
};

/// Union-find over the consecutive-frame associations whose residual is at
/// most `gate_rad`. A join that would put two points of one frame in the same
/// component is dropped. Components spanning two or more frames become tracks.
std::vector<StarTrack> build_tracks(std::span<const RelativeRotation> relative,
                                    std::span<const PointSet> point_sets, double gate_rad);

}  // namespace startrack
