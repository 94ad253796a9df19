#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "startrack/geometry.hpp"

namespace startrack {

/// R_j ~ rotation * R_i.
struct RelativeMeasurement {
  std::size_t j = 0;
  std::size_t i = 0;
  Rotation rotation;
};

struct MeasurementSet {
  std::size_t frame_count = 0;
  std::vector<RelativeMeasurement> relative;
  std::map<std::size_t, Rotation> absolute;
  double alpha = 1.0;
};

struct AveragingConfig {
  double huber_delta = 0.1;   // on the chordal residual ||R_j - R R_i||_F
  int max_iterations = 200;
  double tolerance_rad = 1e-8;
};

struct ConvergenceEntry {
  int iteration = 0;
  double objective = 0.0;
  double max_update = 0.0;
};

struct AveragingResult {
  std::vector<Rotation> attitudes;        // gauge fixed: the anchor node is the identity
  Rotation anchor_before_fix;             // dummy node estimate prior to gauge fixing
  std::vector<ConvergenceEntry> log;
  bool gauge_free = false;
};

/// Sum over edges of weight * huber(||R_j - R~ R_i||_F); absolute edges are
/// edges to the anchor node (index frame_count) with weight alpha.
/// `nodes` has frame_count + 1 entries.
double averaging_objective(const MeasurementSet& ms, const std::vector<Rotation>& nodes, double huber_delta);

/// Augmented rotation averaging on frame_count + 1 nodes, all initialised at
/// the identity, followed by right-multiplication with the transposed anchor
/// estimate. Throws kAnchorFree without absolute measurements and
/// kUnanchoredSegment when some frames are not connected to the anchor.
AveragingResult augmented_rotation_averaging(const MeasurementSet& ms, const AveragingConfig& cfg = {});

/// Baseline: start from `anchor` (default: the earliest absolute measurement)
/// and propagate along the shortest available edges, forward then backward.
/// Throws kAnchorFree with neither an anchor nor absolute measurements and
/// kUnchainedSegment when frames cannot be reached.
std::vector<Rotation> chain_rotations(const MeasurementSet& ms,
                                      std::optional<std::pair<std::size_t, Rotation>> anchor = std::nullopt);

}  // namespace startrack
