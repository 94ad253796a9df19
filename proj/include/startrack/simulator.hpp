#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "startrack/catalog.hpp"
#include "startrack/geometry.hpp"

namespace startrack {

/// One sensor event. Timestamps are microseconds since the stream start.
struct Event {
  std::int64_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  bool positive = true;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Stable total order used for every merged stream: time, then row, column, polarity.
bool event_less(const Event& a, const Event& b);

/// Star event rate rho0 * 10^(-0.4 (mag - mag_ref)) * min(speed / speed_ref, 1).
struct StarRateModel {
  double rho0 = 4000.0;           // events/s at mag_ref and full speed
  double mag_ref = 4.0;
  double speed_ref_px_s = 60.0;
};

struct SimConfig {
  int width = 240;
  int height = 180;
  double fov_deg = 20.0;                  // horizontal field of view
  std::optional<Intrinsics> intrinsics;   // derived from fov_deg when unset
  double duration_s = 45.0;
  double angular_speed_deg_s = 4.0;
  /// Rotation axis in the camera frame; drawn from the seed when unset
  /// (uniform over directions at least 60 deg from the boresight).
  std::optional<Vec3> axis;
  /// Attitude at t = 0; uniformly random from the seed when unset.
  std::optional<Rotation> initial_attitude;
  double mag_limit = 6.5;
  StarRateModel star_rate;
  double noise_rate = 0.1;                // spurious events / pixel / s
  int hot_pixel_count = 2;
  double hot_pixel_rate = 600.0;          // events / s per hot pixel
  double jitter_px = 0.5;                 // Gaussian sigma on event position
  double substep_ms = 1.0;
  double frame_interval_ms = 40.0;        // ground truth is sampled at window midpoints
  std::uint64_t seed = 1;
  int threads = 1;

  Intrinsics camera() const;
  /// Throws kInvalidConfig naming the offending field.
  void validate() const;
};

/// Constant-rate rotation R(t) = rot(axis, w t) * R(0).
struct Trajectory {
  Rotation initial;
  UnitVector3 axis;
  double angular_speed_deg_s = 0.0;
  std::vector<double> times;          // seconds
  std::vector<Rotation> attitudes;    // attitude at each entry of `times`

  Rotation at(double t_s) const;
};

/// Axis and initial attitude with the seeded defaults filled in.
struct ResolvedMotion {
  UnitVector3 axis;
  Rotation initial;
};
ResolvedMotion resolve_motion(const SimConfig& cfg);

Trajectory make_trajectory(const SimConfig& cfg, const std::vector<double>& times_s);

/// Centres of the uniform windows of length `interval_ms` that fit in `duration_s`.
std::vector<double> window_midpoints(double duration_s, double interval_ms);

struct SimResult {
  std::vector<Event> events;
  Trajectory trajectory;               // sampled at window midpoints
  std::vector<std::pair<int, int>> hot_pixels;
  std::size_t star_events = 0;
  std::size_t noise_events = 0;
  std::size_t hot_events = 0;
  bool no_stars_in_fov = false;        // no catalog star ever projected onto the sensor
};

/// Deterministic in (catalog, config). Each (source, substep) pair draws from
/// its own counter-keyed stream, so any split over threads yields the same output.
SimResult simulate_events(const StarCatalog& catalog, const SimConfig& cfg);

}  // namespace startrack
