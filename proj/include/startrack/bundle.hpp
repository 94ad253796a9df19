#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "startrack/geometry.hpp"
#include "startrack/registration.hpp"

namespace startrack {

struct BAObservation {
  std::size_t frame = 0;
  std::size_t star = 0;  // index into BAProblem::directions
  Vec3 ray;              // unit ray in the camera frame
  double weight = 1.0;   // inverse variance scale of the ray
};

struct BAProblem {
  std::vector<Rotation> attitudes;
  std::vector<Vec3> directions;          // unit star directions
  std::vector<std::size_t> track_ids;    // external id of each direction
  std::vector<BAObservation> observations;
  std::optional<std::size_t> anchor;     // frame held fixed, if any
  double huber_delta = 0.0;              // Huber threshold on ||r|| sqrt(w); 0 means least squares
};

struct StarInitResult {
  std::vector<Vec3> directions;
  std::vector<std::size_t> track_ids;
  std::vector<std::size_t> dropped;      // tracks whose mean ray vanished
};

/// Mean of the back-rotated observations R_i^T y, renormalized. Tracks with
/// fewer than two observations or a vanishing mean are dropped.
StarInitResult init_star_directions(std::span<const Rotation> attitudes, std::span<const StarTrack> tracks);

enum class ObservationWeighting {
  kUniform,    // every ray has weight 1
  kIntensity,  // weight proportional to sqrt(point intensity), normalized to mean 1
};

std::string to_string(ObservationWeighting weighting);
/// Parses "uniform" or "intensity"; throws kInvalidConfig otherwise.
ObservationWeighting parse_observation_weighting(const std::string& text);

/// Builds a problem with star directions initialized from `attitudes`.
BAProblem make_ba_problem(std::span<const Rotation> attitudes, std::span<const StarTrack> tracks,
                          ObservationWeighting weighting = ObservationWeighting::kUniform);

/// Holds frame k at `fixed` during optimization.
void gauge_anchor(BAProblem& problem, std::size_t k, const Rotation& fixed);

/// Sum over observations of rho(w ||y - R X||^2), where rho is the identity
/// or, when huber_delta > 0, the Huber loss on the whitened residual norm.
double ba_cost(const BAProblem& problem);

/// r = y - R X.
Vec3 ba_residual(const Rotation& r, const Vec3& x, const Vec3& y);
/// Derivative of r for the attitude update R <- exp(phi) R.
Mat3 ba_jacobian_attitude(const Rotation& r, const Vec3& x);
/// Derivative of r for the direction update X <- normalize(X + B u).
Eigen::Matrix<double, 3, 2> ba_jacobian_direction(const Rotation& r, const Vec3& x);
/// Orthonormal basis of the tangent plane at unit x.
Eigen::Matrix<double, 3, 2> sphere_basis(const Vec3& x);
Rotation retract_attitude(const Rotation& r, const Vec3& phi);
Vec3 retract_direction(const Vec3& x, const Eigen::Vector2d& u);

enum class GaugeMode {
  kFirstFrame,  // anchor frame 0 at its initial value
  kFree,        // no anchor; damping resolves the null space
  kAligned,     // free, then the global rotation closest to the initial attitudes is applied
};

std::string to_string(GaugeMode mode);
/// Parses "first_frame", "free" or "aligned"; throws kInvalidConfig otherwise.
GaugeMode parse_gauge_mode(const std::string& text);

struct BAConfig {
  int max_iterations = 100;
  double relative_tolerance = 1e-10;
  double gradient_tolerance = 1e-10;
  double initial_lambda = 1e-4;
  GaugeMode gauge = GaugeMode::kAligned;
  ObservationWeighting weighting = ObservationWeighting::kIntensity;  // used when the pipeline builds the problem
  /// When positive and the problem has no Huber threshold yet, the threshold is
  /// set to huber_k times the per-axis noise scale implied by the median
  /// whitened residual norm at the initial point. 0 keeps plain least squares.
  double huber_k = 2.0;
};

struct BAIteration {
  int iteration = 0;
  double cost = 0.0;
  double lambda = 0.0;
  bool accepted = false;
};

struct BAResult {
  BAProblem problem;  // refined attitudes and directions
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<BAIteration> log;
  std::string termination;
};

/// Levenberg-Marquardt over attitudes and star directions with the star
/// blocks eliminated by a Schur complement. Steps are accepted only when the
/// cost decreases. The gauge mode is applied on top of any anchor already set
/// on the problem. Throws kNumericalFailure on a non-finite cost.
BAResult bundle_adjust(BAProblem problem, const BAConfig& cfg = {});

}  // namespace startrack
