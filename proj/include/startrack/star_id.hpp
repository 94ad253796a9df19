#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "startrack/catalog.hpp"
#include "startrack/frames.hpp"
#include "startrack/geometry.hpp"

namespace startrack {

/// A 2D image point matched to a catalog star.
struct Correspondence {
  Vec2 pixel;
  UnitVector3 ray;          // backprojected pixel
  std::int64_t star_id = 0;
  UnitVector3 direction;    // inertial catalog direction
};

/// Wahba solution for ray ~ R * direction over the correspondences.
Rotation wahba_svd(std::span<const Correspondence> correspondences);

struct IndexConfig {
  double fov_deg = 20.0;           // maximum pairwise separation inside a triple
  double mag_limit = 5.5;
  double quantization_deg = 0.2;
  int brightest_per_cone = 12;
  double cone_radius_deg = 10.0;   // neighbourhood around each star from which the brightest are taken
};

/// Catalog triple. Vertices are ordered so that vertex k is opposite the
/// k-th shortest side, i.e. sides_deg[k] = angle between the other two vertices.
struct StarTriple {
  std::array<std::int64_t, 3> ids{};
  std::array<double, 3> sides_deg{};
};

/// Canonical ordering of three directions by opposite-side length.
struct TriangleShape {
  std::array<int, 3> order{};      // order[k] = input vertex opposite the k-th shortest side
  std::array<double, 3> sides_deg{};
};
TriangleShape triangle_shape(const Vec3& a, const Vec3& b, const Vec3& c);

/// Hash from the two shortest quantized side lengths to catalog triples.
class TriangleHashIndex {
 public:
  static TriangleHashIndex build(const StarCatalog& catalog, const IndexConfig& cfg = {});

  const IndexConfig& config() const { return cfg_; }
  /// Catalog restricted to the indexed magnitude range.
  const StarCatalog& stars() const { return *stars_; }
  const CatalogIndex& spatial() const { return *spatial_; }
  const std::vector<StarTriple>& triples() const { return triples_; }
  std::size_t key_count() const { return buckets_.size(); }

  std::uint64_t key_for(double shortest_deg, double middle_deg) const;
  /// Triple indices stored under `key` (empty if none).
  std::span<const std::uint32_t> bucket(std::uint64_t key) const;
  /// Triples whose three sides are each within tol_deg of `sides_deg`.
  std::vector<std::uint32_t> candidates(const std::array<double, 3>& sides_deg, double tol_deg) const;

 private:
  IndexConfig cfg_;
  std::shared_ptr<const StarCatalog> stars_;
  std::shared_ptr<CatalogIndex> spatial_;
  std::vector<StarTriple> triples_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
};

struct IdentifyConfig {
  double r_verify_px = 2.0;
  int min_inliers = 4;
  int brightest_points = 8;        // triples are formed from the brightest points only
  double side_tolerance_deg = 0.05;
  int refine_rounds = 3;
  /// Largest accepted probability that the matches beyond the seeding triple
  /// are chance coincidences (Poisson model over the verification discs).
  double max_false_alarm = 1e-2;
};

struct Identification {
  Rotation attitude;
  std::vector<Correspondence> matches;
};

/// Hypothesize-and-verify identification. Throws kInvalidArgument for fewer
/// than 3 points and kIdentificationFailed when no hypothesis verifies.
Identification identify(const PointSet& points, const TriangleHashIndex& index, const Intrinsics& k,
                        int width, int height, const IdentifyConfig& cfg = {});

struct IdentificationRecord {
  std::size_t frame = 0;
  std::size_t n_points = 0;
  std::size_t n_matched = 0;
  std::optional<Rotation> attitude;
  std::string status;  // "ok" or the failure reason
};

struct AbsoluteRotations {
  std::map<std::size_t, Rotation> rotations;
  std::vector<IdentificationRecord> report;
  bool all_failed = false;
};

/// Star identification plus Wahba on every selected frame; frames that fail
/// are dropped and recorded in the report.
AbsoluteRotations absolute_rotations(std::span<const PointSet> point_sets,
                                     std::span<const std::size_t> selected,
                                     const TriangleHashIndex& index, const Intrinsics& k, int width,
                                     int height, const IdentifyConfig& cfg = {});

}  // namespace startrack
