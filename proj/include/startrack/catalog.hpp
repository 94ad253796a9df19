#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "startrack/geometry.hpp"

namespace startrack {

struct CatalogStar {
  std::int64_t id = 0;
  UnitVector3 direction;
  double magnitude = 0.0;
};

/// Unit direction for right ascension / declination in degrees:
/// (cos d cos a, cos d sin a, sin d).
UnitVector3 radec_to_direction(double ra_deg, double dec_deg);
/// Inverse of radec_to_direction; ra in [0, 360).
std::pair<double, double> direction_to_radec(const UnitVector3& d);

/// Immutable list of stars with strictly increasing ids.
class StarCatalog {
 public:
  StarCatalog() = default;
  /// Sorts by id; throws kDuplicateId on repeated ids.
  explicit StarCatalog(std::vector<CatalogStar> stars);

  const std::vector<CatalogStar>& stars() const { return stars_; }
  std::size_t size() const { return stars_.size(); }
  bool empty() const { return stars_.empty(); }
  /// Star by id, or nullptr.
  const CatalogStar* find(std::int64_t id) const;

  /// Stars within `radius_deg` of `center` and with magnitude <= mag_limit,
  /// brightest first (ties broken by id). Reference linear scan.
  std::vector<CatalogStar> cone_query(const UnitVector3& center, double radius_deg,
                                      double mag_limit = std::numeric_limits<double>::infinity()) const;

 private:
  std::vector<CatalogStar> stars_;
};

/// Declination-band index over a catalog. Results are identical to
/// StarCatalog::cone_query; it only skips bands that cannot intersect the cone.
class CatalogIndex {
 public:
  explicit CatalogIndex(const StarCatalog& catalog, double band_deg = 2.0);

  std::vector<CatalogStar> cone_query(const UnitVector3& center, double radius_deg,
                                      double mag_limit = std::numeric_limits<double>::infinity()) const;

 private:
  const StarCatalog* catalog_;
  double band_deg_;
  std::vector<std::vector<std::size_t>> bands_;
};

/// Reads `id,ra_deg,dec_deg,mag` text (header line required).
StarCatalog load_catalog(const std::filesystem::path& path);
StarCatalog parse_catalog(std::istream& in);
void write_catalog(const StarCatalog& catalog, const std::filesystem::path& path);

struct CatalogGenConfig {
  std::size_t count = 8000;
  double mag_min = -1.0;
  double mag_max = 6.5;
  /// Magnitude density grows as 10^(slope * m), roughly the galactic-average star count law.
  double mag_slope = 0.45;
  std::uint64_t seed = 7;
};

/// Uniformly random directions on the sphere, ids 1..count.
StarCatalog generate_catalog(const CatalogGenConfig& cfg);

}  // namespace startrack
