#include "startrack/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>

#include "startrack/rng.hpp"

namespace startrack {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool by_brightness(const CatalogStar& a, const CatalogStar& b) {
  if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
  return a.id < b.id;
}

}  // namespace

UnitVector3 radec_to_direction(double ra_deg, double dec_deg) {
  const double a = ra_deg * kRadPerDeg;
  const double d = dec_deg * kRadPerDeg;
  return UnitVector3(Vec3(std::cos(d) * std::cos(a), std::cos(d) * std::sin(a), std::sin(d)));
}

std::pair<double, double> direction_to_radec(const UnitVector3& d) {
  double ra = std::atan2(d.y(), d.x()) * kDegPerRad;
  if (ra < 0.0) ra += 360.0;
  if (ra >= 360.0) ra -= 360.0;
  const double dec = std::atan2(d.z(), std::hypot(d.x(), d.y())) * kDegPerRad;
  return {ra, dec};
}

StarCatalog::StarCatalog(std::vector<CatalogStar> stars) : stars_(std::move(stars)) {
  std::sort(stars_.begin(), stars_.end(),
            [](const CatalogStar& a, const CatalogStar& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < stars_.size(); ++i) {
    if (stars_[i].id == stars_[i - 1].id) {
      throw Error(ErrorCode::kDuplicateId, "duplicate star id " + std::to_string(stars_[i].id));
    }
  }
}

const CatalogStar* StarCatalog::find(std::int64_t id) const {
  auto it = std::lower_bound(stars_.begin(), stars_.end(), id,
                             [](const CatalogStar& s, std::int64_t v) { return s.id < v; });
  if (it == stars_.end() || it->id != id) return nullptr;
  return &*it;
}

std::vector<CatalogStar> StarCatalog::cone_query(const UnitVector3& center, double radius_deg,
                                                 double mag_limit) const {
  const double cos_r = std::cos(radius_deg * kRadPerDeg);
  std::vector<CatalogStar> out;
  for (const auto& s : stars_) {
    if (s.magnitude > mag_limit) continue;
    // Dot-product screen, then the exact angle test near the boundary.
    const double c = s.direction.vec().dot(center.vec());
    if (c < cos_r - 1e-9) continue;
    if (s.direction.angle_to(center) * kDegPerRad <= radius_deg) out.push_back(s);
  }
  std::sort(out.begin(), out.end(), by_brightness);
  return out;
}

CatalogIndex::CatalogIndex(const StarCatalog& catalog, double band_deg)
    : catalog_(&catalog), band_deg_(band_deg) {
  const auto nbands = static_cast<std::size_t>(std::ceil(180.0 / band_deg_));
  bands_.resize(nbands);
  for (std::size_t i = 0; i < catalog.stars().size(); ++i) {
    const double dec = direction_to_radec(catalog.stars()[i].direction).second;
    auto b = static_cast<std::size_t>(std::floor((dec + 90.0) / band_deg_));
    bands_[std::min(b, nbands - 1)].push_back(i);
  }
}

std::vector<CatalogStar> CatalogIndex::cone_query(const UnitVector3& center, double radius_deg,
                                                  double mag_limit) const {
  const double dec_c = direction_to_radec(center).second;
  const double lo = dec_c - radius_deg - band_deg_;
  const double hi = dec_c + radius_deg + band_deg_;
  const auto nbands = static_cast<long>(bands_.size());
  const long b0 = std::max(0L, static_cast<long>(std::floor((lo + 90.0) / band_deg_)));
  const long b1 = std::min(nbands - 1, static_cast<long>(std::floor((hi + 90.0) / band_deg_)));
  std::vector<CatalogStar> out;
  for (long b = b0; b <= b1; ++b) {
    for (std::size_t idx : bands_[static_cast<std::size_t>(b)]) {
      const auto& s = catalog_->stars()[idx];
      if (s.magnitude > mag_limit) continue;
      if (s.direction.angle_to(center) * kDegPerRad <= radius_deg) out.push_back(s);
    }
  }
  std::sort(out.begin(), out.end(), by_brightness);
  return out;
}

StarCatalog parse_catalog(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kParse, "catalog line 1: missing header");
  }
  ++lineno;
  {
    std::string compact;
    for (char c : line) {
      if (c != ' ' && c != '\t' && c != '\r') compact.push_back(c);
    }
    if (compact != "id,ra_deg,dec_deg,mag") {
      throw Error(ErrorCode::kParse, "catalog line 1: expected header 'id,ra_deg,dec_deg,mag'");
    }
  }
  std::vector<CatalogStar> stars;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    const std::string where = "catalog line " + std::to_string(lineno) + ": ";
    if (fields.size() != 4) throw Error(ErrorCode::kParse, where + "expected 4 fields");
    CatalogStar s;
    double ra = 0.0;
    double dec = 0.0;
    if (!parse_number(fields[0], s.id) || !parse_number(fields[1], ra) ||
        !parse_number(fields[2], dec) || !parse_number(fields[3], s.magnitude)) {
      throw Error(ErrorCode::kParse, where + "malformed number");
    }
    if (!(ra >= 0.0 && ra < 360.0)) throw Error(ErrorCode::kOutOfRange, where + "ra_deg outside [0, 360)");
    if (!(dec >= -90.0 && dec <= 90.0)) throw Error(ErrorCode::kOutOfRange, where + "dec_deg outside [-90, 90]");
    if (!std::isfinite(s.magnitude)) throw Error(ErrorCode::kParse, where + "non-finite magnitude");
    s.direction = radec_to_direction(ra, dec);
    stars.push_back(s);
  }
  std::vector<std::int64_t> ids;
  ids.reserve(stars.size());
  for (const auto& s : stars) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  if (auto it = std::adjacent_find(ids.begin(), ids.end()); it != ids.end()) {
    throw Error(ErrorCode::kDuplicateId, "duplicate star id " + std::to_string(*it));
  }
  return StarCatalog(std::move(stars));
}

StarCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open catalog " + path.string());
  return parse_catalog(in);
}

void write_catalog(const StarCatalog& catalog, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write catalog " + path.string());
  out << "id,ra_deg,dec_deg,mag\n" << std::setprecision(12);
  for (const auto& s : catalog.stars()) {
    const auto [ra, dec] = direction_to_radec(s.direction);
    out << s.id << ',' << ra << ',' << dec << ',' << s.magnitude << '\n';
  }
}

StarCatalog generate_catalog(const CatalogGenConfig& cfg) {
  if (!(cfg.mag_max > cfg.mag_min) || !(cfg.mag_slope > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "catalog generator needs mag_max > mag_min and slope > 0");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  // Inverse CDF of p(m) ~ 10^(slope m) on [mag_min, mag_max].
  const double k = cfg.mag_slope * std::log(10.0);
  const double e0 = std::exp(k * cfg.mag_min);
  const double e1 = std::exp(k * cfg.mag_max);
  std::vector<CatalogStar> stars;
  stars.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const double z = 2.0 * uni(rng) - 1.0;
    const double phi = 2.0 * kPi * uni(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    CatalogStar s;
    s.id = static_cast<std::int64_t>(i + 1);
    s.direction = UnitVector3(Vec3(r * std::cos(phi), r * std::sin(phi), z));
    s.magnitude = std::log(e0 + uni(rng) * (e1 - e0)) / k;
    stars.push_back(s);
  }
  return StarCatalog(std::move(stars));
}

}  // namespace startrack
