#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "startrack/catalog.hpp"
#include "support.hpp"

using namespace startrack;
using testing_support::random_unit;

namespace {

StarCatalog parse(const std::string& text) {
  std::istringstream in(text);
  return parse_catalog(in);
}

StarCatalog random_catalog(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(-1.0, 7.0);
  std::vector<CatalogStar> stars;
  for (std::size_t i = 0; i < n; ++i) stars.push_back({static_cast<std::int64_t>(i + 1), UnitVector3(random_unit(rng)), mag(rng)});
  return StarCatalog(std::move(stars));
}

std::vector<std::int64_t> ids(const std::vector<CatalogStar>& stars) {
  std::vector<std::int64_t> out;
  for (const auto& s : stars) out.push_back(s.id);
  return out;
}

/// Exhaustive oracle: filter by dot product, then sort by (magnitude, id).
std::vector<std::int64_t> brute_force(const StarCatalog& c, const Vec3& center, double radius_deg, double mag_limit) {
  std::vector<CatalogStar> hit;
  for (const auto& s : c.stars()) {
    const double ang = std::acos(std::clamp(s.direction.vec().dot(center), -1.0, 1.0)) * kDegPerRad;
    if (ang <= radius_deg && s.magnitude <= mag_limit) hit.push_back(s);
  }
  std::sort(hit.begin(), hit.end(), [](const CatalogStar& a, const CatalogStar& b) {
    return a.magnitude != b.magnitude ? a.magnitude < b.magnitude : a.id < b.id;
  });
  return ids(hit);
}

}  // namespace

TEST(LoadCatalog, OriginRow) {
  const StarCatalog c = parse("id,ra_deg,dec_deg,mag\n1, 0.0, 0.0, 2.0\n");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_LE((c.stars()[0].direction.vec() - Vec3(1, 0, 0)).norm(), 1e-15);
  EXPECT_EQ(c.stars()[0].magnitude, 2.0);
}

TEST(LoadCatalog, QuarterRightAscension) {
  const StarCatalog c = parse("id,ra_deg,dec_deg,mag\n2, 90.0, 0.0, 3.5\n");
  EXPECT_LE((c.stars()[0].direction.vec() - Vec3(0, 1, 0)).norm(), 1e-15);
}

TEST(LoadCatalog, DiagonalDirection) {
  const StarCatalog c = parse("id,ra_deg,dec_deg,mag\n3, 45.0, 45.0, 1.0\n");
  const Vec3 d = c.stars()[0].direction.vec();
  EXPECT_NEAR(d.x(), 0.5, 1e-12);
  EXPECT_NEAR(d.y(), 0.5, 1e-12);
  EXPECT_NEAR(d.z(), std::sqrt(0.5), 1e-12);
}

TEST(LoadCatalog, ErrorsCarryCodesAndLineNumbers) {
  auto code_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const Error& e) {
      return std::make_pair(e.code(), std::string(e.what()));
    }
    return std::make_pair(ErrorCode::kIo, std::string("no error"));
  };
  auto [c1, m1] = code_of("id,ra_deg,dec_deg,mag\n1,0,0,1\n2,abc,0,1\n");
  EXPECT_EQ(c1, ErrorCode::kParse);
  EXPECT_NE(m1.find("3"), std::string::npos);
  EXPECT_EQ(code_of("id,ra_deg,dec_deg,mag\n1,0,0,1\n1,10,0,1\n").first, ErrorCode::kDuplicateId);
  EXPECT_EQ(code_of("id,ra_deg,dec_deg,mag\n1,360,0,1\n").first, ErrorCode::kOutOfRange);
  EXPECT_EQ(code_of("id,ra_deg,dec_deg,mag\n1,10,90.5,1\n").first, ErrorCode::kOutOfRange);
  EXPECT_EQ(code_of("id,ra_deg,dec_deg,mag\n1,10,5\n").first, ErrorCode::kParse);
}

TEST(LoadCatalog, WriteThenLoadRoundTrip) {
  const StarCatalog c = generate_catalog({200, -1.0, 6.5, 0.45, 3});
  const auto path = std::filesystem::temp_directory_path() / "startrack_catalog_roundtrip.csv";
  write_catalog(c, path);
  const StarCatalog d = load_catalog(path);
  ASSERT_EQ(c.size(), d.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(c.stars()[i].id, d.stars()[i].id);
    EXPECT_LE(c.stars()[i].direction.angle_to(d.stars()[i].direction), 1e-9);
    EXPECT_NEAR(c.stars()[i].magnitude, d.stars()[i].magnitude, 1e-9);
  }
  std::filesystem::remove(path);
}

TEST(ConeQuery, HemisphereReturnsAllStarsOnThatSide) {
  const StarCatalog c = random_catalog(300, 1);
  const Vec3 center(0, 0, 1);
  const auto hit = c.cone_query(UnitVector3(center), 90.0);
  std::size_t expected = 0;
  for (const auto& s : c.stars()) expected += s.direction.z() >= 0 ? 1 : 0;
  EXPECT_EQ(hit.size(), expected);
}

TEST(ConeQuery, SingleStarAtCenter) {
  const StarCatalog c({{5, UnitVector3(0, 1, 0), 3.0}, {6, UnitVector3(1, 0, 0), 1.0}});
  const auto hit = c.cone_query(UnitVector3(0, 1, 0), 1.0);
  ASSERT_EQ(hit.size(), 1u);
  EXPECT_EQ(hit[0].id, 5);
}

TEST(ConeQuery, MatchesExhaustiveScan) {
  const StarCatalog c = random_catalog(1000, 2);
  const CatalogIndex index(c);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 center = random_unit(rng);
    const double radius = trial % 2 ? 10.0 : 25.0;
    const double mag = trial % 3 ? 100.0 : 4.0;
    const auto oracle = brute_force(c, center, radius, mag);
    EXPECT_EQ(ids(c.cone_query(UnitVector3(center), radius, mag)), oracle);
    EXPECT_EQ(ids(index.cone_query(UnitVector3(center), radius, mag)), oracle);
  }
}

TEST(ConeQuery, IndexHandlesPoles) {
  const StarCatalog c = random_catalog(2000, 4);
  const CatalogIndex index(c);
  for (const Vec3& center : {Vec3(0, 0, 1), Vec3(0, 0, -1), Vec3(1e-9, 0, 1).normalized()}) {
    EXPECT_EQ(ids(index.cone_query(UnitVector3(center), 15.0)), brute_force(c, center, 15.0, 100.0));
  }
}

TEST(ConeQueryProperty, InvariantToRowOrder) {
  const StarCatalog c = random_catalog(500, 5);
  std::vector<CatalogStar> shuffled = c.stars();
  std::mt19937_64 rng(6);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const StarCatalog d(std::move(shuffled));
  for (int trial = 0; trial < 50; ++trial) {
    const UnitVector3 center(random_unit(rng));
    EXPECT_EQ(ids(c.cone_query(center, 20.0)), ids(d.cone_query(center, 20.0)));
  }
}

TEST(ConeQueryProperty, CoveringConesFindEveryStar) {
  const StarCatalog c = random_catalog(800, 7);
  // Cone centres on a latitude/longitude grid with spacing 15 deg; a 15 deg
  // radius covers every point of the sphere.
  std::set<std::int64_t> found;
  for (int lat = -90; lat <= 90; lat += 15) {
    for (int lon = 0; lon < 360; lon += 15) {
      for (const auto& s : c.cone_query(radec_to_direction(lon, lat), 15.0, 5.0)) found.insert(s.id);
    }
  }
  for (const auto& s : c.stars()) {
    if (s.magnitude <= 5.0) EXPECT_TRUE(found.count(s.id)) << s.id;
  }
}

TEST(GenerateCatalog, DeterministicAndWithinRanges) {
  const StarCatalog a = generate_catalog({});
  const StarCatalog b = generate_catalog({});
  ASSERT_EQ(a.size(), 8000u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.stars()[i].id, b.stars()[i].id);
    EXPECT_EQ(a.stars()[i].direction.vec(), b.stars()[i].direction.vec());
    EXPECT_GE(a.stars()[i].magnitude, -1.0);
    EXPECT_LE(a.stars()[i].magnitude, 6.5);
  }
  // Fainter stars dominate: the faintest magnitude bin holds the most stars.
  std::size_t faint = 0;
  std::size_t bright = 0;
  for (const auto& s : a.stars()) {
    faint += s.magnitude > 5.5 ? 1 : 0;
    bright += s.magnitude < 0.5 ? 1 : 0;
  }
  EXPECT_GT(faint, 10 * bright);
}

TEST(RaDec, RoundTrip) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const UnitVector3 d(random_unit(rng));
    const auto [ra, dec] = direction_to_radec(d);
    EXPECT_GE(ra, 0.0);
    EXPECT_LT(ra, 360.0);
    EXPECT_LE(radec_to_direction(ra, dec).angle_to(d), 1e-12);
  }
}
