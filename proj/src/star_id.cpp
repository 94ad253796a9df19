#include "startrack/star_id.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "startrack/wahba.hpp"

namespace startrack {

namespace {

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b)) * kDegPerRad;
}

struct Hypothesis {
  Rotation attitude;
  std::vector<Correspondence> matches;
  double sq_dist = 0.0;
  std::size_t predicted = 0;  // catalog stars projecting inside the sensor

  bool better_than(const Hypothesis& o) const {
    if (matches.size() != o.matches.size()) return matches.size() > o.matches.size();
    return sq_dist < o.sq_dist;
  }
};

class Verifier {
 public:
  Verifier(const PointSet& points, const TriangleHashIndex& index, const Intrinsics& k, int width,
           int height, const IdentifyConfig& cfg)
      : points_(points), index_(index), k_(k), width_(width), height_(height), cfg_(cfg) {
    const double hx = std::max(k.cx + 0.5, width - 0.5 - k.cx) / k.fx;
    const double hy = std::max(k.cy + 0.5, height - 0.5 - k.cy) / k.fy;
    radius_deg_ = std::atan(std::hypot(hx, hy)) * kDegPerRad + 0.5;
  }

  // Catalog stars projecting within r_verify of a point, one-to-one, greedy by distance.
  Hypothesis verify(const Rotation& r) const {
    const UnitVector3 boresight(Vec3(r.matrix().transpose() * Vec3::UnitZ()));
    const auto stars = index_.spatial().cone_query(boresight, radius_deg_, index_.config().mag_limit);
    struct Candidate {
      double d2;
      std::size_t star;
      std::size_t point;
    };
    std::vector<Candidate> cands;
    std::size_t predicted = 0;
    const double r2 = cfg_.r_verify_px * cfg_.r_verify_px;
    for (std::size_t s = 0; s < stars.size(); ++s) {
      const auto p = project(k_, r, stars[s].direction);
      if (!p) continue;
      if (p->x() < -0.5 || p->y() < -0.5 || p->x() > width_ - 0.5 || p->y() > height_ - 0.5) continue;
      ++predicted;
      for (std::size_t q = 0; q < points_.size(); ++q) {
        const double d2 = (points_.points[q].pixel - *p).squaredNorm();
        if (d2 <= r2) cands.push_back({d2, s, q});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.d2 != b.d2) return a.d2 < b.d2;
      if (a.star != b.star) return a.star < b.star;
      return a.point < b.point;
    });
    std::vector<char> star_used(stars.size(), 0);
    std::vector<char> point_used(points_.size(), 0);
    Hypothesis h;
    h.attitude = r;
    h.predicted = predicted;
    for (const auto& c : cands) {
      if (star_used[c.star] || point_used[c.point]) continue;
      star_used[c.star] = 1;
      point_used[c.point] = 1;
      const auto& pt = points_.points[c.point];
      h.matches.push_back({pt.pixel, pt.ray, stars[c.star].id, stars[c.star].direction});
      h.sq_dist += c.d2;
    }
    std::sort(h.matches.begin(), h.matches.end(),
              [](const Correspondence& a, const Correspondence& b) { return a.star_id < b.star_id; });
    return h;
  }

  /// Probability that the matches beyond the three seeding stars arise by
  /// chance, with catalog stars landing uniformly on the sensor.
  double false_alarm(const Hypothesis& h) const {
    if (h.matches.size() <= 3) return 1.0;
    const double area = static_cast<double>(width_) * height_;
    const double hit = std::min(1.0, static_cast<double>(points_.size()) * kPi * cfg_.r_verify_px *
                                         cfg_.r_verify_px / area);
    const double lambda = static_cast<double>(h.predicted) * hit;
    const std::size_t extra = h.matches.size() - 3;
    double term = std::exp(-lambda);
    double below = 0.0;
    for (std::size_t i = 0; i < extra; ++i) {
      below += term;
      term *= lambda / static_cast<double>(i + 1);
    }
    return std::max(0.0, 1.0 - below);
  }

  bool accepted(const Hypothesis& h) const {
    return h.matches.size() >= static_cast<std::size_t>(cfg_.min_inliers) && false_alarm(h) <= cfg_.max_false_alarm;
  }

  Hypothesis refine(Hypothesis h) const {
    for (int round = 0; round < cfg_.refine_rounds && h.matches.size() >= 3; ++round) {
      Rotation r;
      try {
        r = wahba_svd(h.matches);
      } catch (const Error&) {
        break;
      }
      Hypothesis next = verify(r);
      if (!next.better_than(h) && next.matches.size() < h.matches.size()) break;
      const bool same = next.matches.size() == h.matches.size() &&
                        std::equal(next.matches.begin(), next.matches.end(), h.matches.begin(),
                                   [](const Correspondence& a, const Correspondence& b) {
                                     return a.star_id == b.star_id && a.pixel == b.pixel;
                                   });
      h = std::move(next);
      if (same) break;
    }
    return h;
  }

 private:
  const PointSet& points_;
  const TriangleHashIndex& index_;
  const Intrinsics& k_;
  int width_;
  int height_;
  const IdentifyConfig& cfg_;
  double radius_deg_ = 0.0;
};

}  // namespace

Rotation wahba_svd(std::span<const Correspondence> correspondences) {
  std::vector<Vec3> observed;
  std::vector<Vec3> reference;
  observed.reserve(correspondences.size());
  reference.reserve(correspondences.size());
  for (const auto& c : correspondences) {
    observed.push_back(c.ray.vec());
    reference.push_back(c.direction.vec());
  }
  return solve_wahba(observed, reference);
}

TriangleShape triangle_shape(const Vec3& a, const Vec3& b, const Vec3& c) {
  const std::array<double, 3> opposite{angle_deg(b, c), angle_deg(c, a), angle_deg(a, b)};
  TriangleShape t;
  std::iota(t.order.begin(), t.order.end(), 0);
  std::stable_sort(t.order.begin(), t.order.end(), [&](int i, int j) { return opposite[i] < opposite[j]; });
  for (int k = 0; k < 3; ++k) t.sides_deg[k] = opposite[t.order[k]];
  return t;
}

std::uint64_t TriangleHashIndex::key_for(double shortest_deg, double middle_deg) const {
  const auto qa = static_cast<std::uint64_t>(std::max(0.0, std::floor(shortest_deg / cfg_.quantization_deg)));
  const auto qb = static_cast<std::uint64_t>(std::max(0.0, std::floor(middle_deg / cfg_.quantization_deg)));
  return (qa << 32) | qb;
}

std::span<const std::uint32_t> TriangleHashIndex::bucket(std::uint64_t key) const {
  auto it = buckets_.find(key);
  if (it == buckets_.end()) return {};
  return it->second;
}

std::vector<std::uint32_t> TriangleHashIndex::candidates(const std::array<double, 3>& sides_deg,
                                                         double tol_deg) const {
  const double q = cfg_.quantization_deg;
  const auto lo_a = static_cast<long>(std::floor(std::max(0.0, sides_deg[0] - tol_deg) / q));
  const auto hi_a = static_cast<long>(std::floor((sides_deg[0] + tol_deg) / q));
  const auto lo_b = static_cast<long>(std::floor(std::max(0.0, sides_deg[1] - tol_deg) / q));
  const auto hi_b = static_cast<long>(std::floor((sides_deg[1] + tol_deg) / q));
  std::vector<std::uint32_t> out;
  for (long a = lo_a; a <= hi_a; ++a) {
    for (long b = std::max(a, lo_b); b <= hi_b; ++b) {
      const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
      for (std::uint32_t t : bucket(key)) {
        const auto& tri = triples_[t];
        if (std::abs(tri.sides_deg[0] - sides_deg[0]) <= tol_deg &&
            std::abs(tri.sides_deg[1] - sides_deg[1]) <= tol_deg &&
            std::abs(tri.sides_deg[2] - sides_deg[2]) <= tol_deg) {
          out.push_back(t);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

TriangleHashIndex TriangleHashIndex::build(const StarCatalog& catalog, const IndexConfig& cfg) {
  if (catalog.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot index an empty catalog");
  if (!(cfg.quantization_deg > 0.0) || !(cfg.fov_deg > 0.0) || cfg.brightest_per_cone < 3 ||
      !(cfg.cone_radius_deg > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "index needs quantization > 0, fov > 0, cone radius > 0 and K >= 3");
  }
  TriangleHashIndex index;
  index.cfg_ = cfg;
  std::vector<CatalogStar> kept;
  for (const auto& s : catalog.stars()) {
    if (s.magnitude <= cfg.mag_limit) kept.push_back(s);
  }
  index.stars_ = std::make_shared<const StarCatalog>(std::move(kept));
  index.spatial_ = std::make_shared<CatalogIndex>(*index.stars_);

  std::set<std::array<std::int64_t, 3>> seen;
  for (const auto& centre : index.stars_->stars()) {
    auto cone = index.spatial_->cone_query(centre.direction, cfg.cone_radius_deg, cfg.mag_limit);
    if (cone.size() > static_cast<std::size_t>(cfg.brightest_per_cone)) {
      cone.resize(static_cast<std::size_t>(cfg.brightest_per_cone));
    }
    for (std::size_t i = 0; i < cone.size(); ++i) {
      for (std::size_t j = i + 1; j < cone.size(); ++j) {
        if (angle_deg(cone[i].direction.vec(), cone[j].direction.vec()) > cfg.fov_deg) continue;
        for (std::size_t l = j + 1; l < cone.size(); ++l) {
          if (angle_deg(cone[i].direction.vec(), cone[l].direction.vec()) > cfg.fov_deg ||
              angle_deg(cone[j].direction.vec(), cone[l].direction.vec()) > cfg.fov_deg) {
            continue;
          }
          std::array<std::int64_t, 3> ids{cone[i].id, cone[j].id, cone[l].id};
          std::sort(ids.begin(), ids.end());
          seen.insert(ids);
        }
      }
    }
  }

  index.triples_.reserve(seen.size());
  for (const auto& ids : seen) {
    const Vec3 a = index.stars_->find(ids[0])->direction.vec();
    const Vec3 b = index.stars_->find(ids[1])->direction.vec();
    const Vec3 c = index.stars_->find(ids[2])->direction.vec();
    const TriangleShape shape = triangle_shape(a, b, c);
    StarTriple t;
    for (int k = 0; k < 3; ++k) t.ids[k] = ids[shape.order[k]];
    t.sides_deg = shape.sides_deg;
    const auto slot = static_cast<std::uint32_t>(index.triples_.size());
    index.triples_.push_back(t);
    index.buckets_[index.key_for(t.sides_deg[0], t.sides_deg[1])].push_back(slot);
  }
  return index;
}

Identification identify(const PointSet& points, const TriangleHashIndex& index, const Intrinsics& k,
                        int width, int height, const IdentifyConfig& cfg) {
  if (points.size() < 3) {
    throw Error(ErrorCode::kInvalidArgument, "identify: at least 3 points are required");
  }
  // Deterministic brightness order independent of input order.
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = points.points[a];
    const auto& pb = points.points[b];
    if (pa.weight != pb.weight) return pa.weight > pb.weight;
    if (pa.pixel.x() != pb.pixel.x()) return pa.pixel.x() < pb.pixel.x();
    return pa.pixel.y() < pb.pixel.y();
  });
  const std::size_t n = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(3, cfg.brightest_points)));

  const Verifier verifier(points, index, k, width, height, cfg);
  std::optional<Hypothesis> best;
  const auto enough = static_cast<std::size_t>(
      std::max<double>(cfg.min_inliers, std::ceil(0.7 * static_cast<double>(points.size()))));

  static constexpr std::array<std::array<int, 3>, 6> kPerms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t l = j + 1; l < n; ++l) {
        const std::array<const ImagePoint*, 3> tri{&points.points[order[i]], &points.points[order[j]],
                                                   &points.points[order[l]]};
        const TriangleShape shape = triangle_shape(tri[0]->ray.vec(), tri[1]->ray.vec(), tri[2]->ray.vec());
        if (shape.sides_deg[2] > index.config().fov_deg + cfg.side_tolerance_deg) continue;
        for (std::uint32_t t : index.candidates(shape.sides_deg, cfg.side_tolerance_deg)) {
          const StarTriple& cat = index.triples()[t];
          for (const auto& perm : kPerms) {
            bool ok = true;
            for (int m = 0; m < 3 && ok; ++m) {
              ok = std::abs(shape.sides_deg[perm[m]] - cat.sides_deg[m]) <= cfg.side_tolerance_deg;
            }
            if (!ok) continue;
            std::array<Vec3, 3> obs;
            std::array<Vec3, 3> ref;
            for (int m = 0; m < 3; ++m) {
              obs[m] = tri[shape.order[perm[m]]]->ray.vec();
              ref[m] = index.stars().find(cat.ids[m])->direction.vec();
            }
            // A rotation cannot map a triangle onto its mirror image.
            Mat3 mo;
            Mat3 mr;
            mo << obs[0], obs[1], obs[2];
            mr << ref[0], ref[1], ref[2];
            if (mo.determinant() * mr.determinant() <= 0.0) continue;
            Rotation r;
            try {
              r = solve_wahba(obs, ref);
            } catch (const Error&) {
              continue;
            }
            Hypothesis h = verifier.verify(r);
            if (h.matches.size() < 3) continue;
            h = verifier.refine(std::move(h));
            if (!best || h.better_than(*best)) best = std::move(h);
          }
        }
        if (best && best->matches.size() >= enough && verifier.accepted(*best)) break;
      }
      if (best && best->matches.size() >= enough && verifier.accepted(*best)) break;
    }
    if (best && best->matches.size() >= enough && verifier.accepted(*best)) break;
  }

  if (!best || !verifier.accepted(*best)) {
    throw Error(ErrorCode::kIdentificationFailed,
                "identify: no hypothesis verified with at least " + std::to_string(cfg.min_inliers) +
                    " significant stars (best " + std::to_string(best ? best->matches.size() : 0) + ")");
  }
  Identification out;
  out.attitude = wahba_svd(best->matches);
  out.matches = std::move(best->matches);
  return out;
}

AbsoluteRotations absolute_rotations(std::span<const PointSet> point_sets,
                                     std::span<const std::size_t> selected,
                                     const TriangleHashIndex& index, const Intrinsics& k, int width,
                                     int height, const IdentifyConfig& cfg) {
  AbsoluteRotations out;
  for (std::size_t f : selected) {
    if (f >= point_sets.size()) {
      throw Error(ErrorCode::kOutOfRange, "selected frame " + std::to_string(f) + " has no point set");
    }
    const PointSet& ps = point_sets[f];
    IdentificationRecord rec;
    rec.frame = f;
    rec.n_points = ps.size();
    if (ps.size() < 3) {
      rec.status = "too-few-points";
    } else {
      try {
        Identification id = identify(ps, index, k, width, height, cfg);
        rec.n_matched = id.matches.size();
        rec.attitude = id.attitude;
        rec.status = "ok";
        out.rotations.emplace(f, id.attitude);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kIdentificationFailed) throw;
        rec.status = "identification-failed";
      }
    }
    out.report.push_back(std::move(rec));
  }
  out.all_failed = out.rotations.empty();
  return out;
}

}  // namespace startrack
