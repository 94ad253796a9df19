#include "startrack/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "startrack/wahba.hpp"

namespace startrack {

namespace {

struct Assignment {
  std::vector<InlierPair> kept;
  double objective = 0.0;
};

Assignment assign_and_trim(const PointSet& source, const PointSet& target, const Rotation& r, std::size_t keep) {
  std::vector<InlierPair> all;
  all.reserve(source.size());
  for (std::size_t p = 0; p < source.size(); ++p) {
    const Vec3 x = r.matrix() * source.points[p].ray.vec();
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_q = 0;
    for (std::size_t q = 0; q < target.size(); ++q) {
      const double d2 = (x - target.points[q].ray.vec()).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_q = q;
      }
    }
    all.push_back({p, best_q, std::sqrt(best)});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const InlierPair& a, const InlierPair& b) { return a.residual < b.residual; });
  all.resize(keep);
  Assignment out;
  for (const auto& k : all) out.objective += k.residual * k.residual;
  out.kept = std::move(all);
  return out;
}

/// Pairs (p, q) where q is the nearest target of R x_p and p the nearest source of q.
std::vector<InlierPair> mutual_neighbours(const PointSet& source, const PointSet& target, const Rotation& r) {
  std::vector<Vec3> moved(source.size());
  for (std::size_t p = 0; p < source.size(); ++p) moved[p] = r.matrix() * source.points[p].ray.vec();
  const auto inf = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> fwd(source.size(), 0);
  std::vector<double> fwd_d(source.size(), inf);
  std::vector<std::size_t> bwd(target.size(), 0);
  std::vector<double> bwd_d(target.size(), inf);
  for (std::size_t p = 0; p < source.size(); ++p) {
    for (std::size_t q = 0; q < target.size(); ++q) {
      const double d2 = (moved[p] - target.points[q].ray.vec()).squaredNorm();
      if (d2 < fwd_d[p]) {
        fwd_d[p] = d2;
        fwd[p] = q;
      }
      if (d2 < bwd_d[q]) {
        bwd_d[q] = d2;
        bwd[q] = p;
      }
    }
  }
  std::vector<InlierPair> out;
  for (std::size_t p = 0; p < source.size(); ++p) {
    if (bwd[fwd[p]] == p) out.push_back({p, fwd[p], std::sqrt(fwd_d[p])});
  }
  return out;
}

}  // namespace

double RelativeRotation::rms() const {
  if (inliers.empty()) return 0.0;
  return std::sqrt(residual / static_cast<double>(inliers.size()));
}

RelativeRotation trimmed_icp(const PointSet& source, const PointSet& target, const Rotation& init,
                             const IcpConfig& cfg) {
  if (source.size() < 3 || target.size() < 3) {
    throw Error(ErrorCode::kInvalidArgument, "trimmed_icp: both point sets need at least 3 points");
  }
  if (!(cfg.trim_fraction > 0.0 && cfg.trim_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "trimmed_icp: trim fraction must lie in (0, 1]");
  }
  const auto keep = static_cast<std::size_t>(std::ceil(cfg.trim_fraction * static_cast<double>(source.size())));
  if (keep < 3) throw Error(ErrorCode::kInvalidArgument, "trimmed_icp: fewer than 3 kept residuals");

  RelativeRotation out;
  out.j = target.frame;
  out.i = source.frame;
  Rotation r = init;
  Assignment a = assign_and_trim(source, target, r, keep);
  out.objective_history.push_back(a.objective);
  std::vector<Vec3> obs(keep);
  std::vector<Vec3> ref(keep);
  // A zero trimmed objective is already a global minimum.
  for (int it = 0; it < cfg.max_iterations && a.objective > 0.0; ++it) {
    for (std::size_t k = 0; k < keep; ++k) {
      obs[k] = target.points[a.kept[k].target].ray.vec();
      ref[k] = source.points[a.kept[k].source].ray.vec();
    }
    Rotation next;
    try {
      next = solve_wahba(obs, ref);
    } catch (const Error& e) {
      throw Error(ErrorCode::kRegistrationFailed, std::string("trimmed_icp: ") + e.what());
    }
    Assignment candidate = assign_and_trim(source, target, next, keep);
    // Only reachable at the rounding floor; keep the better iterate and stop.
    if (candidate.objective > a.objective) break;
    const double step = (next * r.inverse()).angle();
    r = next;
    a = std::move(candidate);
    out.objective_history.push_back(a.objective);
    out.iterations = it + 1;
    if (step < cfg.tolerance_rad) break;
  }
  out.rotation = r;
  out.residual = a.objective;
  out.inliers = std::move(a.kept);
  out.associations = mutual_neighbours(source, target, r);
  return out;
}

std::vector<RelativeRotation> relative_rotations(std::span<const PointSet> point_sets,
                                                 const RegistrationConfig& cfg) {
  if (cfg.window < 1) throw Error(ErrorCode::kInvalidArgument, "relative_rotations: W must be >= 1");
  const std::size_t m = point_sets.size();
  const auto w = static_cast<std::size_t>(cfg.window);
  std::vector<RelativeRotation> out;
  // solved[(j, i)] -> position in `out`
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> solved;
  auto lookup = [&](std::size_t j, std::size_t i) -> const Rotation* {
    auto it = solved.find({j, i});
    return it == solved.end() ? nullptr : &out[it->second].rotation;
  };

  for (std::size_t i = 1; i < m; ++i) {
    for (std::size_t d = 1; d <= w && d <= i; ++d) {
      const std::size_t j = i - d;
      const PointSet& src = point_sets[i];
      const PointSet& tgt = point_sets[j];
      if (src.size() < 3 || tgt.size() < 3) continue;
      if (std::ceil(cfg.icp.trim_fraction * static_cast<double>(src.size())) < 3) continue;

      // Warm start: compose the nearest accepted estimates (R_{j,i} = R_{j,j+1} R_{j+1,i}),
      // or reuse the previous consecutive motion for adjacent frames.
      Rotation seed;
      if (d == 1) {
        if (i >= 2) {
          if (const Rotation* prev = lookup(i - 2, i - 1)) seed = *prev;
        }
      } else {
        const Rotation* a = lookup(j, j + 1);
        const Rotation* b = lookup(j + 1, i);
        if (a && b) {
          seed = (*a) * (*b);
        } else if (b) {
          seed = *b;
        } else if (const Rotation* c = lookup(j, i - 1)) {
          seed = *c;
        }
      }
      RelativeRotation rr;
      try {
        PointSet s = src;
        PointSet t = tgt;
        s.frame = i;
        t.frame = j;
        rr = trimmed_icp(s, t, seed, cfg.icp);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kRegistrationFailed) throw;
        continue;
      }
      if (!(rr.rms() <= cfg.max_rms_rad)) continue;
      solved[{j, i}] = out.size();
      out.push_back(std::move(rr));
    }
  }
  return out;
}

std::vector<StarTrack> build_tracks(std::span<const RelativeRotation> relative,
                                    std::span<const PointSet> point_sets, double gate_rad) {
  // Node numbering: offset[frame] + point index.
  std::vector<std::size_t> offset(point_sets.size() + 1, 0);
  for (std::size_t f = 0; f < point_sets.size(); ++f) offset[f + 1] = offset[f] + point_sets[f].size();
  const std::size_t n = offset.back();

  struct Join {
    std::size_t frame_j;
    std::size_t target;
    std::size_t frame_i;
    std::size_t source;
  };
  std::vector<Join> joins;
  for (const auto& rr : relative) {
    if (rr.i != rr.j + 1 || rr.i >= point_sets.size()) continue;
    for (const auto& p : rr.associations) {
      if (p.residual <= gate_rad) joins.push_back({rr.j, p.target, rr.i, p.source});
    }
  }
  std::sort(joins.begin(), joins.end(), [](const Join& a, const Join& b) {
    if (a.frame_j != b.frame_j) return a.frame_j < b.frame_j;
    if (a.target != b.target) return a.target < b.target;
    return a.source < b.source;
  });

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::map<std::size_t, std::size_t>> members(n);  // root -> frame -> point
  for (std::size_t f = 0; f < point_sets.size(); ++f) {
    for (std::size_t p = 0; p < point_sets[f].size(); ++p) members[offset[f] + p].emplace(f, p);
  }
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  for (const auto& jn : joins) {
    std::size_t a = find(offset[jn.frame_j] + jn.target);
    std::size_t b = find(offset[jn.frame_i] + jn.source);
    if (a == b) continue;
    if (members[a].size() < members[b].size()) std::swap(a, b);
    bool conflict = false;
    for (const auto& [frame, point] : members[b]) {
      if (members[a].count(frame)) {
        conflict = true;
        break;
      }
    }
    if (conflict) continue;
    members[a].insert(members[b].begin(), members[b].end());
    members[b].clear();
    parent[b] = a;
  }

  std::vector<StarTrack> tracks;
  // Order tracks by their first observation.
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::size_t>> roots;
  for (std::size_t node = 0; node < n; ++node) {
    if (find(node) != node || members[node].size() < 2) continue;
    roots.push_back({*members[node].begin(), node});
  }
  std::sort(roots.begin(), roots.end());
  for (const auto& [first, root] : roots) {
    StarTrack t;
    t.id = tracks.size();
    for (const auto& [frame, point] : members[root]) {
      const auto& pt = point_sets[frame].points[point];
      t.observations.push_back({frame, point, pt.pixel, pt.ray, pt.weight});
    }
    tracks.push_back(std::move(t));
  }
  return tracks;
}

}  // namespace startrack
