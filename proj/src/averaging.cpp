#include "startrack/averaging.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace startrack {

namespace {

struct Edge {
  std::size_t j;
  std::size_t i;
  Rotation rotation;
  double weight;
};

double huber(double r, double delta) {
  return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
}

std::vector<Edge> collect_edges(const MeasurementSet& ms) {
  std::vector<Edge> edges;
  std::vector<RelativeMeasurement> rel = ms.relative;
  std::stable_sort(rel.begin(), rel.end(), [](const RelativeMeasurement& a, const RelativeMeasurement& b) {
    if (a.j != b.j) return a.j < b.j;
    return a.i < b.i;
  });
  for (const auto& r : rel) {
    if (r.j >= ms.frame_count || r.i >= ms.frame_count) {
      throw Error(ErrorCode::kOutOfRange, "relative measurement references frame beyond frame_count");
    }
    edges.push_back({r.j, r.i, r.rotation, 1.0});
  }
  for (const auto& [k, r] : ms.absolute) {
    if (k >= ms.frame_count) throw Error(ErrorCode::kOutOfRange, "absolute measurement beyond frame_count");
    edges.push_back({k, ms.frame_count, r, ms.alpha});
  }
  return edges;
}

std::string describe_segments(const std::vector<std::size_t>& frames) {
  std::string out;
  std::size_t k = 0;
  while (k < frames.size()) {
    std::size_t e = k;
    while (e + 1 < frames.size() && frames[e + 1] == frames[e] + 1) ++e;
    if (!out.empty()) out += ", ";
    out += std::to_string(frames[k]);
    if (e > k) out += "-" + std::to_string(frames[e]);
    k = e + 1;
  }
  return out;
}

double edge_chordal(const Edge& e, const std::vector<Rotation>& nodes) {
  return (nodes[e.j].matrix() - e.rotation.matrix() * nodes[e.i].matrix()).norm();
}

double objective(const std::vector<Edge>& edges, const std::vector<Rotation>& nodes, double delta) {
  double f = 0.0;
  for (const auto& e : edges) f += e.weight * huber(edge_chordal(e, nodes), delta);
  return f;
}

}  // namespace

double averaging_objective(const MeasurementSet& ms, const std::vector<Rotation>& nodes, double huber_delta) {
  if (nodes.size() != ms.frame_count + 1) {
    throw Error(ErrorCode::kInvalidArgument, "averaging_objective: expected frame_count + 1 nodes");
  }
  return objective(collect_edges(ms), nodes, huber_delta);
}

AveragingResult augmented_rotation_averaging(const MeasurementSet& ms, const AveragingConfig& cfg) {
  if (ms.frame_count == 0) throw Error(ErrorCode::kInvalidArgument, "rotation averaging over zero frames");
  if (ms.absolute.empty()) {
    throw Error(ErrorCode::kAnchorFree, "rotation averaging: no absolute rotations to anchor the solution");
  }
  if (!(ms.alpha > 0.0)) throw Error(ErrorCode::kInvalidConfig, "rotation averaging: alpha must be > 0");
  const std::vector<Edge> edges = collect_edges(ms);
  const std::size_t n = ms.frame_count + 1;
  const std::size_t anchor = ms.frame_count;

  {
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& e : edges) parent[find(e.j)] = find(e.i);
    std::vector<std::size_t> loose;
    for (std::size_t f = 0; f < ms.frame_count; ++f) {
      if (find(f) != find(anchor)) loose.push_back(f);
    }
    if (!loose.empty()) {
      throw Error(ErrorCode::kUnanchoredSegment,
                  "rotation averaging: frames not connected to any absolute rotation: " + describe_segments(loose));
    }
  }

  AveragingResult result;
  std::vector<Rotation> nodes(n);
  double f = objective(edges, nodes, cfg.huber_delta);
  result.log.push_back({0, f, 0.0});

  // Node 0 is held fixed; the objective is invariant to a common right
  // multiplication, so this only selects a gauge representative.
  const std::size_t pinned = 0;
  auto unknown = [](std::size_t node) { return node - 1; };
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool analyzed = false;

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(edges.size() * 4);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n - 1), 3);
    for (const auto& e : edges) {
      const Mat3 err = nodes[e.j].matrix().transpose() * e.rotation.matrix() * nodes[e.i].matrix();
      const Vec3 res = Rotation::from_matrix(err).log();
      const double chordal = edge_chordal(e, nodes);
      const double w = e.weight * (chordal <= cfg.huber_delta ? 1.0 : cfg.huber_delta / chordal);
      // Linearized edge: delta_j - delta_i = res.
      const bool fj = e.j != pinned;
      const bool fi = e.i != pinned;
      const auto uj = static_cast<Eigen::Index>(fj ? unknown(e.j) : 0);
      const auto ui = static_cast<Eigen::Index>(fi ? unknown(e.i) : 0);
      if (fj) {
        trip.emplace_back(uj, uj, w);
        rhs.row(uj) += w * res.transpose();
      }
      if (fi) {
        trip.emplace_back(ui, ui, w);
        rhs.row(ui) -= w * res.transpose();
      }
      if (fj && fi) {
        trip.emplace_back(uj, ui, -w);
        trip.emplace_back(ui, uj, -w);
      }
    }
    Eigen::SparseMatrix<double> lap(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(n - 1));
    lap.setFromTriplets(trip.begin(), trip.end());
    if (!analyzed) {
      solver.analyzePattern(lap);
      analyzed = true;
    }
    solver.factorize(lap);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorCode::kNumericalFailure, "rotation averaging: singular normal equations");
    }
    const Eigen::MatrixXd delta = solver.solve(rhs);

    // Backtrack until the objective does not increase.
    double scale = 1.0;
    std::vector<Rotation> trial(n);
    double f_trial = f;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      for (std::size_t v = 0; v < n; ++v) {
        if (v == pinned) {
          trial[v] = nodes[v];
          continue;
        }
        const Vec3 d = scale * delta.row(static_cast<Eigen::Index>(unknown(v))).transpose();
        trial[v] = nodes[v] * Rotation::exp(d);
      }
      f_trial = objective(edges, trial, cfg.huber_delta);
      if (f_trial <= f) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    double max_update = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == pinned) continue;
      max_update = std::max(max_update, scale * delta.row(static_cast<Eigen::Index>(unknown(v))).norm());
    }
    nodes = trial;
    f = f_trial;
    result.log.push_back({it, f, max_update});
    if (max_update < cfg.tolerance_rad) break;
  }

  result.anchor_before_fix = nodes[anchor];
  const Rotation fix = nodes[anchor].inverse();
  result.attitudes.reserve(ms.frame_count);
  for (std::size_t v = 0; v < ms.frame_count; ++v) result.attitudes.push_back(nodes[v] * fix);
  return result;
}

std::vector<Rotation> chain_rotations(const MeasurementSet& ms,
                                      std::optional<std::pair<std::size_t, Rotation>> anchor) {
  if (!anchor) {
    if (ms.absolute.empty()) throw Error(ErrorCode::kAnchorFree, "chaining: no absolute rotation to start from");
    anchor = *ms.absolute.begin();
  }
  const std::size_t m = ms.frame_count;
  if (anchor->first >= m) throw Error(ErrorCode::kOutOfRange, "chaining: anchor beyond frame_count");

  // Outgoing adjacency keyed by the partner frame, so smaller spans come first.
  std::vector<std::map<std::size_t, Rotation>> fwd(m);  // fwd[i][j] = R_{j,i}, j < i
  std::vector<std::map<std::size_t, Rotation>> bwd(m);  // bwd[j][i] = R_{j,i}, i > j
  for (const auto& r : ms.relative) {
    if (r.j >= m || r.i >= m) throw Error(ErrorCode::kOutOfRange, "chaining: edge beyond frame_count");
    std::size_t j = r.j;
    std::size_t i = r.i;
    Rotation rot = r.rotation;
    if (j > i) {
      std::swap(j, i);
      rot = rot.inverse();
    }
    if (j == i) continue;
    fwd[i].emplace(j, rot);
    bwd[j].emplace(i, rot);
  }

  std::vector<std::optional<Rotation>> out(m);
  out[anchor->first] = anchor->second;
  // R_j = R_{j,i} R_i, hence R_i = R_{j,i}^T R_j.
  auto from_below = [&](std::size_t i) -> bool {
    for (auto it = fwd[i].rbegin(); it != fwd[i].rend(); ++it) {
      if (out[it->first]) {
        out[i] = it->second.inverse() * (*out[it->first]);
        return true;
      }
    }
    return false;
  };
  auto from_above = [&](std::size_t j) -> bool {
    for (const auto& [i, rot] : bwd[j]) {
      if (out[i]) {
        out[j] = rot * (*out[i]);
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = anchor->first + 1; i < m; ++i) from_below(i);
  for (std::size_t j = anchor->first; j-- > 0;) from_above(j);
  for (bool progress = true; progress;) {
    progress = false;
    for (std::size_t v = 0; v < m; ++v) {
      if (!out[v] && (from_below(v) || from_above(v))) progress = true;
    }
  }

  std::vector<std::size_t> missing;
  std::vector<Rotation> result;
  result.reserve(m);
  for (std::size_t v = 0; v < m; ++v) {
    if (!out[v]) {
      missing.push_back(v);
    } else {
      result.push_back(*out[v]);
    }
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::kUnchainedSegment, "chaining: frames unreachable from the anchor: " +
                                                  describe_segments(missing));
  }
  return result;
}

}  // namespace startrack
