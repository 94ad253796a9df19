#include "startrack/bundle.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace startrack {

StarInitResult init_star_directions(std::span<const Rotation> attitudes, std::span<const StarTrack> tracks) {
  StarInitResult out;
  for (const auto& track : tracks) {
    if (track.observations.size() < 2) continue;
    Vec3 sum = Vec3::Zero();
    for (const auto& obs : track.observations) {
      if (obs.frame >= attitudes.size()) {
        throw Error(ErrorCode::kOutOfRange, "init_star_directions: track " + std::to_string(track.id) +
                                                " observes frame " + std::to_string(obs.frame) +
                                                " without an attitude");
      }
      sum += attitudes[obs.frame].matrix().transpose() * obs.ray.vec();
    }
    sum /= static_cast<double>(track.observations.size());
    if (sum.norm() < 1e-12) {
      out.dropped.push_back(track.id);
      continue;
    }
    out.directions.push_back(sum.normalized());
    out.track_ids.push_back(track.id);
  }
  return out;
}

BAProblem make_ba_problem(std::span<const Rotation> attitudes, std::span<const StarTrack> tracks,
                          ObservationWeighting weighting) {
  BAProblem p;
  p.attitudes.assign(attitudes.begin(), attitudes.end());
  StarInitResult init = init_star_directions(attitudes, tracks);
  p.directions = std::move(init.directions);
  p.track_ids = init.track_ids;
  std::unordered_map<std::size_t, std::size_t> index;
  for (std::size_t s = 0; s < p.track_ids.size(); ++s) index[p.track_ids[s]] = s;
  for (const auto& track : tracks) {
    auto it = index.find(track.id);
    if (it == index.end()) continue;
    for (const auto& obs : track.observations) {
      double w = 1.0;
      if (weighting == ObservationWeighting::kIntensity) {
        if (!(obs.intensity > 0.0) || !std::isfinite(obs.intensity)) {
          throw Error(ErrorCode::kInvalidArgument, "make_ba_problem: intensity weighting needs positive intensities");
        }
        w = std::sqrt(obs.intensity);
      }
      p.observations.push_back({obs.frame, it->second, obs.ray.vec(), w});
    }
  }
  if (weighting == ObservationWeighting::kIntensity && !p.observations.empty()) {
    double sum = 0.0;
    for (const auto& o : p.observations) sum += o.weight;
    const double scale = static_cast<double>(p.observations.size()) / sum;
    for (auto& o : p.observations) o.weight *= scale;
  }
  return p;
}

void gauge_anchor(BAProblem& problem, std::size_t k, const Rotation& fixed) {
  if (k >= problem.attitudes.size()) throw Error(ErrorCode::kOutOfRange, "gauge_anchor: frame has no attitude");
  problem.attitudes[k] = fixed;
  problem.anchor = k;
}

namespace {

// Huber loss of a squared whitened residual s, and its derivative.
double huber(double s, double delta) {
  if (delta <= 0.0 || s <= delta * delta) return s;
  return 2.0 * delta * std::sqrt(s) - delta * delta;
}

double huber_slope(double s, double delta) {
  if (delta <= 0.0 || s <= delta * delta) return 1.0;
  return delta / std::sqrt(s);
}

}  // namespace

double ba_cost(const BAProblem& problem) {
  double c = 0.0;
  for (const auto& o : problem.observations) {
    const double s =
        o.weight * ba_residual(problem.attitudes[o.frame], problem.directions[o.star], o.ray).squaredNorm();
    c += huber(s, problem.huber_delta);
  }
  return c;
}

Vec3 ba_residual(const Rotation& r, const Vec3& x, const Vec3& y) { return y - r.matrix() * x; }

Mat3 ba_jacobian_attitude(const Rotation& r, const Vec3& x) { return hat(r.matrix() * x); }

Eigen::Matrix<double, 3, 2> ba_jacobian_direction(const Rotation& r, const Vec3& x) {
  return -r.matrix() * sphere_basis(x);
}

Eigen::Matrix<double, 3, 2> sphere_basis(const Vec3& x) {
  Eigen::Index k = 0;
  x.cwiseAbs().minCoeff(&k);
  Vec3 e = Vec3::Zero();
  e[k] = 1.0;
  const Vec3 b1 = x.cross(e).normalized();
  const Vec3 b2 = x.cross(b1).normalized();
  Eigen::Matrix<double, 3, 2> b;
  b.col(0) = b1;
  b.col(1) = b2;
  return b;
}

Rotation retract_attitude(const Rotation& r, const Vec3& phi) { return Rotation::exp(phi) * r; }

Vec3 retract_direction(const Vec3& x, const Eigen::Vector2d& u) { return (x + sphere_basis(x) * u).normalized(); }

std::string to_string(GaugeMode mode) {
  switch (mode) {
    case GaugeMode::kFirstFrame: return "first_frame";
    case GaugeMode::kFree: return "free";
    case GaugeMode::kAligned: return "aligned";
  }
  return "unknown";
}

std::string to_string(ObservationWeighting weighting) {
  switch (weighting) {
    case ObservationWeighting::kUniform: return "uniform";
    case ObservationWeighting::kIntensity: return "intensity";
  }
  return "unknown";
}

ObservationWeighting parse_observation_weighting(const std::string& text) {
  if (text == "uniform") return ObservationWeighting::kUniform;
  if (text == "intensity") return ObservationWeighting::kIntensity;
  throw Error(ErrorCode::kInvalidConfig, "bundle.weighting: expected uniform or intensity, got '" + text + "'");
}

GaugeMode parse_gauge_mode(const std::string& text) {
  if (text == "first_frame") return GaugeMode::kFirstFrame;
  if (text == "free") return GaugeMode::kFree;
  if (text == "aligned") return GaugeMode::kAligned;
  throw Error(ErrorCode::kInvalidConfig, "bundle.gauge: expected first_frame, free or aligned, got '" + text + "'");
}

namespace {

using Mat32 = Eigen::Matrix<double, 3, 2>;
using Mat2 = Eigen::Matrix2d;

struct Linearization {
  std::vector<Mat3> cam;       // JtJ camera blocks
  std::vector<Vec3> cam_g;     // Jt r camera parts
  std::vector<Mat2> star;      // JtJ star blocks
  std::vector<Eigen::Vector2d> star_g;
  std::vector<Mat32> cross;    // per observation, J_cam^T J_star
};

Linearization linearize(const BAProblem& p) {
  Linearization lin;
  lin.cam.assign(p.attitudes.size(), Mat3::Zero());
  lin.cam_g.assign(p.attitudes.size(), Vec3::Zero());
  lin.star.assign(p.directions.size(), Mat2::Zero());
  lin.star_g.assign(p.directions.size(), Eigen::Vector2d::Zero());
  lin.cross.resize(p.observations.size());
  for (std::size_t k = 0; k < p.observations.size(); ++k) {
    const auto& o = p.observations[k];
    const Rotation& r = p.attitudes[o.frame];
    const Vec3& x = p.directions[o.star];
    const Vec3 res = ba_residual(r, x, o.ray);
    const Mat3 jc = ba_jacobian_attitude(r, x);
    const Mat32 js = ba_jacobian_direction(r, x);
    const double w = o.weight * huber_slope(o.weight * res.squaredNorm(), p.huber_delta);
    lin.cam[o.frame] += w * jc.transpose() * jc;
    lin.cam_g[o.frame] += w * jc.transpose() * res;
    lin.star[o.star] += w * js.transpose() * js;
    lin.star_g[o.star] += w * js.transpose() * res;
    lin.cross[k] = w * jc.transpose() * js;
  }
  return lin;
}

std::string dump_iterate(const BAProblem& p, int iteration, double lambda) {
  std::ostringstream os;
  os << "bundle adjustment: non-finite cost at iteration " << iteration << " (lambda " << lambda << ")";
  for (std::size_t i = 0; i < p.attitudes.size(); ++i) {
    if (!p.attitudes[i].matrix().allFinite()) os << "; attitude " << i << " non-finite";
  }
  for (std::size_t s = 0; s < p.directions.size(); ++s) {
    if (!p.directions[s].allFinite()) os << "; direction " << s << " non-finite";
  }
  return os.str();
}

}  // namespace

BAResult bundle_adjust(BAProblem problem, const BAConfig& cfg) {
  if (problem.observations.empty()) throw Error(ErrorCode::kInvalidArgument, "bundle adjustment: no observations");
  for (const auto& o : problem.observations) {
    if (o.frame >= problem.attitudes.size() || o.star >= problem.directions.size()) {
      throw Error(ErrorCode::kOutOfRange, "bundle adjustment: observation index out of range");
    }
  }
  if (cfg.gauge == GaugeMode::kFirstFrame && !problem.anchor) problem.anchor = 0;
  if (cfg.huber_k > 0.0 && problem.huber_delta <= 0.0) {
    std::vector<double> norms;
    norms.reserve(problem.observations.size());
    for (const auto& o : problem.observations) {
      norms.push_back(std::sqrt(o.weight) *
                      ba_residual(problem.attitudes[o.frame], problem.directions[o.star], o.ray).norm());
    }
    auto mid = norms.begin() + static_cast<std::ptrdiff_t>(norms.size() / 2);
    std::nth_element(norms.begin(), mid, norms.end());
    // The median norm of a 2D isotropic Gaussian is sigma sqrt(2 ln 2).
    const double sigma = *mid / std::sqrt(2.0 * std::log(2.0));
    if (sigma > 0.0) problem.huber_delta = cfg.huber_k * sigma;
  }
  const std::vector<Rotation> initial_attitudes = problem.attitudes;

  // Frames without observations and the anchor stay fixed.
  const std::size_t m = problem.attitudes.size();
  std::vector<bool> observed(m, false);
  for (const auto& o : problem.observations) observed[o.frame] = true;
  std::vector<long> var(m, -1);
  long nvar = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (observed[i] && !(problem.anchor && *problem.anchor == i)) var[i] = nvar++;
  }
  std::vector<std::vector<std::size_t>> obs_of_star(problem.directions.size());
  for (std::size_t k = 0; k < problem.observations.size(); ++k) {
    obs_of_star[problem.observations[k].star].push_back(k);
  }

  BAResult result;
  double cost = ba_cost(problem);
  if (!std::isfinite(cost)) throw Error(ErrorCode::kNumericalFailure, dump_iterate(problem, 0, 0.0));
  result.initial_cost = cost;
  result.log.push_back({0, cost, cfg.initial_lambda, true});
  result.termination = "max_iterations";

  double lambda = cfg.initial_lambda;
  const auto n = static_cast<Eigen::Index>(3 * nvar);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool analyzed = false;
  bool relinearize = true;
  Linearization lin;

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (relinearize) {
      lin = linearize(problem);
      relinearize = false;
    }
    double gnorm = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (var[i] >= 0) gnorm = std::max(gnorm, lin.cam_g[i].cwiseAbs().maxCoeff());
    }
    for (const auto& g : lin.star_g) gnorm = std::max(gnorm, g.cwiseAbs().maxCoeff());
    if (gnorm < cfg.gradient_tolerance) {
      result.termination = "gradient";
      break;
    }

    // Reduced camera system S dc = rhs after eliminating each star block.
    std::vector<Mat2> vinv(problem.directions.size());
    for (std::size_t s = 0; s < vinv.size(); ++s) {
      vinv[s] = (lin.star[s] + lambda * Mat2::Identity()).inverse();
    }
    std::unordered_map<std::uint64_t, Mat3> blocks;
    blocks.reserve(static_cast<std::size_t>(nvar) * 16);
    auto block = [&blocks](long a, long b) -> Mat3& {
      const auto k = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
      return blocks.try_emplace(k, Mat3::Zero()).first->second;
    };
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < m; ++i) {
      if (var[i] < 0) continue;
      block(var[i], var[i]) += lin.cam[i] + lambda * Mat3::Identity();
      rhs.segment<3>(3 * var[i]) -= lin.cam_g[i];
    }
    for (std::size_t s = 0; s < obs_of_star.size(); ++s) {
      const auto& list = obs_of_star[s];
      for (std::size_t a = 0; a < list.size(); ++a) {
        const auto& oa = problem.observations[list[a]];
        const long va = var[oa.frame];
        if (va < 0) continue;
        const Mat32 wa = lin.cross[list[a]] * vinv[s];
        rhs.segment<3>(3 * va) += wa * lin.star_g[s];
        for (std::size_t b = 0; b < list.size(); ++b) {
          const auto& ob = problem.observations[list[b]];
          const long vb = var[ob.frame];
          if (vb < 0 || vb > va) continue;
          block(va, vb) -= wa * lin.cross[list[b]].transpose();
        }
      }
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(blocks.size() * 18);
    for (const auto& [k, blk] : blocks) {
      const auto a = static_cast<Eigen::Index>(k >> 32);
      const auto b = static_cast<Eigen::Index>(k & 0xffffffffu);
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          trip.emplace_back(3 * a + r, 3 * b + c, blk(r, c));
          if (a != b) trip.emplace_back(3 * b + c, 3 * a + r, blk(r, c));
        }
      }
    }
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(n);
    if (n > 0) {
      Eigen::SparseMatrix<double> s_mat(n, n);
      s_mat.setFromTriplets(trip.begin(), trip.end());
      if (!analyzed) {
        solver.analyzePattern(s_mat);
        analyzed = true;
      }
      solver.factorize(s_mat);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        result.log.push_back({it, cost, lambda, false});
        continue;
      }
      dc = solver.solve(rhs);
    }

    BAProblem trial = problem;
    for (std::size_t i = 0; i < m; ++i) {
      if (var[i] >= 0) trial.attitudes[i] = retract_attitude(problem.attitudes[i], dc.segment<3>(3 * var[i]));
    }
    for (std::size_t s = 0; s < obs_of_star.size(); ++s) {
      Eigen::Vector2d b = -lin.star_g[s];
      for (std::size_t k : obs_of_star[s]) {
        const long v = var[problem.observations[k].frame];
        if (v >= 0) b -= lin.cross[k].transpose() * dc.segment<3>(3 * v);
      }
      trial.directions[s] = retract_direction(problem.directions[s], vinv[s] * b);
    }
    const double trial_cost = ba_cost(trial);
    if (!std::isfinite(trial_cost)) throw Error(ErrorCode::kNumericalFailure, dump_iterate(trial, it, lambda));
    if (trial_cost < cost) {
      const double decrease = (cost - trial_cost) / std::max(cost, 1e-300);
      problem = std::move(trial);
      cost = trial_cost;
      lambda = std::max(lambda * 0.1, 1e-12);
      relinearize = true;
      result.log.push_back({it, cost, lambda, true});
      if (decrease < cfg.relative_tolerance) {
        result.termination = "relative_decrease";
        break;
      }
    } else {
      lambda *= 10.0;
      result.log.push_back({it, trial_cost, lambda, false});
      if (lambda > 1e16) {
        result.termination = "damping";
        break;
      }
    }
  }

  if (cfg.gauge == GaugeMode::kAligned) {
    // Q^T minimizes sum ||R_i Q^T - R0_i||_F^2.
    std::vector<Rotation> rel;
    rel.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
      if (observed[i]) rel.push_back(problem.attitudes[i].inverse() * initial_attitudes[i]);
    }
    const Rotation qt = chordal_mean(rel);
    const Rotation q = qt.inverse();
    for (std::size_t i = 0; i < m; ++i) {
      if (observed[i]) problem.attitudes[i] = problem.attitudes[i] * qt;
    }
    for (auto& x : problem.directions) x = (q.matrix() * x).normalized();
  }

  result.final_cost = ba_cost(problem);
  result.problem = std::move(problem);
  return result;
}

}  // namespace startrack
