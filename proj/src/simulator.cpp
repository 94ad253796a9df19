#include "startrack/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <string>

#include "startrack/rng.hpp"

namespace startrack {

namespace {

constexpr std::uint64_t kStarTag = 0x5354415200000000ULL;
constexpr std::uint64_t kNoiseTag = 0x4e4f495345000000ULL;
constexpr std::uint64_t kHotTag = 0x484f540000000000ULL;
constexpr std::uint64_t kHotPositionTag = 0x484f545053000000ULL;
constexpr std::uint64_t kMotionTag = 0x4d4f54494f4e0000ULL;

constexpr std::int64_t kBlockSubsteps = 250;

double gaussian(CounterRng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * kPi * u2);
}

std::uint64_t poisson(CounterRng& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(rng);
}

struct SpanOutput {
  std::vector<Event> events;
  std::size_t star = 0;
  std::size_t noise = 0;
  std::size_t hot = 0;
  bool saw_star = false;
};

struct SimContext {
  const StarCatalog* catalog;
  const CatalogIndex* index;
  const SimConfig* cfg;
  Intrinsics k;
  ResolvedMotion motion;
  std::int64_t duration_us;
  std::int64_t substep_us;
  std::int64_t substeps;
  double half_diagonal_deg;
  std::vector<std::pair<int, int>> hot_pixels;

  Rotation attitude(double t_s) const {
    return Rotation::from_axis_angle(motion.axis.vec(),
                                     cfg->angular_speed_deg_s * kRadPerDeg * t_s) *
           motion.initial;
  }

  bool on_sensor(const Vec2& p, double margin) const {
    return p.x() >= -0.5 - margin && p.x() < cfg->width - 0.5 + margin &&
           p.y() >= -0.5 - margin && p.y() < cfg->height - 0.5 + margin;
  }

  // Rounds to the nearest pixel; false when outside the sensor.
  bool to_pixel(const Vec2& p, std::uint16_t& x, std::uint16_t& y) const {
    const double rx = std::floor(p.x() + 0.5);
    const double ry = std::floor(p.y() + 0.5);
    if (rx < 0.0 || ry < 0.0 || rx >= cfg->width || ry >= cfg->height) return false;
    x = static_cast<std::uint16_t>(rx);
    y = static_cast<std::uint16_t>(ry);
    return true;
  }
};

void simulate_stars(const SimContext& ctx, std::int64_t k0, std::int64_t k1, SpanOutput& out) {
  const SimConfig& cfg = *ctx.cfg;
  const double speed_rad = cfg.angular_speed_deg_s * kRadPerDeg;
  for (std::int64_t b0 = (k0 / kBlockSubsteps) * kBlockSubsteps; b0 < k1; b0 += kBlockSubsteps) {
    const std::int64_t lo = std::max(b0, k0);
    const std::int64_t hi = std::min({b0 + kBlockSubsteps, k1, ctx.substeps});
    if (lo >= hi) continue;
    // Superset of the stars that can touch the sensor during this block.
    const double t_mid = 1e-6 * static_cast<double>(b0 * ctx.substep_us) +
                         0.5e-6 * static_cast<double>(kBlockSubsteps * ctx.substep_us);
    const Rotation r_mid = ctx.attitude(t_mid);
    const UnitVector3 boresight(Vec3(r_mid.matrix().transpose() * Vec3::UnitZ()));
    const double sweep_deg =
        0.5 * static_cast<double>(kBlockSubsteps * ctx.substep_us) * 1e-6 * std::abs(speed_rad) * kDegPerRad;
    const double radius = std::min(90.0, ctx.half_diagonal_deg + sweep_deg + 1.0);
    const auto candidates = ctx.index->cone_query(boresight, radius, cfg.mag_limit);
    if (candidates.empty()) continue;

    for (std::int64_t k = lo; k < hi; ++k) {
      const std::int64_t t0_us = k * ctx.substep_us;
      const std::int64_t t1_us = std::min(t0_us + ctx.substep_us, ctx.duration_us);
      const double dt = 1e-6 * static_cast<double>(t1_us - t0_us);
      const Rotation r0 = ctx.attitude(1e-6 * static_cast<double>(t0_us));
      const Rotation r1 = ctx.attitude(1e-6 * static_cast<double>(t1_us));
      for (const auto& star : candidates) {
        const auto p0 = project(ctx.k, r0, star.direction);
        const auto p1 = project(ctx.k, r1, star.direction);
        if (!p0 || !p1) continue;
        if (!ctx.on_sensor(*p0, 2.0) && !ctx.on_sensor(*p1, 2.0)) continue;
        if (ctx.on_sensor(*p0, 0.0)) out.saw_star = true;
        const Vec2 vel = (*p1 - *p0) / dt;
        const double speed = vel.norm();
        const double rate = cfg.star_rate.rho0 *
                            std::pow(10.0, -0.4 * (star.magnitude - cfg.star_rate.mag_ref)) *
                            std::min(speed / cfg.star_rate.speed_ref_px_s, 1.0);
        CounterRng rng(stream_key(cfg.seed, kStarTag, static_cast<std::uint64_t>(star.id),
                                  static_cast<std::uint64_t>(k)));
        const std::uint64_t n = poisson(rng, rate * dt);
        for (std::uint64_t e = 0; e < n; ++e) {
          const double u = rng.uniform();
          auto t_us = t0_us + static_cast<std::int64_t>(std::floor(u * static_cast<double>(t1_us - t0_us)));
          t_us = std::min(t_us, t1_us - 1);
          const double frac = static_cast<double>(t_us - t0_us) / static_cast<double>(t1_us - t0_us);
          const Vec2 centre = *p0 + frac * (*p1 - *p0);
          Vec2 p = centre;
          if (cfg.jitter_px > 0.0) {
            const double jx = gaussian(rng);
            const double jy = gaussian(rng);
            p += cfg.jitter_px * Vec2(jx, jy);
          }
          Event ev;
          if (!ctx.to_pixel(p, ev.x, ev.y)) continue;
          ev.t_us = t_us;
          // Leading edge of the trail fires positive, trailing edge negative.
          ev.positive = (Vec2(ev.x, ev.y) - centre).dot(vel) >= 0.0;
          out.events.push_back(ev);
          ++out.star;
        }
      }
    }
  }
}

void simulate_noise(const SimContext& ctx, std::int64_t k0, std::int64_t k1, SpanOutput& out) {
  const SimConfig& cfg = *ctx.cfg;
  for (std::int64_t k = k0; k < k1; ++k) {
    const std::int64_t t0_us = k * ctx.substep_us;
    const std::int64_t t1_us = std::min(t0_us + ctx.substep_us, ctx.duration_us);
    const auto span_us = static_cast<double>(t1_us - t0_us);
    const double dt = 1e-6 * span_us;
    auto draw_time = [&](CounterRng& rng) {
      return std::min(t0_us + static_cast<std::int64_t>(std::floor(rng.uniform() * span_us)), t1_us - 1);
    };
    if (cfg.noise_rate > 0.0) {
      CounterRng rng(stream_key(cfg.seed, kNoiseTag, static_cast<std::uint64_t>(k)));
      const std::uint64_t n = poisson(rng, cfg.noise_rate * cfg.width * cfg.height * dt);
      for (std::uint64_t e = 0; e < n; ++e) {
        Event ev;
        ev.t_us = draw_time(rng);
        ev.x = static_cast<std::uint16_t>(std::min<double>(cfg.width - 1, std::floor(rng.uniform() * cfg.width)));
        ev.y = static_cast<std::uint16_t>(std::min<double>(cfg.height - 1, std::floor(rng.uniform() * cfg.height)));
        ev.positive = rng.uniform() < 0.5;
        out.events.push_back(ev);
        ++out.noise;
      }
    }
    if (cfg.hot_pixel_rate > 0.0) {
      for (std::size_t h = 0; h < ctx.hot_pixels.size(); ++h) {
        CounterRng rng(stream_key(cfg.seed, kHotTag, h, static_cast<std::uint64_t>(k)));
        const std::uint64_t n = poisson(rng, cfg.hot_pixel_rate * dt);
        for (std::uint64_t e = 0; e < n; ++e) {
          Event ev;
          ev.t_us = draw_time(rng);
          ev.x = static_cast<std::uint16_t>(ctx.hot_pixels[h].first);
          ev.y = static_cast<std::uint16_t>(ctx.hot_pixels[h].second);
          ev.positive = rng.uniform() < 0.5;
          out.events.push_back(ev);
          ++out.hot;
        }
      }
    }
  }
}

SpanOutput simulate_span(const SimContext& ctx, std::int64_t k0, std::int64_t k1) {
  SpanOutput out;
  simulate_stars(ctx, k0, k1, out);
  simulate_noise(ctx, k0, k1, out);
  return out;
}

}  // namespace

bool event_less(const Event& a, const Event& b) {
  if (a.t_us != b.t_us) return a.t_us < b.t_us;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.positive < b.positive;
}

Intrinsics SimConfig::camera() const {
  if (intrinsics) return *intrinsics;
  return Intrinsics::from_fov(fov_deg, width, height);
}

void SimConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::kInvalidConfig, "sim." + field + ": " + why);
  };
  if (width <= 0 || width > 65535) fail("width", "must be in [1, 65535]");
  if (height <= 0 || height > 65535) fail("height", "must be in [1, 65535]");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) fail("fov_deg", "must be in (0, 180)");
  if (!(duration_s > 0.0)) fail("duration_s", "must be > 0");
  if (!std::isfinite(angular_speed_deg_s)) fail("angular_speed_deg_s", "must be finite");
  if (!(star_rate.rho0 >= 0.0)) fail("rho0", "must be >= 0");
  if (!(star_rate.speed_ref_px_s > 0.0)) fail("speed_ref_px_s", "must be > 0");
  if (!(noise_rate >= 0.0)) fail("noise_rate", "must be >= 0");
  if (hot_pixel_count < 0) fail("hot_pixel_count", "must be >= 0");
  if (!(hot_pixel_rate >= 0.0)) fail("hot_pixel_rate", "must be >= 0");
  if (!(jitter_px >= 0.0)) fail("jitter_px", "must be >= 0");
  if (!(substep_ms > 0.0)) fail("substep_ms", "must be > 0");
  if (!(frame_interval_ms > 0.0)) fail("frame_interval_ms", "must be > 0");
  if (threads < 1) fail("threads", "must be >= 1");
  if (axis && !(axis->norm() > 0.0)) fail("axis", "must be non-zero");
  if (intrinsics) intrinsics->validate();
}

Rotation Trajectory::at(double t_s) const {
  return rotation_from_axis_angle(axis, angular_speed_deg_s * kRadPerDeg * t_s) * initial;
}

ResolvedMotion resolve_motion(const SimConfig& cfg) {
  CounterRng rng(stream_key(cfg.seed, kMotionTag));
  ResolvedMotion m;
  if (cfg.initial_attitude) {
    m.initial = *cfg.initial_attitude;
  } else {
    const double w = gaussian(rng);
    const double x = gaussian(rng);
    const double y = gaussian(rng);
    const double z = gaussian(rng);
    m.initial = Rotation::from_quaternion(w, x, y, z);
  }
  if (cfg.axis) {
    m.axis = UnitVector3(*cfg.axis);
  } else {
    for (;;) {
      const double z = 2.0 * rng.uniform() - 1.0;
      if (std::abs(z) > 0.5) continue;
      const double phi = 2.0 * kPi * rng.uniform();
      const double r = std::sqrt(1.0 - z * z);
      m.axis = UnitVector3(r * std::cos(phi), r * std::sin(phi), z);
      break;
    }
  }
  return m;
}

Trajectory make_trajectory(const SimConfig& cfg, const std::vector<double>& times_s) {
  const ResolvedMotion motion = resolve_motion(cfg);
  Trajectory traj;
  traj.initial = motion.initial;
  traj.axis = motion.axis;
  traj.angular_speed_deg_s = cfg.angular_speed_deg_s;
  traj.times = times_s;
  traj.attitudes.reserve(times_s.size());
  for (double t : times_s) {
    if (t < 0.0 || t > cfg.duration_s) {
      throw Error(ErrorCode::kOutOfRange, "trajectory time " + std::to_string(t) + " outside [0, duration]");
    }
    traj.attitudes.push_back(traj.at(t));
  }
  return traj;
}

std::vector<double> window_midpoints(double duration_s, double interval_ms) {
  const auto duration_us = static_cast<std::int64_t>(std::llround(duration_s * 1e6));
  const auto interval_us = static_cast<std::int64_t>(std::llround(interval_ms * 1e3));
  std::vector<double> out;
  if (interval_us <= 0) return out;
  const std::int64_t m = duration_us / interval_us;
  out.reserve(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) {
    out.push_back(1e-6 * (static_cast<double>(i * interval_us) + 0.5 * static_cast<double>(interval_us)));
  }
  return out;
}

SimResult simulate_events(const StarCatalog& catalog, const SimConfig& cfg) {
  cfg.validate();
  const CatalogIndex index(catalog);
  SimContext ctx;
  ctx.catalog = &catalog;
  ctx.index = &index;
  ctx.cfg = &cfg;
  ctx.k = cfg.camera();
  ctx.motion = resolve_motion(cfg);
  ctx.duration_us = std::llround(cfg.duration_s * 1e6);
  ctx.substep_us = std::max<std::int64_t>(1, std::llround(cfg.substep_ms * 1e3));
  ctx.substeps = (ctx.duration_us + ctx.substep_us - 1) / ctx.substep_us;
  {
    const double hx = std::max(std::abs(-0.5 - ctx.k.cx), std::abs(cfg.width - 0.5 - ctx.k.cx)) / ctx.k.fx;
    const double hy = std::max(std::abs(-0.5 - ctx.k.cy), std::abs(cfg.height - 0.5 - ctx.k.cy)) / ctx.k.fy;
    ctx.half_diagonal_deg = std::atan(std::hypot(hx, hy)) * kDegPerRad;
  }
  {
    CounterRng rng(stream_key(cfg.seed, kHotPositionTag));
    for (int h = 0; h < cfg.hot_pixel_count; ++h) {
      const int x = std::min(cfg.width - 1, static_cast<int>(rng.uniform() * cfg.width));
      const int y = std::min(cfg.height - 1, static_cast<int>(rng.uniform() * cfg.height));
      ctx.hot_pixels.emplace_back(x, y);
    }
  }

  const int threads = std::max(1, cfg.threads);
  std::vector<SpanOutput> spans;
  if (threads == 1 || catalog.empty()) {
    spans.push_back(simulate_span(ctx, 0, ctx.substeps));
  } else {
    std::vector<std::future<SpanOutput>> jobs;
    for (int t = 0; t < threads; ++t) {
      const std::int64_t k0 = ctx.substeps * t / threads;
      const std::int64_t k1 = ctx.substeps * (t + 1) / threads;
      jobs.push_back(std::async(std::launch::async, [&ctx, k0, k1] { return simulate_span(ctx, k0, k1); }));
    }
    for (auto& j : jobs) spans.push_back(j.get());
  }

  SimResult result;
  bool saw_star = false;
  for (auto& s : spans) {
    result.star_events += s.star;
    result.noise_events += s.noise;
    result.hot_events += s.hot;
    saw_star = saw_star || s.saw_star;
    result.events.insert(result.events.end(), s.events.begin(), s.events.end());
  }
  std::sort(result.events.begin(), result.events.end(), event_less);
  result.no_stars_in_fov = !saw_star;
  result.hot_pixels = ctx.hot_pixels;
  result.trajectory = make_trajectory(cfg, window_midpoints(cfg.duration_s, cfg.frame_interval_ms));
  return result;
}

}  // namespace startrack
