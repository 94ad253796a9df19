#include "startrack/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace startrack {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::map<std::size_t, Rotation> to_map(std::span<const Rotation> v) {
  std::map<std::size_t, Rotation> m;
  for (std::size_t i = 0; i < v.size(); ++i) m.emplace(i, v[i]);
  return m;
}

Metadata config_metadata(const PipelineConfig& cfg) {
  Metadata m;
  for (auto& [k, v] : config_entries(cfg)) m.emplace_back(k, v);
  return m;
}

std::string quat_text(const Rotation& r) {
  const auto q = r.quaternion();
  return format_double(q.w()) + "," + format_double(q.x()) + "," + format_double(q.y()) + "," + format_double(q.z());
}

}  // namespace

StarCatalog resolve_catalog(const PipelineConfig& cfg) {
  if (!cfg.catalog_path.empty()) return load_catalog(cfg.catalog_path);
  return generate_catalog(cfg.catalog_gen);
}

SimConfig simulation_config(const PipelineConfig& cfg) {
  SimConfig s = cfg.sim;
  s.frame_interval_ms = cfg.integration_ms;
  return s;
}

Metadata simulation_metadata(const PipelineConfig& cfg, const SimResult& sim) {
  Metadata m;
  m.emplace_back("seed", std::to_string(cfg.sim.seed));
  const auto& a = sim.trajectory.axis;
  m.emplace_back("resolved_axis", format_double(a.x()) + "," + format_double(a.y()) + "," + format_double(a.z()));
  m.emplace_back("resolved_initial_attitude", quat_text(sim.trajectory.initial));
  m.emplace_back("frames", std::to_string(sim.trajectory.attitudes.size()));
  m.emplace_back("events", std::to_string(sim.events.size()));
  m.emplace_back("star_events", std::to_string(sim.star_events));
  m.emplace_back("noise_events", std::to_string(sim.noise_events));
  m.emplace_back("hot_pixel_events", std::to_string(sim.hot_events));
  std::string hot;
  for (const auto& [x, y] : sim.hot_pixels) hot += (hot.empty() ? "" : ";") + std::to_string(x) + "," + std::to_string(y);
  m.emplace_back("hot_pixels", hot);
  for (auto& kv : config_metadata(cfg)) m.push_back(kv);
  return m;
}

TrackResult run_tracking(std::span<const Event> events, const StarCatalog& catalog, const PipelineConfig& cfg,
                         TrackResult* partial) {
  cfg.validate();
  TrackResult r;
  std::string stage = "frames";
  try {
    const SimConfig sc = simulation_config(cfg);
    const Intrinsics k = sc.camera();
    auto t0 = Clock::now();
    const auto t_end = static_cast<std::int64_t>(std::llround(sc.duration_s * 1e6));
    const EventImageSequence seq = build_event_images(events, sc.width, sc.height, 0, t_end, cfg.integration_ms);
    r.frame_count = seq.images.size();
    r.selected = select_frames(seq.images, cfg.eps1, cfg.eps2);
    r.point_sets.reserve(seq.images.size());
    for (std::size_t i = 0; i < seq.images.size(); ++i) {
      r.point_sets.push_back(extract_points(mean_filter(seq.images[i]), cfg.eps1, k, cfg.point_mode, i));
    }
    r.times.image_generation_s = seconds_since(t0);

    t0 = Clock::now();
    stage = "star_id";
    const TriangleHashIndex index = TriangleHashIndex::build(catalog, cfg.index);
    r.absolute = absolute_rotations(r.point_sets, r.selected, index, k, sc.width, sc.height, cfg.identify);
    if (r.absolute.rotations.empty()) {
      throw Error(ErrorCode::kAnchorFree, "no frame could be identified (" + std::to_string(r.selected.size()) +
                                              " selected), the absolute rotation set is empty");
    }
    stage = "registration";
    r.relative = relative_rotations(r.point_sets, cfg.registration);
    r.tracks = build_tracks(r.relative, r.point_sets, cfg.track_gate_px / k.fx);
    r.times.measurement_extraction_s = seconds_since(t0);

    t0 = Clock::now();
    MeasurementSet ms;
    ms.frame_count = r.frame_count;
    ms.alpha = cfg.alpha;
    ms.absolute = r.absolute.rotations;
    for (const auto& rel : r.relative) ms.relative.push_back({rel.j, rel.i, rel.rotation});
    try {
      r.chained = chain_rotations(ms);
    } catch (const Error& e) {
      r.chained_error = e.what();
    }
    stage = "averaging";
    r.averaged = augmented_rotation_averaging(ms, cfg.averaging);
    stage = "bundle";
    BAProblem problem = make_ba_problem(r.averaged->attitudes, r.tracks, cfg.bundle.weighting);
    if (problem.observations.empty()) throw Error(ErrorCode::kInvalidArgument, "no star tracks to refine");
    r.bundle = bundle_adjust(std::move(problem), cfg.bundle);
    r.times.optimization_s = seconds_since(t0);
  } catch (const Error& e) {
    if (partial) *partial = r;
    throw StageError(stage, e);
  }
  return r;
}

EvaluationReport evaluate_tracking(const TrackResult& result, const std::map<std::size_t, Rotation>& truth) {
  EvaluationReport rep;
  if (result.chained) rep.chained = attitude_errors(to_map(*result.chained), truth);
  if (result.averaged) rep.averaged = attitude_errors(to_map(result.averaged->attitudes), truth);
  if (result.bundle) {
    const auto est = to_map(result.bundle->problem.attitudes);
    rep.bundle = attitude_errors(est, truth);
    rep.bundle_aligned = attitude_errors(align_to_truth(est, truth), truth);
  }
  rep.absolute = attitude_errors(result.absolute.rotations, truth);
  rep.absolute_buckets = bucket_errors(rep.absolute->errors_deg);
  rep.relative = relative_errors(result.relative, truth);
  return rep;
}

SimulateOutputs cmd_simulate(const PipelineConfig& cfg, const std::filesystem::path& out) {
  cfg.validate();
  std::filesystem::create_directories(out);
  SimulateOutputs paths;
  StarCatalog catalog;
  if (cfg.catalog_path.empty()) {
    paths.catalog = out / "catalog.csv";
    write_catalog(generate_catalog(cfg.catalog_gen), paths.catalog);
    catalog = load_catalog(paths.catalog);
  } else {
    paths.catalog = cfg.catalog_path;
    catalog = load_catalog(paths.catalog);
  }
  const SimResult sim = simulate_events(catalog, simulation_config(cfg));
  paths.events = out / "events.csv";
  paths.ground_truth = out / "ground_truth.csv";
  write_events(paths.events, sim.events);
  write_attitudes(paths.ground_truth, std::span<const Rotation>(sim.trajectory.attitudes),
                  simulation_metadata(cfg, sim));
  write_text(out / "config.txt", format_config(cfg));
  return paths;
}

TrackResult cmd_track(const std::filesystem::path& events_path, const std::filesystem::path& catalog_path,
                      const PipelineConfig& cfg, const std::filesystem::path& out) {
  std::vector<Event> events;
  StarCatalog catalog;
  try {
    events = read_events(events_path);
    catalog = load_catalog(catalog_path);
  } catch (const Error& e) {
    throw StageError("input", e);
  }
  std::filesystem::create_directories(out);
  write_text(out / "config.txt", format_config(cfg));
  const Metadata meta = config_metadata(cfg);

  auto write_all = [&](const TrackResult& r) {
    write_point_sets(out / "points.csv", r.point_sets);
    if (!r.absolute.report.empty()) {
      write_identification_report(out / "identification.csv", r.absolute.report);
      write_attitudes(out / "absolute.csv", r.absolute.rotations, meta);
    }
    if (!r.relative.empty()) write_relative_rotations(out / "relative.csv", r.relative);
    if (!r.tracks.empty()) write_tracks(out / "tracks.csv", r.tracks);
    if (r.chained) write_attitudes(out / "chained.csv", std::span<const Rotation>(*r.chained), meta);
    if (r.averaged) {
      write_attitudes(out / "averaged.csv", std::span<const Rotation>(r.averaged->attitudes), meta);
      write_convergence_log(out / "averaging_log.csv", r.averaged->log);
    }
    if (r.bundle) {
      write_attitudes(out / "bundle.csv", std::span<const Rotation>(r.bundle->problem.attitudes), meta);
      write_star_directions(out / "stars.csv", r.bundle->problem);
      write_ba_log(out / "bundle_log.csv", r.bundle->log);
    }
    nlohmann::ordered_json t;
    t["image_generation_s"] = r.times.image_generation_s;
    t["measurement_extraction_s"] = r.times.measurement_extraction_s;
    t["optimization_s"] = r.times.optimization_s;
    t["frames"] = r.frame_count;
    write_text(out / "runtimes.json", t.dump(2) + "\n");
  };

  if (cfg.write_images) {
    const SimConfig sc = simulation_config(cfg);
    const auto t_end = static_cast<std::int64_t>(std::llround(sc.duration_s * 1e6));
    const auto seq = build_event_images(events, sc.width, sc.height, 0, t_end, cfg.integration_ms);
    std::filesystem::create_directories(out / "images");
    char name[64];
    for (std::size_t i = 0; i < seq.images.size(); ++i) {
      std::snprintf(name, sizeof(name), "frame_%05zu.pgm", i);
      write_pgm(seq.images[i], out / "images" / name);
    }
  }

  TrackResult partial;
  try {
    TrackResult r = run_tracking(events, catalog, cfg, &partial);
    write_all(r);
    return r;
  } catch (const StageError&) {
    write_all(partial);
    throw;
  }
}

EvaluationReport cmd_evaluate(const std::filesystem::path& track_dir, const std::filesystem::path& ground_truth,
                              const std::filesystem::path& out) {
  const AttitudeFile truth = read_attitudes(ground_truth);
  EvaluationReport rep;
  auto series = [&](const char* file) -> std::optional<ErrorSeries> {
    const auto p = track_dir / file;
    if (!std::filesystem::exists(p)) return std::nullopt;
    return attitude_errors(read_attitudes(p).attitudes, truth.attitudes);
  };
  rep.chained = series("chained.csv");
  rep.averaged = series("averaged.csv");
  if (std::filesystem::exists(track_dir / "bundle.csv")) {
    const AttitudeFile ba = read_attitudes(track_dir / "bundle.csv");
    rep.bundle = attitude_errors(ba.attitudes, truth.attitudes);
    rep.bundle_aligned = attitude_errors(align_to_truth(ba.attitudes, truth.attitudes), truth.attitudes);
    for (const auto& [k, v] : ba.metadata) rep.metadata.emplace_back("track." + k, v);
  }
  rep.absolute = series("absolute.csv");
  if (rep.absolute) rep.absolute_buckets = bucket_errors(rep.absolute->errors_deg);
  if (std::filesystem::exists(track_dir / "relative.csv")) {
    rep.relative = relative_errors(read_relative_rotations(track_dir / "relative.csv"), truth.attitudes);
  }
  for (const auto& [k, v] : truth.metadata) rep.metadata.emplace_back("truth." + k, v);
  std::filesystem::create_directories(out);
  write_text(out / "report.json", rep.to_json());
  write_per_frame_csv(out / "per_frame.csv", rep);
  return rep;
}

CalibSolution cmd_calibrate(const std::filesystem::path& plane_pairs, const std::filesystem::path& ray_pairs,
                            const std::filesystem::path& event_intrinsics, const std::filesystem::path& out) {
  const auto planes = read_plane_pairs(plane_pairs);
  const auto rays = read_ray_pairs(ray_pairs);
  const Intrinsics k_ev = read_intrinsics(event_intrinsics);
  const CalibSolution s = calibrate(planes, rays, k_ev);
  std::filesystem::create_directories(out);
  write_text(out / "calibration.txt", format_calibration(s));
  return s;
}

}  // namespace startrack
