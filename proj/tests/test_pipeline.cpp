#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include "json.hpp"
#include <random>
#include <sstream>

#include "startrack/config.hpp"
#include "startrack/evaluation.hpp"
#include "startrack/io.hpp"
#include "startrack/pipeline.hpp"
#include "support.hpp"

using namespace startrack;
namespace fs = std::filesystem;
using testing_support::random_rotation;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("startrack_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PipelineConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::pair<ErrorCode, std::string> failure_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return {e.code(), e.what()};
  }
  ADD_FAILURE() << "expected an exception";
  return {ErrorCode::kIo, ""};
}

PipelineConfig short_run(double seconds, std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.sim.duration_s = seconds;
  cfg.sim.seed = seed;
  return cfg;
}

}  // namespace

TEST(Config, DefaultsMatchTheReferenceExperiment) {
  const PipelineConfig cfg;
  EXPECT_EQ(cfg.sim.fov_deg, 20.0);
  EXPECT_EQ(cfg.sim.duration_s, 45.0);
  EXPECT_EQ(cfg.sim.angular_speed_deg_s, 4.0);
  EXPECT_EQ(cfg.sim.width, 240);
  EXPECT_EQ(cfg.sim.height, 180);
  EXPECT_EQ(cfg.integration_ms, 40.0);
  EXPECT_EQ(cfg.eps1, 2.0);
  EXPECT_EQ(cfg.eps2, 50.0);
  EXPECT_EQ(cfg.registration.window, 5);
  EXPECT_EQ(cfg.registration.icp.trim_fraction, 0.7);
  EXPECT_EQ(cfg.identify.r_verify_px, 2.0);
  EXPECT_EQ(cfg.identify.min_inliers, 4);
  EXPECT_EQ(cfg.index.quantization_deg, 0.2);
  EXPECT_EQ(cfg.averaging.huber_delta, 0.1);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, ParsesKeysAndComments) {
  const PipelineConfig cfg = parse(
      "# comment\n"
      "sim.duration_s = 12.5\n"
      "sim.axis = 0, 1, 0   # trailing comment\n"
      "frames.eps2 = 75\n"
      "registration.window = 3\n"
      "bundle.gauge = first_frame\n"
      "bundle.weighting = uniform\n"
      "bundle.huber_k = 0\n"
      "frames.point_mode = pixels\n"
      "\n");
  EXPECT_EQ(cfg.sim.duration_s, 12.5);
  ASSERT_TRUE(cfg.sim.axis.has_value());
  EXPECT_EQ(*cfg.sim.axis, Vec3(0, 1, 0));
  EXPECT_EQ(cfg.eps2, 75.0);
  EXPECT_EQ(cfg.registration.window, 3);
  EXPECT_EQ(cfg.bundle.gauge, GaugeMode::kFirstFrame);
  EXPECT_EQ(cfg.bundle.weighting, ObservationWeighting::kUniform);
  EXPECT_EQ(cfg.bundle.huber_k, 0.0);
  EXPECT_EQ(cfg.point_mode, PointMode::kPixels);
}

TEST(Config, ErrorsNameKeyAndLine) {
  auto [c1, m1] = failure_of([] { parse("sim.duration_s = 3\nsim.bogus = 1\n"); });
  EXPECT_EQ(c1, ErrorCode::kInvalidConfig);
  EXPECT_NE(m1.find("sim.bogus"), std::string::npos);
  EXPECT_NE(m1.find("2"), std::string::npos);
  auto [c2, m2] = failure_of([] { parse("frames.eps1 = two\n"); });
  EXPECT_EQ(c2, ErrorCode::kInvalidConfig);
  EXPECT_NE(m2.find("frames.eps1"), std::string::npos);
  EXPECT_EQ(failure_of([] { parse("no equals sign\n"); }).first, ErrorCode::kInvalidConfig);
  EXPECT_EQ(failure_of([] { parse("sim.duration_s = -1\n").validate(); }).first, ErrorCode::kInvalidConfig);
  EXPECT_EQ(failure_of([] { parse("registration.window = 0\n").validate(); }).first, ErrorCode::kInvalidConfig);
  EXPECT_EQ(failure_of([] { parse("bundle.huber_k = -1\n").validate(); }).first, ErrorCode::kInvalidConfig);
  EXPECT_EQ(failure_of([] { parse("bundle.weighting = loud\n"); }).first, ErrorCode::kInvalidConfig);
}

TEST(Config, FormatParseRoundTrip) {
  PipelineConfig cfg;
  cfg.sim.duration_s = 7.25;
  cfg.sim.axis = Vec3(0.6, 0.8, 0.0);
  cfg.sim.initial_attitude = Rotation::from_quaternion(0.9, 0.1, -0.3, 0.2);
  cfg.alpha = 3.5;
  cfg.bundle.gauge = GaugeMode::kFree;
  cfg.identify.max_false_alarm = 0.05;
  const PipelineConfig back = parse(format_config(cfg));
  // The attitude quaternion is renormalized on parsing, so compare it as a rotation.
  ASSERT_TRUE(back.sim.initial_attitude.has_value());
  EXPECT_LE(angular_error_deg(*back.sim.initial_attitude, *cfg.sim.initial_attitude), 1e-12);
  PipelineConfig same = back;
  same.sim.initial_attitude = cfg.sim.initial_attitude;
  EXPECT_EQ(config_entries(same), config_entries(cfg));
}

TEST(Io, EventsRoundTrip) {
  const fs::path dir = scratch("events");
  const std::vector<Event> ev{{0, 1, 2, true}, {5, 239, 179, false}, {5, 0, 0, true}};
  write_events(dir / "e.csv", ev);
  EXPECT_EQ(read_events(dir / "e.csv"), ev);
  EXPECT_EQ(slurp(dir / "e.csv").substr(0, 9), "t_us,x,y,");
}

TEST(Io, AttitudesRoundTripWithMetadata) {
  const fs::path dir = scratch("attitudes");
  std::mt19937_64 rng(131);
  std::map<std::size_t, Rotation> att;
  for (std::size_t f : {0u, 3u, 9u}) att[f] = random_rotation(rng);
  write_attitudes(dir / "a.csv", att, {{"seed", "7"}, {"source", "test"}});
  const AttitudeFile back = read_attitudes(dir / "a.csv");
  ASSERT_EQ(back.attitudes.size(), 3u);
  for (const auto& [f, r] : att) {
    EXPECT_LE(angular_error_deg(back.attitudes.at(f), r), 1e-12);
    EXPECT_GE(back.attitudes.at(f).quaternion().w(), 0.0);
  }
  EXPECT_EQ(back.metadata, (Metadata{{"seed", "7"}, {"source", "test"}}));
}

TEST(Io, DuplicateFrameRejected) {
  const fs::path dir = scratch("dup");
  write_text(dir / "a.csv", "frame_index,qw,qx,qy,qz\n1,1,0,0,0\n1,1,0,0,0\n");
  EXPECT_EQ(failure_of([&] { read_attitudes(dir / "a.csv"); }).first, ErrorCode::kDuplicateId);
}

TEST(Io, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(132);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int trial = 0; trial < 1000; ++trial) {
    const double v = u(rng) * std::pow(10.0, trial % 20 - 10);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Evaluate, PerfectEstimatesScoreZero) {
  std::mt19937_64 rng(133);
  std::map<std::size_t, Rotation> truth;
  for (std::size_t f = 0; f < 10; ++f) truth[f] = random_rotation(rng);
  const ErrorSeries s = attitude_errors(truth, truth);
  EXPECT_EQ(s.rmse, 0.0);
  EXPECT_EQ(s.sd, 0.0);
  for (double e : s.errors_deg) EXPECT_EQ(e, 0.0);
}

TEST(Evaluate, SingleFrameOffByTwoDegrees) {
  std::mt19937_64 rng(134);
  const Rotation t = random_rotation(rng);
  const std::map<std::size_t, Rotation> truth{{0, t}};
  const std::map<std::size_t, Rotation> est{{0, Rotation::from_axis_angle(Vec3(0, 1, 0), 2.0 * kRadPerDeg) * t}};
  const ErrorSeries s = attitude_errors(est, truth);
  EXPECT_NEAR(s.rmse, 2.0, 1e-9);
  EXPECT_EQ(s.sd, 0.0);
}

TEST(Evaluate, StatisticsFollowDefinitions) {
  const ErrorSeries s = summarize({0, 1, 2, 3}, {1.0, 2.0, 3.0, 4.0});
  EXPECT_NEAR(s.rmse, std::sqrt(30.0 / 4.0), 1e-15);
  EXPECT_NEAR(s.mean, 2.5, 1e-15);
  EXPECT_NEAR(s.sd, std::sqrt(1.25), 1e-15);
  EXPECT_EQ(s.max, 4.0);
}

TEST(Evaluate, IndexMismatchListsMissingFrames) {
  const std::map<std::size_t, Rotation> truth{{0, Rotation()}, {1, Rotation()}};
  const std::map<std::size_t, Rotation> est{{0, Rotation()}, {5, Rotation()}, {6, Rotation()}};
  auto [code, msg] = failure_of([&] { attitude_errors(est, truth); });
  EXPECT_EQ(code, ErrorCode::kIndexMismatch);
  EXPECT_NE(msg.find("5"), std::string::npos);
  EXPECT_NE(msg.find("6"), std::string::npos);
}

TEST(Evaluate, BucketsFollowTableFormat) {
  const std::vector<double> errs{0.1, 0.5, 0.99, 1.0, 5.0, 9.99, 10.0, 45.0};
  const ErrorBuckets b = bucket_errors(errs);
  EXPECT_EQ(b.below_1, 3u);
  EXPECT_EQ(b.below_10, 3u);
  EXPECT_EQ(b.at_least_10, 2u);
}

TEST(Evaluate, RelativeErrorsUseFrameIToFrameJConvention) {
  std::mt19937_64 rng(135);
  const std::map<std::size_t, Rotation> truth{{0, random_rotation(rng)}, {1, random_rotation(rng)}};
  RelativeRotation rr;
  rr.j = 0;
  rr.i = 1;
  rr.rotation = truth.at(0) * truth.at(1).inverse();
  const ErrorSeries s = relative_errors(std::vector<RelativeRotation>{rr}, truth);
  EXPECT_LE(s.rmse, 1e-9);
}

TEST(Evaluate, AlignmentRemovesGlobalRotation) {
  std::mt19937_64 rng(136);
  const Rotation g = random_rotation(rng);
  std::map<std::size_t, Rotation> truth;
  std::map<std::size_t, Rotation> est;
  for (std::size_t f = 0; f < 20; ++f) {
    truth[f] = random_rotation(rng);
    est[f] = truth[f] * g;
  }
  EXPECT_LE(attitude_errors(align_to_truth(est, truth), truth).max, 1e-9);
}

TEST(Pipeline, OneSecondGivesTwentyFiveWindows) {
  const PipelineConfig cfg = short_run(1.0, 1);
  const SimConfig sim = simulation_config(cfg);
  EXPECT_EQ(window_midpoints(sim.duration_s, sim.frame_interval_ms).size(), 25u);
  const SimResult r = simulate_events(resolve_catalog(cfg), sim);
  EXPECT_EQ(r.trajectory.attitudes.size(), 25u);
}

TEST(Pipeline, DefaultRunHas1125Windows) {
  const SimConfig sim = simulation_config(PipelineConfig{});
  EXPECT_EQ(window_midpoints(sim.duration_s, sim.frame_interval_ms).size(), 1125u);
}

TEST(Pipeline, ZeroEventStreamFailsAtStarIdentification) {
  const PipelineConfig cfg = short_run(2.0, 1);
  TrackResult partial;
  try {
    run_tracking({}, resolve_catalog(cfg), cfg, &partial);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "star_id");
    EXPECT_EQ(e.code(), ErrorCode::kAnchorFree);
  }
  EXPECT_EQ(partial.frame_count, 50u);
  EXPECT_TRUE(partial.selected.empty());
  EXPECT_FALSE(partial.chained.has_value());
  EXPECT_FALSE(partial.averaged.has_value());

  const fs::path dir = scratch("zero_events");
  write_events(dir / "events.csv", {});
  write_catalog(resolve_catalog(cfg), dir / "catalog.csv");
  EXPECT_THROW(cmd_track(dir / "events.csv", dir / "catalog.csv", cfg, dir / "track"), StageError);
  EXPECT_FALSE(fs::exists(dir / "track" / "chained.csv"));
  EXPECT_TRUE(fs::exists(dir / "track" / "config.txt"));
}

TEST(Pipeline, CalibrateNeedsFourHomographyPairs) {
  const fs::path dir = scratch("calib");
  write_text(dir / "planes.csv", "u,v,u2,v2\n0,0,1,1\n1,0,2,1\n0,1,1,2\n");
  write_text(dir / "rays.csv", "u,v,X,Y,Z\n");
  write_text(dir / "kev.csv", "300,300,120,90\n");
  EXPECT_EQ(failure_of([&] { cmd_calibrate(dir / "planes.csv", dir / "rays.csv", dir / "kev.csv", dir / "out"); }).first,
            ErrorCode::kInvalidArgument);
}

TEST(Pipeline, ShortSequenceEndToEnd) {
  const PipelineConfig cfg = short_run(10.0, 5);
  const fs::path dir = scratch("e2e");
  const SimulateOutputs sim = cmd_simulate(cfg, dir / "sim");
  const TrackResult tr = cmd_track(sim.events, sim.catalog, cfg, dir / "track");
  ASSERT_TRUE(tr.bundle.has_value());
  const EvaluationReport rep = cmd_evaluate(dir / "track", sim.ground_truth, dir / "eval");
  ASSERT_TRUE(rep.bundle && rep.averaged && rep.chained && rep.relative);
  EXPECT_LE(rep.bundle->rmse, 1.0);
  EXPECT_LE(rep.relative->rmse, 0.35);
  EXPECT_LT(rep.averaged->rmse, rep.chained->rmse);

  // The report's statistics are recomputable from the per-frame CSV.
  std::ifstream in(dir / "eval" / "per_frame.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "frame,chained_deg,averaged_deg,bundle_deg");
  std::array<double, 3> sum_sq{};
  std::array<std::size_t, 3> count{};
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    for (int c = 0; c < 3; ++c) {
      std::getline(ss, cell, ',');
      if (cell.empty()) continue;
      const double e = std::stod(cell);
      sum_sq[c] += e * e;
      ++count[c];
    }
  }
  EXPECT_NEAR(std::sqrt(sum_sq[0] / count[0]), rep.chained->rmse, 1e-12);
  EXPECT_NEAR(std::sqrt(sum_sq[1] / count[1]), rep.averaged->rmse, 1e-12);
  EXPECT_NEAR(std::sqrt(sum_sq[2] / count[2]), rep.bundle->rmse, 1e-12);

  const auto json = nlohmann::json::parse(slurp(dir / "eval" / "report.json"));
  EXPECT_NEAR(json["bundle"]["rmse_deg"].get<double>(), rep.bundle->rmse, 1e-15);
  EXPECT_TRUE(fs::exists(dir / "track" / "runtimes.json"));
}

TEST(Pipeline, SparseAnchorsStillMeetAccuracy) {
  // A high APC threshold keeps only a handful of absolute rotations, the
  // regime where averaging must carry the relative chain between anchors.
  PipelineConfig cfg = short_run(15.0, 6);
  const StarCatalog catalog = resolve_catalog(cfg);
  const SimResult sim = simulate_events(catalog, simulation_config(cfg));
  const TrackResult all = run_tracking(sim.events, catalog, cfg);
  std::vector<std::size_t> apcs;
  {
    const auto seq = build_event_images(sim.events, 240, 180, 0, 15000000, 40.0);
    for (const auto& img : seq.images) apcs.push_back(apc(mean_filter(img), cfg.eps1));
  }
  std::sort(apcs.begin(), apcs.end());
  cfg.eps2 = static_cast<double>(apcs[apcs.size() - 8]);
  const TrackResult sparse = run_tracking(sim.events, catalog, cfg);
  ASSERT_LE(sparse.selected.size(), 12u);
  ASSERT_GE(sparse.absolute.rotations.size(), 1u);
  std::map<std::size_t, Rotation> truth;
  for (std::size_t f = 0; f < sim.trajectory.attitudes.size(); ++f) truth[f] = sim.trajectory.attitudes[f];
  const EvaluationReport rep = evaluate_tracking(sparse, truth);
  ASSERT_TRUE(rep.bundle && rep.averaged && rep.chained);
  EXPECT_LE(rep.bundle->rmse, 1.0);
  EXPECT_LT(rep.averaged->rmse, 1.0);
  EXPECT_LT(all.selected.size(), 400u);
  EXPECT_GT(all.selected.size(), sparse.selected.size());
}

TEST(Pipeline, FixedSeedGivesIdenticalFiles) {
  const PipelineConfig cfg = short_run(4.0, 8);
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  for (const fs::path& dir : {a, b}) {
    const SimulateOutputs sim = cmd_simulate(cfg, dir / "sim");
    cmd_track(sim.events, sim.catalog, cfg, dir / "track");
    cmd_evaluate(dir / "track", sim.ground_truth, dir / "eval");
  }
  for (const char* f : {"sim/events.csv", "sim/ground_truth.csv", "sim/catalog.csv", "track/absolute.csv",
                        "track/relative.csv", "track/chained.csv", "track/averaged.csv", "track/bundle.csv",
                        "track/tracks.csv", "eval/report.json", "eval/per_frame.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_FALSE(slurp(a / f).empty()) << f;
  }
}
