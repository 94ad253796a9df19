#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "startrack/config.hpp"
#include "startrack/pipeline.hpp"

namespace fs = std::filesystem;
using namespace startrack;

namespace {

PipelineConfig make_config(const std::string& path, std::optional<std::uint64_t> seed) {
  PipelineConfig cfg = path.empty() ? PipelineConfig{} : load_config(path);
  if (seed) cfg.sim.seed = *seed;
  cfg.validate();
  return cfg;
}

void print_series(const char* name, const std::optional<ErrorSeries>& s) {
  if (!s) {
    std::cout << name << ": unavailable\n";
    return;
  }
  std::cout << name << ": rmse " << s->rmse << " deg, sd " << s->sd << " deg over " << s->errors_deg.size()
            << " frames\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera star tracking: simulation, attitude estimation and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  auto* sim = app.add_subcommand("simulate", "Synthesize an event stream and ground-truth attitudes");
  sim->add_option("--config", config_path, "Key-value configuration file");
  sim->add_option("--seed", seed, "Override sim.seed");
  sim->add_option("--out", out_dir, "Output directory")->required();

  std::string events_path;
  std::string catalog_path;
  auto* track = app.add_subcommand("track", "Estimate attitudes from an event stream");
  track->add_option("--events", events_path, "Event stream (t_us,x,y,p)")->required()->check(CLI::ExistingFile);
  track->add_option("--catalog", catalog_path, "Star catalog (id,ra_deg,dec_deg,mag)")
      ->required()
      ->check(CLI::ExistingFile);
  track->add_option("--config", config_path, "Key-value configuration file");
  track->add_option("--seed", seed, "Override sim.seed");
  track->add_option("--out", out_dir, "Output directory")->required();

  std::string track_dir;
  std::string truth_path;
  auto* eval = app.add_subcommand("evaluate", "Score attitude estimates against ground truth");
  eval->add_option("--track-dir", track_dir, "Output directory of the track command")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--ground-truth", truth_path, "Ground-truth attitude file")->required()->check(CLI::ExistingFile);
  eval->add_option("--config", config_path, "Unused; accepted for symmetry");
  eval->add_option("--seed", seed, "Unused; accepted for symmetry");
  eval->add_option("--out", out_dir, "Output directory")->required();

  std::string plane_path;
  std::string ray_path;
  std::string kev_path;
  auto* calib = app.add_subcommand("calibrate", "Calibrate the virtual telescope");
  calib->add_option("--screen-pairs", plane_path, "Screen to sensor pairs (u,v,u',v')")
      ->required()
      ->check(CLI::ExistingFile);
  calib->add_option("--sky-pairs", ray_path, "Screen pixel to sky direction pairs (u,v,X,Y,Z)")
      ->required()
      ->check(CLI::ExistingFile);
  calib->add_option("--event-intrinsics", kev_path, "Event camera intrinsics (fx,fy,cx,cy[,skew])")
      ->required()
      ->check(CLI::ExistingFile);
  calib->add_option("--config", config_path, "Unused; accepted for symmetry");
  calib->add_option("--seed", seed, "Unused; accepted for symmetry");
  calib->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const PipelineConfig cfg = make_config(config_path, seed);
      const auto paths = cmd_simulate(cfg, out_dir);
      std::cout << "events: " << paths.events.string() << "\nground truth: " << paths.ground_truth.string()
                << "\ncatalog: " << paths.catalog.string() << "\n";
    } else if (*track) {
      const PipelineConfig cfg = make_config(config_path, seed);
      const TrackResult r = cmd_track(events_path, catalog_path, cfg, out_dir);
      std::cout << "frames: " << r.frame_count << ", selected: " << r.selected.size()
                << ", identified: " << r.absolute.rotations.size() << ", relative: " << r.relative.size()
                << ", tracks: " << r.tracks.size() << "\n";
      if (!r.chained_error.empty()) std::cout << "chaining baseline skipped: " << r.chained_error << "\n";
      std::cout << "runtime: images " << r.times.image_generation_s << " s, measurements "
                << r.times.measurement_extraction_s << " s, optimization " << r.times.optimization_s << " s\n";
    } else if (*eval) {
      const EvaluationReport rep = cmd_evaluate(track_dir, truth_path, out_dir);
      print_series("chained", rep.chained);
      print_series("averaged", rep.averaged);
      print_series("bundle", rep.bundle);
      print_series("relative", rep.relative);
      print_series("absolute", rep.absolute);
    } else if (*calib) {
      const CalibSolution s = cmd_calibrate(plane_path, ray_path, kev_path, out_dir);
      std::cout << format_calibration(s);
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == ErrorCode::kInvalidConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
