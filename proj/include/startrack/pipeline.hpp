#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "startrack/averaging.hpp"
#include "startrack/bundle.hpp"
#include "startrack/calibration.hpp"
#include "startrack/config.hpp"
#include "startrack/evaluation.hpp"
#include "startrack/frames.hpp"
#include "startrack/io.hpp"
#include "startrack/registration.hpp"
#include "startrack/simulator.hpp"
#include "startrack/star_id.hpp"

namespace startrack {

/// Error raised by a pipeline stage; what() is prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), stage + ": " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Catalog from cfg.catalog_path, or the synthetic one when the path is empty.
StarCatalog resolve_catalog(const PipelineConfig& cfg);

/// The simulator configuration used by the pipeline (window length synchronized).
SimConfig simulation_config(const PipelineConfig& cfg);

/// Metadata block describing a simulation: config echo plus resolved motion.
Metadata simulation_metadata(const PipelineConfig& cfg, const SimResult& sim);

struct StageTimes {
  double image_generation_s = 0.0;
  double measurement_extraction_s = 0.0;
  double optimization_s = 0.0;
};

struct TrackResult {
  std::size_t frame_count = 0;
  std::vector<std::size_t> selected;
  std::vector<PointSet> point_sets;
  AbsoluteRotations absolute;
  std::vector<RelativeRotation> relative;
  std::vector<StarTrack> tracks;
  std::optional<std::vector<Rotation>> chained;
  std::string chained_error;              // set when the chaining baseline could not run
  std::optional<AveragingResult> averaged;
  std::optional<BAResult> bundle;
  StageTimes times;
};

/// Runs frames, star identification, registration, averaging and bundle
/// adjustment in order. A failing stage raises StageError; `partial`, when
/// given, receives everything computed before the failure.
TrackResult run_tracking(std::span<const Event> events, const StarCatalog& catalog, const PipelineConfig& cfg,
                         TrackResult* partial = nullptr);

/// Scores a tracking result against ground truth attitudes.
EvaluationReport evaluate_tracking(const TrackResult& result, const std::map<std::size_t, Rotation>& truth);

struct SimulateOutputs {
  std::filesystem::path events;
  std::filesystem::path ground_truth;
  std::filesystem::path catalog;
};

/// Writes events.csv, ground_truth.csv, config.txt and, for a synthetic
/// catalog, catalog.csv into `out`.
SimulateOutputs cmd_simulate(const PipelineConfig& cfg, const std::filesystem::path& out);

/// Reads events and catalog, runs the pipeline and writes attitude files for
/// the chained, averaged and bundle-adjusted estimates plus intermediate dumps.
TrackResult cmd_track(const std::filesystem::path& events, const std::filesystem::path& catalog,
                      const PipelineConfig& cfg, const std::filesystem::path& out);

/// Reads the attitude files produced by cmd_track from `track_dir` and writes
/// report.json and per_frame.csv into `out`.
EvaluationReport cmd_evaluate(const std::filesystem::path& track_dir, const std::filesystem::path& ground_truth,
                              const std::filesystem::path& out);

/// Writes calibration.txt into `out`.
CalibSolution cmd_calibrate(const std::filesystem::path& plane_pairs, const std::filesystem::path& ray_pairs,
                            const std::filesystem::path& event_intrinsics, const std::filesystem::path& out);

}  // namespace startrack
