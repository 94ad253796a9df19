#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "startrack/averaging.hpp"
#include "startrack/bundle.hpp"
#include "startrack/catalog.hpp"
#include "startrack/frames.hpp"
#include "startrack/registration.hpp"
#include "startrack/simulator.hpp"
#include "startrack/star_id.hpp"

namespace startrack {

struct PipelineConfig {
  SimConfig sim;
  CatalogGenConfig catalog_gen;
  std::string catalog_path;        // empty: a synthetic catalog is generated

  double integration_ms = 40.0;
  double eps1 = 2.0;
  double eps2 = 50.0;
  PointMode point_mode = PointMode::kCentroids;

  IndexConfig index;
  IdentifyConfig identify;
  RegistrationConfig registration;
  double track_gate_px = 1.0;      // consecutive-frame association gate for tracks
  double alpha = 1.0;
  AveragingConfig averaging;
  BAConfig bundle;

  bool write_images = false;       // PGM dump of every event image

  /// Throws kInvalidConfig naming the offending key.
  void validate() const;
};

/// Flat `section.key = value` lines; `#` starts a comment. Unknown keys and
/// malformed values raise kInvalidConfig with the line number.
PipelineConfig parse_config(std::istream& in, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Every key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg);
std::string format_config(const PipelineConfig& cfg);

}  // namespace startrack
