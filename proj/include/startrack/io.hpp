#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "startrack/averaging.hpp"
#include "startrack/bundle.hpp"
#include "startrack/calibration.hpp"
#include "startrack/frames.hpp"
#include "startrack/registration.hpp"
#include "startrack/simulator.hpp"
#include "startrack/star_id.hpp"

namespace startrack {

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// Shortest decimal form that round-trips a double.
std::string format_double(double v);

/// Header `t_us,x,y,p`, p = 1 for positive events.
void write_events(const std::filesystem::path& path, std::span<const Event> events);
std::vector<Event> read_events(const std::filesystem::path& path);

struct AttitudeFile {
  std::map<std::size_t, Rotation> attitudes;
  Metadata metadata;  // `# key = value` lines
};

/// Header `frame_index,qw,qx,qy,qz`, preceded by metadata comment lines.
void write_attitudes(const std::filesystem::path& path, const std::map<std::size_t, Rotation>& attitudes,
                     const Metadata& metadata = {});
void write_attitudes(const std::filesystem::path& path, std::span<const Rotation> attitudes,
                     const Metadata& metadata = {});
AttitudeFile read_attitudes(const std::filesystem::path& path);

void write_relative_rotations(const std::filesystem::path& path, std::span<const RelativeRotation> rel);
/// Reads the relative-rotation dump; inlier lists are not stored in the file.
std::vector<RelativeRotation> read_relative_rotations(const std::filesystem::path& path);
void write_tracks(const std::filesystem::path& path, std::span<const StarTrack> tracks);
void write_star_directions(const std::filesystem::path& path, const BAProblem& problem);
void write_identification_report(const std::filesystem::path& path, std::span<const IdentificationRecord> report);
void write_point_sets(const std::filesystem::path& path, std::span<const PointSet> sets);
void write_convergence_log(const std::filesystem::path& path, std::span<const ConvergenceEntry> log);
void write_ba_log(const std::filesystem::path& path, std::span<const BAIteration> log);

/// Rows `u,v,u',v'`; an optional header line is skipped.
std::vector<PlanePair> read_plane_pairs(const std::filesystem::path& path);
/// Rows `u,v,X,Y,Z`; an optional header line is skipped.
std::vector<RayPair> read_ray_pairs(const std::filesystem::path& path);
/// A single row `fx,fy,cx,cy[,skew]`.
Intrinsics read_intrinsics(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace startrack
