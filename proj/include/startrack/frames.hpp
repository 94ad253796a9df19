#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "startrack/geometry.hpp"
#include "startrack/simulator.hpp"

namespace startrack {

/// Per-pixel count of distinct event timestamps in [t_start_us, t_end_us).
struct EventImage {
  int width = 0;
  int height = 0;
  std::int64_t t_start_us = 0;
  std::int64_t t_end_us = 0;
  std::vector<std::uint32_t> counts;  // row-major

  std::uint32_t at(int x, int y) const { return counts[static_cast<std::size_t>(y) * width + x]; }
};

struct FilteredImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct ImagePoint {
  Vec2 pixel;
  UnitVector3 ray;
  double weight = 0.0;  // summed filtered intensity of the point's support
};

struct PointSet {
  std::size_t frame = 0;
  std::vector<ImagePoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

enum class PointMode { kCentroids, kPixels };

struct EventImageSequence {
  std::vector<EventImage> images;
  bool dropped_partial_window = false;
};

/// Uniform, disjoint windows of `integration_ms` covering [t_start_us, t_end_us).
/// A trailing partial window is dropped and flagged. Events must be sorted by time.
EventImageSequence build_event_images(std::span<const Event> events, int width, int height,
                                      std::int64_t t_start_us, std::int64_t t_end_us,
                                      double integration_ms);

/// 3x3 box mean, zero padding, always normalized by 9.
FilteredImage mean_filter(const EventImage& image);

/// Number of pixels with filtered value >= eps1.
std::size_t apc(const FilteredImage& filtered, double eps1);

/// Ascending indices i with apc(mean_filter(I_i), eps1) >= eps2.
std::vector<std::size_t> select_frames(std::span<const EventImage> images, double eps1, double eps2);

/// Thresholds at eps1. In centroid mode every 8-connected component yields its
/// intensity-weighted centroid; in pixel mode every active pixel is a point.
PointSet extract_points(const FilteredImage& filtered, double eps1, const Intrinsics& k,
                        PointMode mode = PointMode::kCentroids, std::size_t frame = 0);

/// 8-bit binary PGM, counts clamped to 255.
void write_pgm(const EventImage& image, const std::filesystem::path& path);

}  // namespace startrack
