#include "startrack/frames.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace startrack {

EventImageSequence build_event_images(std::span<const Event> events, int width, int height,
                                      std::int64_t t_start_us, std::int64_t t_end_us,
                                      double integration_ms) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "event image dimensions must be positive");
  }
  const auto window_us = static_cast<std::int64_t>(std::llround(integration_ms * 1e3));
  if (window_us <= 0) throw Error(ErrorCode::kInvalidArgument, "integration time must be positive");
  if (t_end_us < t_start_us) throw Error(ErrorCode::kInvalidArgument, "t_end precedes t_start");

  const std::int64_t duration = t_end_us - t_start_us;
  const std::int64_t m = duration / window_us;
  EventImageSequence seq;
  seq.dropped_partial_window = (duration % window_us) != 0;
  seq.images.resize(static_cast<std::size_t>(m));
  const std::size_t npix = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  for (std::int64_t i = 0; i < m; ++i) {
    auto& img = seq.images[static_cast<std::size_t>(i)];
    img.width = width;
    img.height = height;
    img.t_start_us = t_start_us + i * window_us;
    img.t_end_us = img.t_start_us + window_us;
    img.counts.assign(npix, 0);
  }
  const std::int64_t covered_end = t_start_us + m * window_us;

  // Several events at one pixel and timestamp count once; sorted input puts
  // such duplicates next to each other in time.
  std::vector<std::int64_t> last_t(npix, std::numeric_limits<std::int64_t>::min());
  std::int64_t prev_t = std::numeric_limits<std::int64_t>::min();
  for (const Event& ev : events) {
    if (ev.t_us < prev_t) throw Error(ErrorCode::kInvalidArgument, "events are not sorted by time");
    prev_t = ev.t_us;
    if (ev.t_us < t_start_us || ev.t_us >= covered_end) continue;
    if (ev.x >= width || ev.y >= height) {
      throw Error(ErrorCode::kOutOfRange, "event at (" + std::to_string(ev.x) + ", " +
                                              std::to_string(ev.y) + ") outside the sensor");
    }
    const std::size_t p = static_cast<std::size_t>(ev.y) * width + ev.x;
    if (last_t[p] == ev.t_us) continue;
    last_t[p] = ev.t_us;
    const auto w = static_cast<std::size_t>((ev.t_us - t_start_us) / window_us);
    ++seq.images[w].counts[p];
  }
  return seq;
}

FilteredImage mean_filter(const EventImage& image) {
  const int w = image.width;
  const int h = image.height;
  FilteredImage out;
  out.width = w;
  out.height = h;
  out.values.assign(static_cast<std::size_t>(w) * h, 0.0);
  // Separable box sum with zero padding.
  std::vector<double> rows(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = image.at(x, y);
      if (x > 0) s += image.at(x - 1, y);
      if (x + 1 < w) s += image.at(x + 1, y);
      rows[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = rows[static_cast<std::size_t>(y) * w + x];
      if (y > 0) s += rows[static_cast<std::size_t>(y - 1) * w + x];
      if (y + 1 < h) s += rows[static_cast<std::size_t>(y + 1) * w + x];
      out.values[static_cast<std::size_t>(y) * w + x] = s / 9.0;
    }
  }
  return out;
}

std::size_t apc(const FilteredImage& filtered, double eps1) {
  return static_cast<std::size_t>(
      std::count_if(filtered.values.begin(), filtered.values.end(), [eps1](double v) { return v >= eps1; }));
}

std::vector<std::size_t> select_frames(std::span<const EventImage> images, double eps1, double eps2) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (static_cast<double>(apc(mean_filter(images[i]), eps1)) >= eps2) out.push_back(i);
  }
  return out;
}

PointSet extract_points(const FilteredImage& filtered, double eps1, const Intrinsics& k,
                        PointMode mode, std::size_t frame) {
  PointSet ps;
  ps.frame = frame;
  const int w = filtered.width;
  const int h = filtered.height;
  if (mode == PointMode::kPixels) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = filtered.at(x, y);
        if (v >= eps1) {
          const Vec2 px(x, y);
          ps.points.push_back({px, backproject(px, k), v});
        }
      }
    }
    return ps;
  }

  std::vector<char> visited(static_cast<std::size_t>(w) * h, 0);
  std::vector<std::pair<int, int>> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t i0 = static_cast<std::size_t>(y0) * w + x0;
      if (visited[i0] || filtered.values[i0] < eps1) continue;
      visited[i0] = 1;
      stack.clear();
      stack.emplace_back(x0, y0);
      double sw = 0.0;
      double sx = 0.0;
      double sy = 0.0;
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        const double v = filtered.at(x, y);
        sw += v;
        sx += v * x;
        sy += v * y;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx;
            const int ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
            if (visited[ni] || filtered.values[ni] < eps1) continue;
            visited[ni] = 1;
            stack.emplace_back(nx, ny);
          }
        }
      }
      const Vec2 c(sx / sw, sy / sw);
      ps.points.push_back({c, backproject(c, k), sw});
    }
  }
  return ps;
}

void write_pgm(const EventImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (std::uint32_t c : image.counts) {
    out.put(static_cast<char>(std::min<std::uint32_t>(c, 255)));
  }
}

}  // namespace startrack
