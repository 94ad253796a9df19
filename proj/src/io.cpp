#include "startrack/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace startrack {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return in;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t\r");
    const auto e = item.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
T parse_field(const std::string& s, const std::filesystem::path& path, int line) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": bad field '" + s + "'");
  }
  return v;
}

bool is_header(const std::string& line) {
  for (char c : line) {
    if (std::isalpha(static_cast<unsigned char>(c)) && c != 'e' && c != 'E') return true;
  }
  return false;
}

/// Numeric rows with exactly `width` fields; blank lines, comments and a header are skipped.
std::vector<std::vector<double>> read_table(const std::filesystem::path& path, std::size_t width) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (rows.empty() && is_header(line)) continue;
    const auto f = split(line);
    if (f.size() != width) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(number) + ": expected " +
                                         std::to_string(width) + " fields, got " + std::to_string(f.size()));
    }
    std::vector<double> row;
    for (const auto& s : f) row.push_back(parse_field<double>(s, path, number));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string quat_fields(const Rotation& r) {
  const auto q = r.quaternion();
  return format_double(q.w()) + "," + format_double(q.x()) + "," + format_double(q.y()) + "," + format_double(q.z());
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void write_events(const std::filesystem::path& path, std::span<const Event> events) {
  auto out = open_out(path);
  std::string buf = "t_us,x,y,p\n";
  buf.reserve(events.size() * 20 + 16);
  char line[64];
  for (const auto& e : events) {
    const int n = std::snprintf(line, sizeof(line), "%lld,%u,%u,%d\n", static_cast<long long>(e.t_us),
                                static_cast<unsigned>(e.x), static_cast<unsigned>(e.y), e.positive ? 1 : 0);
    buf.append(line, static_cast<std::size_t>(n));
  }
  out << buf;
}

std::vector<Event> read_events(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<Event> events;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (number == 1 && is_header(line)) continue;
    const auto f = split(line);
    if (f.size() != 4) throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(number) + ": expected t_us,x,y,p");
    Event e;
    e.t_us = parse_field<std::int64_t>(f[0], path, number);
    e.x = parse_field<std::uint16_t>(f[1], path, number);
    e.y = parse_field<std::uint16_t>(f[2], path, number);
    const int p = parse_field<int>(f[3], path, number);
    if (p != 0 && p != 1) throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(number) + ": polarity must be 0 or 1");
    e.positive = p == 1;
    events.push_back(e);
  }
  return events;
}

void write_attitudes(const std::filesystem::path& path, const std::map<std::size_t, Rotation>& attitudes,
                     const Metadata& metadata) {
  auto out = open_out(path);
  for (const auto& [k, v] : metadata) out << "# " << k << " = " << v << "\n";
  out << "frame_index,qw,qx,qy,qz\n";
  for (const auto& [i, r] : attitudes) out << i << "," << quat_fields(r) << "\n";
}

void write_attitudes(const std::filesystem::path& path, std::span<const Rotation> attitudes,
                     const Metadata& metadata) {
  std::map<std::size_t, Rotation> m;
  for (std::size_t i = 0; i < attitudes.size(); ++i) m.emplace(i, attitudes[i]);
  write_attitudes(path, m, metadata);
}

AttitudeFile read_attitudes(const std::filesystem::path& path) {
  auto in = open_in(path);
  AttitudeFile file;
  std::string line;
  int number = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        auto key = line.substr(1, eq - 1);
        auto val = line.substr(eq + 1);
        key.erase(0, key.find_first_not_of(' '));
        key.erase(key.find_last_not_of(' ') + 1);
        val.erase(0, val.find_first_not_of(' '));
        file.metadata.emplace_back(key, val);
      }
      continue;
    }
    if (!header_seen && is_header(line)) {
      header_seen = true;
      continue;
    }
    const auto f = split(line);
    if (f.size() != 5) throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(number) + ": expected 5 fields");
    const auto idx = parse_field<std::size_t>(f[0], path, number);
    const double w = parse_field<double>(f[1], path, number);
    const double x = parse_field<double>(f[2], path, number);
    const double y = parse_field<double>(f[3], path, number);
    const double z = parse_field<double>(f[4], path, number);
    if (!file.attitudes.emplace(idx, Rotation::from_quaternion(w, x, y, z)).second) {
      throw Error(ErrorCode::kDuplicateId, path.string() + ":" + std::to_string(number) + ": duplicate frame " + f[0]);
    }
  }
  return file;
}

void write_relative_rotations(const std::filesystem::path& path, std::span<const RelativeRotation> rel) {
  auto out = open_out(path);
  out << "j,i,qw,qx,qy,qz,residual,n_inliers\n";
  for (const auto& r : rel) {
    out << r.j << "," << r.i << "," << quat_fields(r.rotation) << "," << format_double(r.residual) << ","
        << r.inliers.size() << "\n";
  }
}

std::vector<RelativeRotation> read_relative_rotations(const std::filesystem::path& path) {
  std::vector<RelativeRotation> out;
  for (const auto& r : read_table(path, 8)) {
    RelativeRotation rel;
    rel.j = static_cast<std::size_t>(r[0]);
    rel.i = static_cast<std::size_t>(r[1]);
    rel.rotation = Rotation::from_quaternion(r[2], r[3], r[4], r[5]);
    rel.residual = r[6];
    out.push_back(std::move(rel));
  }
  return out;
}

void write_tracks(const std::filesystem::path& path, std::span<const StarTrack> tracks) {
  auto out = open_out(path);
  out << "track_id,frame,x,y\n";
  for (const auto& t : tracks) {
    for (const auto& o : t.observations) {
      out << t.id << "," << o.frame << "," << format_double(o.pixel.x()) << "," << format_double(o.pixel.y()) << "\n";
    }
  }
}

void write_star_directions(const std::filesystem::path& path, const BAProblem& problem) {
  auto out = open_out(path);
  out << "track_id,x,y,z\n";
  for (std::size_t s = 0; s < problem.directions.size(); ++s) {
    const auto& d = problem.directions[s];
    out << problem.track_ids[s] << "," << format_double(d.x()) << "," << format_double(d.y()) << ","
        << format_double(d.z()) << "\n";
  }
}

void write_identification_report(const std::filesystem::path& path, std::span<const IdentificationRecord> report) {
  auto out = open_out(path);
  out << "frame,n_points,n_matched,qw,qx,qy,qz,status\n";
  for (const auto& r : report) {
    out << r.frame << "," << r.n_points << "," << r.n_matched << ",";
    out << (r.attitude ? quat_fields(*r.attitude) : std::string(",,,"));
    out << "," << r.status << "\n";
  }
}

void write_point_sets(const std::filesystem::path& path, std::span<const PointSet> sets) {
  auto out = open_out(path);
  out << "frame,x,y\n";
  for (const auto& s : sets) {
    for (const auto& p : s.points) {
      out << s.frame << "," << format_double(p.pixel.x()) << "," << format_double(p.pixel.y()) << "\n";
    }
  }
}

void write_convergence_log(const std::filesystem::path& path, std::span<const ConvergenceEntry> log) {
  auto out = open_out(path);
  out << "iter,objective,max_update\n";
  for (const auto& e : log) {
    out << e.iteration << "," << format_double(e.objective) << "," << format_double(e.max_update) << "\n";
  }
}

void write_ba_log(const std::filesystem::path& path, std::span<const BAIteration> log) {
  auto out = open_out(path);
  out << "iter,cost,lambda,accepted\n";
  for (const auto& e : log) {
    out << e.iteration << "," << format_double(e.cost) << "," << format_double(e.lambda) << ","
        << (e.accepted ? 1 : 0) << "\n";
  }
}

std::vector<PlanePair> read_plane_pairs(const std::filesystem::path& path) {
  std::vector<PlanePair> out;
  for (const auto& r : read_table(path, 4)) out.push_back({Vec2(r[0], r[1]), Vec2(r[2], r[3])});
  return out;
}

std::vector<RayPair> read_ray_pairs(const std::filesystem::path& path) {
  std::vector<RayPair> out;
  for (const auto& r : read_table(path, 5)) out.push_back({Vec2(r[0], r[1]), Vec3(r[2], r[3], r[4])});
  return out;
}

Intrinsics read_intrinsics(const std::filesystem::path& path) {
  std::vector<std::vector<double>> rows;
  try {
    rows = read_table(path, 5);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kParse) throw;
    rows = read_table(path, 4);
    for (auto& r : rows) r.push_back(0.0);
  }
  if (rows.size() != 1) throw Error(ErrorCode::kParse, path.string() + ": expected one row fx,fy,cx,cy[,skew]");
  Intrinsics k{rows[0][0], rows[0][1], rows[0][2], rows[0][3], rows[0][4]};
  k.validate();
  return k;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace startrack
