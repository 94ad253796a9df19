#include "startrack/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace startrack {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("expected a number");
  return v;
}

template <typename Int>
Int to_int(const std::string& s) {
  Int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("expected an integer");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true or false");
}

std::vector<double> to_list(const std::string& s, std::size_t n) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  if (out.size() != n) throw std::invalid_argument("expected " + std::to_string(n) + " comma-separated numbers");
  return out;
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

Field num(const std::string& key, double& ref) {
  return {key, [&ref] { return fmt(ref); }, [&ref](const std::string& v) { ref = to_double(v); }};
}

template <typename Int>
Field integer(const std::string& key, Int& ref) {
  return {key, [&ref] { return std::to_string(ref); }, [&ref](const std::string& v) { ref = to_int<Int>(v); }};
}

Field boolean(const std::string& key, bool& ref) {
  return {key, [&ref] { return ref ? "true" : "false"; }, [&ref](const std::string& v) { ref = to_bool(v); }};
}

std::vector<Field> fields(PipelineConfig& c) {
  std::vector<Field> f;
  auto& s = c.sim;
  f.push_back(integer("sim.width", s.width));
  f.push_back(integer("sim.height", s.height));
  f.push_back(num("sim.fov_deg", s.fov_deg));
  f.push_back({"sim.intrinsics",
               [&s] {
                 if (!s.intrinsics) return std::string("auto");
                 const auto& k = *s.intrinsics;
                 return fmt(k.fx) + "," + fmt(k.fy) + "," + fmt(k.cx) + "," + fmt(k.cy) + "," + fmt(k.skew);
               },
               [&s](const std::string& v) {
                 if (v == "auto") {
                   s.intrinsics.reset();
                   return;
                 }
                 const auto l = to_list(v, 5);
                 s.intrinsics = Intrinsics{l[0], l[1], l[2], l[3], l[4]};
               }});
  f.push_back(num("sim.duration_s", s.duration_s));
  f.push_back(num("sim.angular_speed_deg_s", s.angular_speed_deg_s));
  f.push_back({"sim.axis",
               [&s] {
                 if (!s.axis) return std::string("random");
                 return fmt(s.axis->x()) + "," + fmt(s.axis->y()) + "," + fmt(s.axis->z());
               },
               [&s](const std::string& v) {
                 if (v == "random") {
                   s.axis.reset();
                   return;
                 }
                 const auto l = to_list(v, 3);
                 s.axis = Vec3(l[0], l[1], l[2]);
               }});
  f.push_back({"sim.initial_attitude",
               [&s] {
                 if (!s.initial_attitude) return std::string("random");
                 const auto q = s.initial_attitude->quaternion();
                 return fmt(q.w()) + "," + fmt(q.x()) + "," + fmt(q.y()) + "," + fmt(q.z());
               },
               [&s](const std::string& v) {
                 if (v == "random") {
                   s.initial_attitude.reset();
                   return;
                 }
                 const auto l = to_list(v, 4);
                 s.initial_attitude = Rotation::from_quaternion(l[0], l[1], l[2], l[3]);
               }});
  f.push_back(num("sim.mag_limit", s.mag_limit));
  f.push_back(num("sim.star_rate", s.star_rate.rho0));
  f.push_back(num("sim.star_rate_mag_ref", s.star_rate.mag_ref));
  f.push_back(num("sim.star_rate_speed_ref_px_s", s.star_rate.speed_ref_px_s));
  f.push_back(num("sim.noise_rate", s.noise_rate));
  f.push_back(integer("sim.hot_pixel_count", s.hot_pixel_count));
  f.push_back(num("sim.hot_pixel_rate", s.hot_pixel_rate));
  f.push_back(num("sim.jitter_px", s.jitter_px));
  f.push_back(num("sim.substep_ms", s.substep_ms));
  f.push_back(integer("sim.seed", s.seed));
  f.push_back(integer("sim.threads", s.threads));

  f.push_back({"catalog.path", [&c] { return c.catalog_path; }, [&c](const std::string& v) { c.catalog_path = v; }});
  f.push_back(integer("catalog.count", c.catalog_gen.count));
  f.push_back(num("catalog.mag_min", c.catalog_gen.mag_min));
  f.push_back(num("catalog.mag_max", c.catalog_gen.mag_max));
  f.push_back(num("catalog.mag_slope", c.catalog_gen.mag_slope));
  f.push_back(integer("catalog.seed", c.catalog_gen.seed));

  f.push_back(num("frames.integration_ms", c.integration_ms));
  f.push_back(num("frames.eps1", c.eps1));
  f.push_back(num("frames.eps2", c.eps2));
  f.push_back({"frames.point_mode",
               [&c] { return std::string(c.point_mode == PointMode::kCentroids ? "centroids" : "pixels"); },
               [&c](const std::string& v) {
                 if (v == "centroids") {
                   c.point_mode = PointMode::kCentroids;
                 } else if (v == "pixels") {
                   c.point_mode = PointMode::kPixels;
                 } else {
                   throw std::invalid_argument("expected centroids or pixels");
                 }
               }});
  f.push_back(boolean("frames.write_images", c.write_images));

  f.push_back(num("star_id.index_fov_deg", c.index.fov_deg));
  f.push_back(num("star_id.index_mag_limit", c.index.mag_limit));
  f.push_back(num("star_id.quantization_deg", c.index.quantization_deg));
  f.push_back(integer("star_id.brightest_per_cone", c.index.brightest_per_cone));
  f.push_back(num("star_id.index_cone_deg", c.index.cone_radius_deg));
  f.push_back(num("star_id.r_verify_px", c.identify.r_verify_px));
  f.push_back(integer("star_id.min_inliers", c.identify.min_inliers));
  f.push_back(integer("star_id.brightest_points", c.identify.brightest_points));
  f.push_back(num("star_id.side_tolerance_deg", c.identify.side_tolerance_deg));
  f.push_back(integer("star_id.refine_rounds", c.identify.refine_rounds));
  f.push_back(num("star_id.max_false_alarm", c.identify.max_false_alarm));

  f.push_back(integer("registration.window", c.registration.window));
  f.push_back(num("registration.trim_fraction", c.registration.icp.trim_fraction));
  f.push_back(integer("registration.max_iterations", c.registration.icp.max_iterations));
  f.push_back(num("registration.tolerance_rad", c.registration.icp.tolerance_rad));
  f.push_back(num("registration.max_rms_rad", c.registration.max_rms_rad));
  f.push_back(num("registration.track_gate_px", c.track_gate_px));

  f.push_back(num("averaging.alpha", c.alpha));
  f.push_back(num("averaging.huber_delta", c.averaging.huber_delta));
  f.push_back(integer("averaging.max_iterations", c.averaging.max_iterations));
  f.push_back(num("averaging.tolerance_rad", c.averaging.tolerance_rad));

  f.push_back(integer("bundle.max_iterations", c.bundle.max_iterations));
  f.push_back(num("bundle.relative_tolerance", c.bundle.relative_tolerance));
  f.push_back(num("bundle.gradient_tolerance", c.bundle.gradient_tolerance));
  f.push_back(num("bundle.initial_lambda", c.bundle.initial_lambda));
  f.push_back({"bundle.gauge", [&c] { return to_string(c.bundle.gauge); },
               [&c](const std::string& v) { c.bundle.gauge = parse_gauge_mode(v); }});
  f.push_back({"bundle.weighting", [&c] { return to_string(c.bundle.weighting); },
               [&c](const std::string& v) { c.bundle.weighting = parse_observation_weighting(v); }});
  f.push_back(num("bundle.huber_k", c.bundle.huber_k));
  return f;
}

void require(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::kInvalidConfig, key + ": " + msg);
}

}  // namespace

void PipelineConfig::validate() const {
  sim.validate();
  require(integration_ms > 0, "frames.integration_ms", "must be > 0");
  require(eps1 > 0, "frames.eps1", "must be > 0");
  require(eps2 >= 0, "frames.eps2", "must be >= 0");
  require(index.fov_deg > 0 && index.fov_deg < 180, "star_id.index_fov_deg", "must be in (0, 180)");
  require(index.quantization_deg > 0, "star_id.quantization_deg", "must be > 0");
  require(index.brightest_per_cone >= 3, "star_id.brightest_per_cone", "must be >= 3");
  require(index.cone_radius_deg > 0 && index.cone_radius_deg < 180, "star_id.index_cone_deg", "must be in (0, 180)");
  require(identify.r_verify_px > 0, "star_id.r_verify_px", "must be > 0");
  require(identify.min_inliers >= 3, "star_id.min_inliers", "must be >= 3");
  require(identify.brightest_points >= 3, "star_id.brightest_points", "must be >= 3");
  require(identify.side_tolerance_deg > 0, "star_id.side_tolerance_deg", "must be > 0");
  require(identify.max_false_alarm > 0 && identify.max_false_alarm <= 1, "star_id.max_false_alarm",
          "must be in (0, 1]");
  require(registration.window >= 1, "registration.window", "must be >= 1");
  require(registration.icp.trim_fraction > 0 && registration.icp.trim_fraction <= 1, "registration.trim_fraction",
          "must be in (0, 1]");
  require(registration.icp.max_iterations >= 1, "registration.max_iterations", "must be >= 1");
  require(registration.max_rms_rad > 0, "registration.max_rms_rad", "must be > 0");
  require(track_gate_px > 0, "registration.track_gate_px", "must be > 0");
  require(alpha > 0, "averaging.alpha", "must be > 0");
  require(averaging.huber_delta > 0, "averaging.huber_delta", "must be > 0");
  require(averaging.max_iterations >= 1, "averaging.max_iterations", "must be >= 1");
  require(bundle.max_iterations >= 0, "bundle.max_iterations", "must be >= 0");
  require(bundle.initial_lambda > 0, "bundle.initial_lambda", "must be > 0");
  require(bundle.huber_k >= 0, "bundle.huber_k", "must be >= 0");
}

PipelineConfig parse_config(std::istream& in, PipelineConfig base) {
  auto table = fields(base);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(number);
    if (eq == std::string::npos) throw Error(ErrorCode::kInvalidConfig, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw Error(ErrorCode::kInvalidConfig, where + ": unknown key '" + key + "'");
    try {
      it->set(value);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kInvalidConfig, where + ": " + key + ": " + e.what() + ", got '" + value + "'");
    }
  }
  return base;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config file " + path.string());
  return parse_config(in, std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields(copy)) out.emplace_back(f.key, f.get());
  return out;
}

std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace startrack
