#include "startrack/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "startrack/io.hpp"

namespace startrack {

ErrorSeries summarize(std::vector<std::size_t> frames, std::vector<double> errors_deg) {
  ErrorSeries s;
  s.frames = std::move(frames);
  s.errors_deg = std::move(errors_deg);
  const auto n = static_cast<double>(s.errors_deg.size());
  if (s.errors_deg.empty()) return s;
  double sum = 0.0;
  double sq = 0.0;
  for (double e : s.errors_deg) {
    sum += e;
    sq += e * e;
    s.max = std::max(s.max, e);
  }
  s.mean = sum / n;
  s.rmse = std::sqrt(sq / n);
  double var = 0.0;
  for (double e : s.errors_deg) var += (e - s.mean) * (e - s.mean);
  s.sd = std::sqrt(var / n);
  return s;
}

ErrorSeries attitude_errors(const std::map<std::size_t, Rotation>& estimates,
                            const std::map<std::size_t, Rotation>& truth) {
  std::vector<std::size_t> missing;
  std::vector<std::size_t> frames;
  std::vector<double> errors;
  for (const auto& [k, r] : estimates) {
    auto it = truth.find(k);
    if (it == truth.end()) {
      missing.push_back(k);
      continue;
    }
    frames.push_back(k);
    errors.push_back(angular_error_deg(r, it->second));
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? "," : "") + std::to_string(missing[i]);
    if (missing.size() > 20) list += ",...";
    throw Error(ErrorCode::kIndexMismatch,
                std::to_string(missing.size()) + " estimated frames have no ground truth: " + list);
  }
  return summarize(std::move(frames), std::move(errors));
}

ErrorSeries relative_errors(std::span<const RelativeRotation> rel, const std::map<std::size_t, Rotation>& truth) {
  std::vector<std::size_t> frames;
  std::vector<double> errors;
  for (const auto& r : rel) {
    auto a = truth.find(r.j);
    auto b = truth.find(r.i);
    if (a == truth.end() || b == truth.end()) {
      throw Error(ErrorCode::kIndexMismatch, "relative rotation <" + std::to_string(r.j) + "," +
                                                 std::to_string(r.i) + "> has no ground truth");
    }
    frames.push_back(r.j);
    errors.push_back(angular_error_deg(r.rotation, a->second * b->second.inverse()));
  }
  return summarize(std::move(frames), std::move(errors));
}

ErrorBuckets bucket_errors(std::span<const double> errors_deg) {
  ErrorBuckets b;
  for (double e : errors_deg) {
    if (e < 1.0) {
      ++b.below_1;
    } else if (e < 10.0) {
      ++b.below_10;
    } else {
      ++b.at_least_10;
    }
  }
  return b;
}

std::map<std::size_t, Rotation> align_to_truth(const std::map<std::size_t, Rotation>& estimates,
                                               const std::map<std::size_t, Rotation>& truth) {
  std::vector<Rotation> rel;
  for (const auto& [k, r] : estimates) {
    auto it = truth.find(k);
    if (it != truth.end()) rel.push_back(r.inverse() * it->second);
  }
  if (rel.empty()) return estimates;
  const Rotation qt = chordal_mean(rel);
  std::map<std::size_t, Rotation> out;
  for (const auto& [k, r] : estimates) out.emplace(k, r * qt);
  return out;
}

namespace {

nlohmann::ordered_json series_json(const ErrorSeries& s) {
  nlohmann::ordered_json j;
  j["count"] = s.errors_deg.size();
  j["rmse_deg"] = s.rmse;
  j["sd_deg"] = s.sd;
  j["mean_deg"] = s.mean;
  j["max_deg"] = s.max;
  return j;
}

}  // namespace

std::string EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  auto put = [&](const char* name, const std::optional<ErrorSeries>& s) {
    j[name] = s ? series_json(*s) : nlohmann::ordered_json(nullptr);
  };
  put("chained", chained);
  put("averaged", averaged);
  put("bundle", bundle);
  put("bundle_aligned", bundle_aligned);
  put("relative", relative);
  put("absolute", absolute);
  j["absolute_buckets"] = {{"below_1_deg", absolute_buckets.below_1},
                           {"below_10_deg", absolute_buckets.below_10},
                           {"at_least_10_deg", absolute_buckets.at_least_10}};
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metadata) meta[k] = v;
  j["metadata"] = meta;
  return j.dump(2) + "\n";
}

void write_per_frame_csv(const std::filesystem::path& path, const EvaluationReport& report) {
  std::set<std::size_t> frames;
  std::vector<std::map<std::size_t, double>> cols;
  for (const auto* s : {&report.chained, &report.averaged, &report.bundle}) {
    std::map<std::size_t, double> col;
    if (*s) {
      for (std::size_t k = 0; k < (*s)->frames.size(); ++k) {
        col[(*s)->frames[k]] = (*s)->errors_deg[k];
        frames.insert((*s)->frames[k]);
      }
    }
    cols.push_back(std::move(col));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "frame,chained_deg,averaged_deg,bundle_deg\n";
  for (std::size_t f : frames) {
    out << f;
    for (const auto& col : cols) {
      out << ",";
      auto it = col.find(f);
      if (it != col.end()) out << format_double(it->second);
    }
    out << "\n";
  }
}

}  // namespace startrack
