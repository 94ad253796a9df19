#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "startrack/geometry.hpp"
#include "startrack/registration.hpp"

namespace startrack {

struct ErrorSeries {
  std::vector<std::size_t> frames;
  std::vector<double> errors_deg;
  double rmse = 0.0;
  double sd = 0.0;    // population standard deviation
  double mean = 0.0;
  double max = 0.0;
};

/// Summary statistics of a list of errors.
ErrorSeries summarize(std::vector<std::size_t> frames, std::vector<double> errors_deg);

/// Per-frame angular error of every estimate against the truth. Throws
/// kIndexMismatch listing estimated frames that have no ground truth.
ErrorSeries attitude_errors(const std::map<std::size_t, Rotation>& estimates,
                            const std::map<std::size_t, Rotation>& truth);

/// Error of each R_{j,i} against R_j R_i^T from the truth; frames are the j indices.
ErrorSeries relative_errors(std::span<const RelativeRotation> rel, const std::map<std::size_t, Rotation>& truth);

/// Counts of errors below 1 deg, below 10 deg, and 10 deg or more.
struct ErrorBuckets {
  std::size_t below_1 = 0;
  std::size_t below_10 = 0;
  std::size_t at_least_10 = 0;
};
ErrorBuckets bucket_errors(std::span<const double> errors_deg);

/// Estimates right-multiplied by the rotation that best aligns them to the truth.
std::map<std::size_t, Rotation> align_to_truth(const std::map<std::size_t, Rotation>& estimates,
                                               const std::map<std::size_t, Rotation>& truth);

struct EvaluationReport {
  std::optional<ErrorSeries> chained;
  std::optional<ErrorSeries> averaged;
  std::optional<ErrorSeries> bundle;
  std::optional<ErrorSeries> bundle_aligned;
  std::optional<ErrorSeries> absolute;
  ErrorBuckets absolute_buckets;
  std::optional<ErrorSeries> relative;
  std::vector<std::pair<std::string, std::string>> metadata;

  std::string to_json() const;
};

/// Columns frame,chained,averaged,bundle; missing values are left empty.
void write_per_frame_csv(const std::filesystem::path& path, const EvaluationReport& report);

}  // namespace startrack
