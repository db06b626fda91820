#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "simba/ablation.hpp"
#include "simba/stats.hpp"
#include "simba/train.hpp"

namespace simba {

// CSV writers. All throw IoError.
void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_bias_csv(const EvalReport& report, const std::filesystem::path& path);
void write_bias_summary_csv(const BiasFit& fit, const std::filesystem::path& path);
void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path);
void write_ablation_medians_csv(const AblationResult& result, const std::filesystem::path& path);

struct BiasPoints {
  std::vector<std::string> ids;
  std::vector<double> relative_age;
  std::vector<double> abs_error;
};

/// Reads any CSV whose header names `relative_age` and `abs_error` columns
/// (report.csv or bias.csv). Throws IoError, ParseError.
BiasPoints read_bias_points(const std::filesystem::path& path);

/// Scatter of (relative age, absolute error) with the fitted line as a single polyline.
std::string render_bias_svg(const BiasPoints& points, const BiasFit& fit);
void write_text_file(const std::string& text, const std::filesystem::path& path);

}  // namespace simba
