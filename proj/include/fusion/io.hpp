// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fusion/config.hpp"
#include "fusion/encoder.hpp"

namespace fusion {

// Shortest text that reads back to the same double ("%.17g"); nan and inf spelled out.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string str() const;
};

CsvTable samples_table(const std::vector<Vec>& samples, const std::vector<std::string>& group_labels = {},
                       const std::string& group_column = "");

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& doc);

// Scatter plot of (identity_score, style_score) points, one colour per series.
struct ScatterSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};
std::string scatter_svg(const std::vector<ScatterSeries>& series, const std::string& title);

Json world_to_json(const MixtureWorld& world);
MixtureWorld world_from_json(const Json& doc);

Json schedule_to_json(const DiffusionSchedule& schedule);
DiffusionSchedule schedule_from_json(const Json& doc);

// Checkpoints: layer widths plus the flat parameter array.
Json denoiser_to_json(const ToyDenoiser& denoiser);
ToyDenoiser denoiser_from_json(const Json& doc);
Json encoder_to_json(const ToyPromptNet& net, const Json& training_snapshot = Json::object());
ToyPromptNet encoder_from_json(const Json& doc);

Json record_to_json(const RunRecord& record, const std::string& mode);

}  // namespace fusion
