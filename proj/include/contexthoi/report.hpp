#pragma once

// Plots and a summary rendered from a metrics stream (one JSON object per
// line, as written by the trainer).

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace contexthoi {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);

// Series of `key` against `x_key` over records whose "kind" is `kind`;
// records lacking a numeric value are skipped.
Series extract_series(const std::vector<nlohmann::json>& records, const std::string& kind,
                      const std::string& x_key, const std::string& key);

// Minimal standalone SVG line chart.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title,
                           const std::string& x_label);

// Writes losses.svg, constraints.svg, eval.svg and summary.json into `out`.
nlohmann::json write_report(const std::filesystem::path& metrics, const std::filesystem::path& out);

}  // namespace contexthoi
