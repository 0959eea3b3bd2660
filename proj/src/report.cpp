#include "contexthoi/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace contexthoi {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

Series extract_series(const std::vector<nlohmann::json>& records, const std::string& kind,
                      const std::string& x_key, const std::string& key) {
  Series s{key, {}, {}};
  for (const auto& r : records) {
    if (r.value("kind", "") != kind) continue;
    if (!r.contains(key) || !r[key].is_number() || !r.contains(x_key)) continue;
    s.x.push_back(r[x_key].get<double>());
    s.y.push_back(r[key].get<double>());
  }
  return s;
}

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title,
                           const std::string& x_label) {
  const double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << x_label << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(y)
      << "</text>\n";
    const double x = x0 + (x1 - x0) * i / 4.0;
    o << "<text x=\"" << px(x) << "\" y=\"" << H - B + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << fmt(x) << "</text>\n";
  }
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (!s.x.empty()) {
      o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i) o << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
      o << "\"/>\n";
    }
    const double ly = T + 16.0 * k + 10;
    o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

nlohmann::json write_report(const std::filesystem::path& metrics, const std::filesystem::path& out) {
  const auto records = read_metrics(metrics);
  std::filesystem::create_directories(out);
  auto chart = [&](const std::string& file, const std::string& kind, const std::string& x,
                   const std::vector<std::string>& keys, const std::string& title) {
    std::vector<Series> s;
    for (const auto& k : keys) s.push_back(extract_series(records, kind, x, k));
    std::ofstream f(out / file);
    f << line_chart_svg(s, title, x);
  };
  chart("losses.svg", "train", "step", {"loss", "l_hoi", "l_box", "l_giou", "l_obj", "l_int", "l_sc"},
        "Training loss");
  chart("constraints.svg", "train", "step", {"l_fc", "l_rc", "l_ic", "tau"}, "Spatial constraints");
  chart("eval.svg", "eval", "epoch", {"map_full", "map_rare", "map_non_rare", "verb_accuracy"}, "Evaluation");

  nlohmann::json summary;
  summary["records"] = records.size();
  nlohmann::json last_train, first_train, last_eval;
  for (const auto& r : records) {
    const std::string kind = r.value("kind", "");
    if (kind == "train") {
      if (first_train.is_null()) first_train = r;
      last_train = r;
    } else if (kind == "eval") {
      last_eval = r;
    }
  }
  summary["first_train"] = first_train;
  summary["last_train"] = last_train;
  summary["last_eval"] = last_eval;
  std::ofstream f(out / "summary.json");
  f << summary.dump(2) << '\n';
  return summary;
}

}  // namespace contexthoi
