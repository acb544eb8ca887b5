#pragma once

// Emission of delta reports: tab-separated table, structured JSON, and
// self-contained SVG figures (category radar, per-action diverging bars,
// action x timepoint heatmap).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomdecomp/binary_io.hpp"
#include "tomdecomp/decomposition.hpp"
#include "tomdecomp/reference.hpp"

namespace tomdecomp {

enum class ReportFormat { table, structured, figure };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "table") return ReportFormat::table;
  if (s == "structured") return ReportFormat::structured;
  if (s == "figure") return ReportFormat::figure;
  throw Error("decomposition", "unknown report format \"" + std::string(s) + "\"");
}

namespace detail {

inline nlohmann::json cell_json(const DeltaCell& c) {
  return {{"delta", c.delta}, {"baseline", c.baseline}, {"steered", c.steered}, {"n", c.n}};
}

inline DeltaCell cell_from_json(const nlohmann::json& j) {
  return {j.at("delta").get<double>(), j.at("baseline").get<double>(), j.at("steered").get<double>(),
          j.at("n").get<std::size_t>()};
}

inline Timepoint parse_timepoint(std::string_view s) {
  for (auto t : kTimepoints)
    if (s == to_string(t)) return t;
  throw Error("decomposition", "unknown timepoint \"" + std::string(s) + "\"");
}

}  // namespace detail

/// Structured report. Fields:
///   format          "delta-report-v1"
///   threshold       presence threshold on probe confidence
///   window          [first, last] analysis layers, inclusive
///   n_scenarios     scenarios paired across conditions
///   timepoints      the three timepoint names, in column order
///   actions[]       {name, category, cells: {<timepoint>: {delta, baseline, steered, n}}}
///   categories[]    {name, n_actions, cells: {...}} means over member actions
///   top_movers      {<timepoint>: {increases: [{action, delta}], decreases: [...]}}
///   reference       full-scale reference values (informational)
inline nlohmann::json to_json(const DeltaReport& r) {
  nlohmann::json j;
  j["format"] = "delta-report-v1";
  j["threshold"] = r.threshold;
  j["window"] = {r.window.first, r.window.last};
  j["n_scenarios"] = r.n_scenarios;
  j["timepoints"] = nlohmann::json::array();
  for (auto t : kTimepoints) j["timepoints"].push_back(to_string(t));
  j["actions"] = nlohmann::json::array();
  for (const auto& a : r.actions) {
    nlohmann::json cells;
    for (std::size_t t = 0; t < 3; ++t) cells[to_string(kTimepoints[t])] = detail::cell_json(a.cells[t]);
    j["actions"].push_back({{"name", a.action}, {"category", to_string(a.category)}, {"cells", cells}});
  }
  j["categories"] = nlohmann::json::array();
  for (const auto& c : r.categories) {
    nlohmann::json cells;
    for (std::size_t t = 0; t < 3; ++t) cells[to_string(kTimepoints[t])] = detail::cell_json(c.cells[t]);
    j["categories"].push_back({{"name", to_string(c.category)}, {"n_actions", c.n_actions}, {"cells", cells}});
  }
  nlohmann::json movers;
  for (std::size_t t = 0; t < 3; ++t) {
    nlohmann::json up = nlohmann::json::array(), down = nlohmann::json::array();
    for (const auto& m : r.top_increases[t]) up.push_back({{"action", m.action}, {"delta", m.delta}});
    for (const auto& m : r.top_decreases[t]) down.push_back({{"action", m.action}, {"delta", m.delta}});
    movers[to_string(kTimepoints[t])] = {{"increases", up}, {"decreases", down}};
  }
  j["top_movers"] = movers;
  j["reference"] = reference_run::decomposition_metadata();
  return j;
}

inline DeltaReport delta_report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "delta-report-v1") throw Error("decomposition", "not a delta-report-v1 document");
    DeltaReport r;
    r.threshold = j.at("threshold").get<double>();
    r.window = {j.at("window").at(0).get<std::size_t>(), j.at("window").at(1).get<std::size_t>()};
    r.n_scenarios = j.at("n_scenarios").get<std::size_t>();
    for (const auto& a : j.at("actions")) {
      ActionDelta row;
      row.action = a.at("name").get<std::string>();
      const auto cat = parse_category(a.at("category").get<std::string>());
      if (!cat) throw Error("decomposition", "unknown category in report");
      row.category = *cat;
      for (std::size_t t = 0; t < 3; ++t) row.cells[t] = detail::cell_from_json(a.at("cells").at(to_string(kTimepoints[t])));
      r.actions.push_back(std::move(row));
    }
    for (const auto& c : j.at("categories")) {
      CategoryDelta row;
      const auto cat = parse_category(c.at("name").get<std::string>());
      if (!cat) throw Error("decomposition", "unknown category in report");
      row.category = *cat;
      row.n_actions = c.at("n_actions").get<std::size_t>();
      for (std::size_t t = 0; t < 3; ++t) row.cells[t] = detail::cell_from_json(c.at("cells").at(to_string(kTimepoints[t])));
      r.categories.push_back(row);
    }
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& m = j.at("top_movers").at(to_string(kTimepoints[t]));
      for (const auto& e : m.at("increases")) r.top_increases[t].push_back({e.at("action"), e.at("delta")});
      for (const auto& e : m.at("decreases")) r.top_decreases[t].push_back({e.at("action"), e.at("delta")});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error("decomposition", std::string("malformed delta report: ") + e.what());
  }
}

inline DeltaReport load_delta_report(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("decomposition", "missing report " + path.string());
  try {
    return delta_report_from_json(nlohmann::json::parse(binio::read_file(path, "decomposition")));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("decomposition", "malformed delta report " + path.string() + ": " + e.what());
  }
}

inline std::string delta_table(const DeltaReport& r) {
  std::ostringstream os;
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.4f", v);
    return std::string(buf);
  };
  os << "action\tcategory";
  for (auto t : kTimepoints) os << '\t' << to_string(t);
  os << '\n';
  for (const auto& a : r.actions) {
    os << a.action << '\t' << to_string(a.category);
    for (const auto& c : a.cells) os << '\t' << num(c.delta);
    os << '\n';
  }
  os << "\n# categories\ncategory\tn_actions";
  for (auto t : kTimepoints) os << '\t' << to_string(t);
  os << '\n';
  for (const auto& c : r.categories) {
    os << to_string(c.category) << '\t' << c.n_actions;
    for (const auto& cell : c.cells) os << '\t' << num(cell.delta);
    os << '\n';
  }
  os << "\n# window " << r.window.first << ".." << r.window.last << " threshold " << r.threshold << " scenarios "
     << r.n_scenarios << '\n';
  return os.str();
}

namespace svg {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
         "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline std::string text(double x, double y, const std::string& s, const char* anchor = "start") {
  return "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" text-anchor=\"" + anchor + "\">" + s + "</text>\n";
}

/// Green for increases, red for decreases, white at zero.
inline std::string diverging_color(double v, double max_abs) {
  const double f = max_abs > 0.0 ? std::clamp(std::abs(v) / max_abs, 0.0, 1.0) : 0.0;
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - f)));
  char buf[16];
  if (v >= 0.0)
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", fade, 255 - static_cast<int>(std::lround(80.0 * f)), fade);
  else
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", 255 - static_cast<int>(std::lround(40.0 * f)), fade, fade);
  return buf;
}

}  // namespace svg

/// Category radar: one axis per category, baseline and steered polygons of
/// mean layer count averaged over the three timepoints.
inline std::string radar_svg(const DeltaReport& r) {
  const double size = 420, cx = size / 2, cy = size / 2, radius = 150;
  const std::size_t n = r.categories.size();
  std::string out = svg::header(size, size);
  const double scale = static_cast<double>(std::max<std::size_t>(r.window.size(), 1));
  auto point = [&](std::size_t i, double value) {
    const double ang = -std::numbers::pi / 2 + 2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    const double rr = radius * value / scale;
    return std::pair{cx + rr * std::cos(ang), cy + rr * std::sin(ang)};
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = point(i, scale);
    out += "<line class=\"axis\" x1=\"" + svg::fmt(cx) + "\" y1=\"" + svg::fmt(cy) + "\" x2=\"" + svg::fmt(x) +
           "\" y2=\"" + svg::fmt(y) + "\" stroke=\"#999\"/>\n";
    const auto [lx, ly] = point(i, scale * 1.12);
    out += svg::text(lx, ly, to_string(r.categories[i].category), "middle");
  }
  for (const auto* which : {"baseline", "steered"}) {
    const bool base = std::string_view(which) == "baseline";
    std::string pts;
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (const auto& c : r.categories[i].cells) v += base ? c.baseline : c.steered;
      const auto [x, y] = point(i, v / 3.0);
      pts += svg::fmt(x) + "," + svg::fmt(y) + " ";
    }
    out += std::string("<polygon class=\"") + which + "\" points=\"" + pts + "\" fill=\"" +
           (base ? "#1f77b4" : "#d62728") + "\" fill-opacity=\"0.25\" stroke=\"" + (base ? "#1f77b4" : "#d62728") +
           "\"/>\n";
  }
  out += svg::text(10, 20, "mean layer count: baseline (blue) vs steered (red)");
  out += "</svg>\n";
  return out;
}

/// Diverging horizontal bars of per-action deltas, one panel per timepoint.
inline std::string bars_svg(const DeltaReport& r) {
  const double row_h = 14, label_w = 170, panel_w = 220, top = 40;
  const double width = label_w + 3 * (panel_w + 20), height = top + row_h * static_cast<double>(r.actions.size()) + 20;
  double max_abs = 0.0;
  for (const auto& a : r.actions)
    for (const auto& c : a.cells) max_abs = std::max(max_abs, std::abs(c.delta));
  if (max_abs == 0.0) max_abs = 1.0;
  std::string out = svg::header(width, height);
  for (std::size_t t = 0; t < 3; ++t) {
    const double x0 = label_w + static_cast<double>(t) * (panel_w + 20), mid = x0 + panel_w / 2;
    out += svg::text(mid, 20, to_string(kTimepoints[t]), "middle");
    out += "<line x1=\"" + svg::fmt(mid) + "\" y1=\"" + svg::fmt(top - 5) + "\" x2=\"" + svg::fmt(mid) + "\" y2=\"" +
           svg::fmt(height - 15) + "\" stroke=\"#333\"/>\n";
    for (std::size_t i = 0; i < r.actions.size(); ++i) {
      const double v = r.actions[i].cells[t].delta;
      const double len = (panel_w / 2 - 5) * std::abs(v) / max_abs;
      const double x = v >= 0 ? mid : mid - len;
      out += "<rect class=\"bar\" x=\"" + svg::fmt(x) + "\" y=\"" + svg::fmt(top + row_h * static_cast<double>(i)) +
             "\" width=\"" + svg::fmt(len) + "\" height=\"" + svg::fmt(row_h - 3) + "\" fill=\"" +
             (v >= 0 ? "#2ca02c" : "#d62728") + "\"/>\n";
    }
  }
  for (std::size_t i = 0; i < r.actions.size(); ++i)
    out += svg::text(label_w - 6, top + row_h * static_cast<double>(i) + row_h - 5, r.actions[i].action, "end");
  out += "</svg>\n";
  return out;
}

/// Heatmap: one row per action, one column per timepoint.
inline std::string heatmap_svg(const DeltaReport& r) {
  const double cell_w = 90, cell_h = 14, label_w = 170, top = 40;
  const double width = label_w + 3 * cell_w + 20, height = top + cell_h * static_cast<double>(r.actions.size()) + 20;
  double max_abs = 0.0;
  for (const auto& a : r.actions)
    for (const auto& c : a.cells) max_abs = std::max(max_abs, std::abs(c.delta));
  std::string out = svg::header(width, height);
  for (std::size_t t = 0; t < 3; ++t)
    out += svg::text(label_w + cell_w * (static_cast<double>(t) + 0.5), 30, to_string(kTimepoints[t]), "middle");
  for (std::size_t i = 0; i < r.actions.size(); ++i) {
    const double y = top + cell_h * static_cast<double>(i);
    out += svg::text(label_w - 6, y + cell_h - 3, r.actions[i].action, "end");
    for (std::size_t t = 0; t < 3; ++t) {
      const double v = r.actions[i].cells[t].delta;
      out += "<rect class=\"cell\" data-row=\"" + std::to_string(i) + "\" data-col=\"" + std::to_string(t) +
             "\" x=\"" + svg::fmt(label_w + cell_w * static_cast<double>(t)) + "\" y=\"" + svg::fmt(y) +
             "\" width=\"" + svg::fmt(cell_w) + "\" height=\"" + svg::fmt(cell_h) + "\" fill=\"" +
             svg::diverging_color(v, max_abs) + "\" stroke=\"#eee\"><title>" + r.actions[i].action + " " +
             to_string(kTimepoints[t]) + " " + svg::fmt(v) + "</title></rect>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

/// Writes the requested representation under `dir` and returns the paths.
inline std::vector<std::filesystem::path> emit_report(const DeltaReport& r, ReportFormat format,
                                                      const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& body) {
    binio::write_file(dir / name, body, "decomposition");
    written.push_back(dir / name);
  };
  switch (format) {
    case ReportFormat::table: put("deltas.tsv", delta_table(r)); break;
    case ReportFormat::structured: put("deltas.json", to_json(r).dump(2) + "\n"); break;
    case ReportFormat::figure:
      put("radar.svg", radar_svg(r));
      put("bars.svg", bars_svg(r));
      put("heatmap.svg", heatmap_svg(r));
      break;
  }
  return written;
}

}  // namespace tomdecomp
