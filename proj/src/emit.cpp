#include "qsplit/emit.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace qsplit {

namespace fs = std::filesystem;

namespace {

std::string tsv_escape(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), '\t', ' ');
  return out;
}

// Axis columns (sweep order), then string tags, then sorted scalar names.
void write_scalars(const fs::path& path, const MeasureSeries& series, const Scenario& sc) {
  std::set<std::string> scalar_names, tag_names;
  for (const auto& r : series.records) {
    for (const auto& [k, v] : r.scalars) scalar_names.insert(k);
    for (const auto& [k, v] : r.tags) tag_names.insert(k);
  }
  std::ofstream out(path);
  out << "# scenario: " << series.scenario_id << "\n";
  out << "# one row per sweep point; times are dimensionless tau, log base per summary.json\n";
  out << "point";
  for (const auto& t : tag_names) out << "\t" << t;
  for (const auto& s : scalar_names) out << "\t" << s;
  out << "\n";
  for (std::size_t i = 0; i < series.records.size(); ++i) {
    const auto& r = series.records[i];
    out << i;
    for (const auto& t : tag_names) {
      auto it = r.tags.find(t);
      out << "\t" << (it == r.tags.end() ? "" : tsv_escape(it->second));
    }
    for (const auto& s : scalar_names) {
      auto it = r.scalars.find(s);
      out << "\t" << (it == r.scalars.end() ? "" : format_double(it->second));
    }
    out << "\n";
  }
  (void)sc;
}

void write_table(const fs::path& path, const MeasureSeries& series, const std::string& name) {
  std::ofstream out(path);
  out << "# scenario: " << series.scenario_id << ", table: " << name << "\n";
  bool header = false;
  for (std::size_t i = 0; i < series.records.size(); ++i) {
    const auto& r = series.records[i];
    auto it = r.tables.find(name);
    if (it == r.tables.end()) continue;
    if (!header) {
      out << "point";
      for (const auto& [k, v] : r.tags) out << "\t" << k;
      for (const auto& c : it->second.columns) out << "\t" << c;
      out << "\n";
      header = true;
    }
    for (const auto& row : it->second.rows) {
      out << i;
      for (const auto& [k, v] : r.tags) out << "\t" << tsv_escape(v);
      for (double v : row) out << "\t" << format_double(v);
      out << "\n";
    }
  }
}

struct SeriesLine {
  std::string label;
  std::vector<std::pair<double, double>> pts;
};

void write_svg_plot(const fs::path& path, const std::string& title, const std::string& x_name,
                    const std::string& y_name, const std::vector<SeriesLine>& lines) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& l : lines) {
    for (auto [x, y] : l.pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!(xmax > xmin)) xmax = xmin + 1;
  if (!(ymax > ymin)) ymax = ymin + 1;
  const double w = 640, h = 420, ml = 70, mr = 20, mt = 36, mb = 50;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << title << "</text>\n";
  out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  for (int k = 0; k <= 4; ++k) {
    double xv = xmin + (xmax - xmin) * k / 4.0;
    double yv = ymin + (ymax - ymin) * k / 4.0;
    out << "<text x='" << px(xv) << "' y='" << h - mb + 18
        << "' text-anchor='middle' font-size='11'>" << format_double(xv).substr(0, 8)
        << "</text>\n";
    out << "<text x='" << ml - 6 << "' y='" << py(yv) + 4
        << "' text-anchor='end' font-size='11'>" << format_double(yv).substr(0, 8)
        << "</text>\n";
  }
  out << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 12
      << "' text-anchor='middle' font-size='12'>" << x_name << "</text>\n";
  out << "<text x='16' y='" << (mt + h - mb) / 2
      << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
      << (mt + h - mb) / 2 << ")'>" << y_name << "</text>\n";
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const char* color = colors[li % 8];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (auto [x, y] : lines[li].pts) out << px(x) << "," << py(y) << " ";
    out << "'/>\n";
    out << "<text x='" << w - mr - 4 << "' y='" << mt + 14 * (li + 1)
        << "' text-anchor='end' font-size='11' fill='" << color << "'>" << lines[li].label
        << "</text>\n";
  }
  out << "</svg>\n";
}

void write_plots(const fs::path& dir, const MeasureSeries& series, const Scenario& sc) {
  if (sc.axis_names.empty() || series.records.empty()) return;
  // Primary numeric axis: first sweep axis with numeric values.
  std::string axis;
  for (const auto& a : sc.axis_names) {
    if (series.records.front().scalars.count(a)) {
      axis = a;
      break;
    }
  }
  if (axis.empty()) return;
  fs::create_directories(dir);
  std::set<std::string> scalar_names;
  for (const auto& r : series.records) {
    for (const auto& [k, v] : r.scalars) scalar_names.insert(k);
  }
  scalar_names.erase(axis);
  for (const auto& name : scalar_names) {
    // Group records by the remaining axes/tags.
    std::map<std::string, SeriesLine> groups;
    for (const auto& r : series.records) {
      if (!r.scalars.count(name) || !r.scalars.count(axis)) continue;
      std::string group;
      for (const auto& a : sc.axis_names) {
        if (a == axis) continue;
        if (r.scalars.count(a)) group += a + "=" + format_double(r.scalars.at(a)) + " ";
        if (r.tags.count(a)) group += a + "=" + r.tags.at(a) + " ";
      }
      auto& line = groups[group];
      line.label = group.empty() ? name : group;
      line.pts.push_back({r.scalars.at(axis), r.scalars.at(name)});
    }
    std::vector<SeriesLine> lines;
    for (auto& [g, l] : groups) {
      std::sort(l.pts.begin(), l.pts.end());
      if (l.pts.size() >= 2) lines.push_back(std::move(l));
    }
    if (lines.empty()) continue;
    write_svg_plot(dir / (name + ".svg"), series.scenario_id + ": " + name, axis, name, lines);
  }
}

}  // namespace

std::vector<std::string> emit(const MeasureSeries& series, const Scenario& sc,
                              const EmitOptions& opts) {
  std::vector<std::string> written;
  fs::path dir = fs::path(opts.out_dir) / series.scenario_id;
  fs::create_directories(dir);

  fs::path scalars_path = dir / "scalars.tsv";
  write_scalars(scalars_path, series, sc);
  written.push_back(scalars_path.string());

  std::set<std::string> table_names;
  for (const auto& r : series.records) {
    for (const auto& [k, v] : r.tables) table_names.insert(k);
  }
  for (const auto& name : table_names) {
    fs::path p = dir / (name + ".tsv");
    write_table(p, series, name);
    written.push_back(p.string());
  }

  json summary;
  summary["scenario_id"] = series.scenario_id;
  summary["provenance"] = series.provenance;
  summary["records"] = series.records.size();
  summary["files"] = written;
  fs::path sp = dir / "summary.json";
  {
    std::ofstream out(sp);
    out << summary.dump(1) << "\n";
  }
  written.push_back(sp.string());

  if (opts.plots) write_plots(dir / "plots", series, sc);
  return written;
}

}  // namespace qsplit
