#include "puma/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace puma {

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv_text(const std::string& text, const std::string& origin) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream row(line);
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  if (table.header.empty())
    throw ConfigError(origin + ": empty CSV");
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv_text(buffer.str(), path);
}

namespace {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

double parse_cell(const std::string& cell, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (...) {
    throw ConfigError("non-numeric " + what + " value '" + cell + "'");
  }
}

std::vector<std::pair<double, double>> extract_points(const CsvTable& table,
                                                      const PlotSection& spec,
                                                      const std::string& origin) {
  const int xc = table.column(spec.x);
  const int yc = table.column(spec.y);
  if (xc < 0) throw ConfigError(origin + ": missing column '" + spec.x + "'");
  if (yc < 0) throw ConfigError(origin + ": missing column '" + spec.y + "'");
  if (table.rows.empty()) throw ConfigError(origin + ": CSV has no data rows");
  std::vector<std::pair<double, double>> pts;
  for (const auto& row : table.rows)
    pts.emplace_back(parse_cell(row[static_cast<std::size_t>(xc)], spec.x),
                     parse_cell(row[static_cast<std::size_t>(yc)], spec.y));
  return pts;
}

std::vector<std::pair<double, double>> aggregate_points(
    std::vector<std::pair<double, double>> pts, const std::string& how) {
  std::sort(pts.begin(), pts.end());
  if (how == "none") return pts;
  std::vector<std::pair<double, double>> out;
  std::size_t i = 0;
  while (i < pts.size()) {
    std::size_t j = i;
    std::vector<double> ys;
    while (j < pts.size() && pts[j].first == pts[i].first)
      ys.push_back(pts[j++].second);
    double v;
    if (how == "mean") {
      v = 0.0;
      for (double y : ys) v += y;
      v /= static_cast<double>(ys.size());
    } else {  // median
      std::sort(ys.begin(), ys.end());
      v = ys.size() % 2 ? ys[ys.size() / 2]
                        : 0.5 * (ys[ys.size() / 2 - 1] + ys[ys.size() / 2]);
    }
    out.emplace_back(pts[i].first, v);
    i = j;
  }
  return out;
}

std::string fmt_tick(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f6fb2", "#c23b3b", "#3f9142",
                                    "#8456b0", "#c08a2d", "#3a8f8f"};

}  // namespace

std::string render_plot(const PlotSection& spec,
                        const std::vector<CsvTable>& tables) {
  if (tables.empty()) throw ConfigError("plot: no inputs");
  const bool log_y = spec.yscale == "log";

  std::vector<Series> series;
  if (!spec.group_by.empty()) {
    if (tables.size() != 1)
      throw ConfigError("plot: group_by needs exactly one input");
    const CsvTable& table = tables[0];
    const int gc = table.column(spec.group_by);
    if (gc < 0)
      throw ConfigError("plot: missing column '" + spec.group_by + "'");
    std::map<std::string, CsvTable> groups;
    for (const auto& row : table.rows) {
      CsvTable& g = groups[row[static_cast<std::size_t>(gc)]];
      g.header = table.header;
      g.rows.push_back(row);
    }
    for (auto& [name, sub] : groups) {
      Series s;
      s.name = name;
      s.points = aggregate_points(extract_points(sub, spec, name), spec.aggregate);
      series.push_back(std::move(s));
    }
  } else {
    for (std::size_t i = 0; i < tables.size(); ++i) {
      Series s;
      s.name = i < spec.labels.size()
                   ? spec.labels[i]
                   : (i < spec.inputs.size() ? spec.inputs[i]
                                             : "series-" + std::to_string(i));
      s.points = aggregate_points(extract_points(tables[i], spec, s.name),
                                  spec.aggregate);
      series.push_back(std::move(s));
    }
  }

  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool have = false;
  for (const Series& s : series)
    for (const auto& [x, y] : s.points) {
      if (log_y && y <= 0.0)
        throw ConfigError("plot: log scale needs positive y values");
      if (!have) {
        xmin = xmax = x;
        ymin = ymax = y;
        have = true;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  if (!have) throw ConfigError("plot: no points");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin == 0.0 ? 1.0 : ymin * (log_y ? 10.0 : 2.0);

  const double width = 800, height = 500;
  const double ml = 80, mr = 170, mt = 30, mb = 55;
  const double pw = width - ml - mr, ph = height - mt - mb;
  const auto ty = [&](double y) {
    const double lo = log_y ? std::log10(ymin) : ymin;
    const double hi = log_y ? std::log10(ymax) : ymax;
    const double v = log_y ? std::log10(y) : y;
    return mt + ph - (v - lo) / (hi - lo) * ph;
  };
  const auto tx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width
      << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";

  // axes + ticks
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / ticks;
    svg << "<line x1=\"" << tx(fx) << "\" y1=\"" << mt + ph << "\" x2=\""
        << tx(fx) << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << tx(fx) << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\">" << fmt_tick(fx) << "</text>\n";
    double fy;
    if (log_y) {
      const double lo = std::log10(ymin), hi = std::log10(ymax);
      fy = std::pow(10.0, lo + (hi - lo) * i / ticks);
    } else {
      fy = ymin + (ymax - ymin) * i / ticks;
    }
    svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << ty(fy) << "\" x2=\"" << ml
        << "\" y2=\"" << ty(fy) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << ml - 9 << "\" y=\"" << ty(fy) + 4
        << "\" text-anchor=\"end\">" << fmt_tick(fy) << "</text>\n";
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">" << spec.x << "</text>\n";
  svg << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << mt + ph / 2
      << ")\">" << spec.y << (log_y ? " (log)" : "") << "</text>\n";

  // series + legend
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof kPalette / sizeof *kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[s].points)
      svg << tx(x) << ',' << ty(y) << ' ';
    svg << "\"/>\n";
    const double ly = mt + 14 + 20 * static_cast<double>(s);
    svg << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly << "\" x2=\""
        << ml + pw + 36 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << ml + pw + 42 << "\" y=\"" << ly + 4 << "\">"
        << series[s].name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string emit_plot(const PlotSection& spec, const std::string& out_dir) {
  if (spec.inputs.empty()) throw ConfigError("plot: no input CSVs");
  std::vector<CsvTable> tables;
  tables.reserve(spec.inputs.size());
  for (const std::string& path : spec.inputs) tables.push_back(read_csv(path));
  const std::string svg = render_plot(spec, tables);
  const std::filesystem::path out =
      std::filesystem::path(out_dir) / spec.output;
  std::ofstream file(out);
  if (!file) throw ConfigError("cannot write '" + out.string() + "'");
  file << svg;
  return out.string();
}

}  // namespace puma
