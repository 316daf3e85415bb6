#pragma once

#include "puma/config.hpp"

namespace puma {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv_text(const std::string& text, const std::string& origin);

// Standalone SVG line plot per the [plot] section; returns the SVG text.
// Series come one-per-input (named by labels) or, with group_by set, one per
// distinct value of that column in a single input.
std::string render_plot(const PlotSection& spec,
                        const std::vector<CsvTable>& tables);

// Reads the inputs, renders, and writes spec.output under out_dir.
std::string emit_plot(const PlotSection& spec, const std::string& out_dir);

}  // namespace puma
