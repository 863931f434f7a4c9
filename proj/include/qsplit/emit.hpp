#pragma once

#include "qsplit/scenario.hpp"

namespace qsplit {

struct EmitOptions {
  std::string out_dir = "out";
  bool plots = false;
};

/// Write the series as tab-separated tables (one scalar table plus one table
/// per vector measure), a summary.json with provenance, and optional SVG line
/// plots. Numeric output is full precision; deterministic layout.
std::vector<std::string> emit(const MeasureSeries& series, const Scenario& sc,
                              const EmitOptions& opts);

}  // namespace qsplit
