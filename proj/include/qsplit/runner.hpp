#pragma once

#include "qsplit/cache.hpp"

namespace qsplit {

struct RunOptions {
  std::string cache_dir;                         // empty disables caching
  unsigned threads = 0;                          // 0 = hardware concurrency
  std::optional<LogBase> log_base_override;
  std::map<std::string, int> dims_override;      // per mode label
  std::optional<bool> verify_dims_override;
};

struct RunOutcome {
  MeasureSeries series;
  bool from_cache = false;
  bool convergence_ok = true;
  std::vector<std::string> convergence_failures;
};

/// Execute every sweep point of the scenario: prepare states, evolve, locate
/// the first peak of each requested quantity, evaluate the remaining measures
/// at the anchor peak time, and (unless disabled) rerun with all dims
/// incremented by 2, requiring every reported number to move by < 1e-4.
/// Deterministic given the config.
RunOutcome run_scenario(const Scenario& sc, const RunOptions& opts = {});

/// Effective configuration used for content addressing.
json effective_config(const Scenario& sc, const RunOptions& opts);

}  // namespace qsplit
