#pragma once

#include "qsplit/scenario.hpp"

namespace qsplit {

/// Content-addressed store of computed MeasureSeries, keyed by the canonical
/// scenario document plus effective run settings. Entries carry a checksum;
/// corrupt entries are treated as misses. Writes are atomic
/// (write-temp-then-rename).
class SweepCache {
 public:
  explicit SweepCache(std::string dir);

  const std::string& dir() const { return dir_; }
  static std::string key_of(const json& effective_config);

  std::optional<MeasureSeries> load(const std::string& key) const;
  void store(const std::string& key, const MeasureSeries& series) const;
  std::size_t clear() const;

 private:
  std::string dir_;
};

}  // namespace qsplit
