#include "qsplit/cache.hpp"

#include <filesystem>
#include <fstream>

namespace qsplit {

namespace fs = std::filesystem;

SweepCache::SweepCache(std::string dir) : dir_(std::move(dir)) {}

std::string SweepCache::key_of(const json& effective_config) {
  return sha256_hex(effective_config.dump());
}

std::optional<MeasureSeries> SweepCache::load(const std::string& key) const {
  fs::path path = fs::path(dir_) / (key + ".series.json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json doc;
  try {
    doc = json::parse(in);
    std::string payload = doc.at("series").dump();
    if (sha256_hex(payload) != doc.at("checksum").get<std::string>()) return std::nullopt;
    return MeasureSeries::from_json(doc.at("series"));
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt entry: recompute
  }
}

void SweepCache::store(const std::string& key, const MeasureSeries& series) const {
  fs::create_directories(dir_);
  json payload = series.to_json();
  json doc{{"key", key}, {"checksum", sha256_hex(payload.dump())}, {"series", payload}};
  fs::path final_path = fs::path(dir_) / (key + ".series.json");
  fs::path tmp_path = fs::path(dir_) / (key + ".series.json.tmp");
  {
    std::ofstream out(tmp_path);
    out << doc.dump(1);
  }
  fs::rename(tmp_path, final_path);
}

std::size_t SweepCache::clear() const {
  std::size_t removed = 0;
  if (!fs::exists(dir_)) return 0;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() == ".json" &&
        entry.path().string().find(".series.json") != std::string::npos) {
      fs::remove(entry.path());
      ++removed;
    }
  }
  return removed;
}

}  // namespace qsplit
