#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "qsplit/emit.hpp"
#include "qsplit/runner.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_cache_dir(const std::string& out_dir) {
  if (const char* env = std::getenv("QSPLIT_CACHE_DIR")) return env;
  return (fs::path(out_dir) / ".cache").string();
}

std::map<std::string, int> parse_dims(const std::string& spec) {
  // "a=16,b=33,c=33"
  std::map<std::string, int> out;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    std::size_t comma = spec.find(',', pos);
    std::string item = spec.substr(pos, comma == std::string::npos ? comma : comma - pos);
    std::size_t eq = item.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--dims expects label=dim pairs");
    out[item.substr(0, eq)] = std::stoi(item.substr(eq + 1));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qsplit: thermal quanta-splitting simulations on truncated Fock spaces"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run a scenario file and emit its tables");
  std::string scenario_path, out_dir = "out", cache_dir, log_base, dims_spec;
  unsigned threads = 0;
  bool plots = false, no_verify = false, no_cache = false;
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--out", out_dir, "Output directory (default: out)");
  run->add_flag("--plots", plots, "Also write SVG plots");
  run->add_option("--threads", threads, "Worker threads (default: hardware)");
  run->add_option("--log-base", log_base, "Override logarithm base: 2 or e");
  run->add_option("--dims", dims_spec, "Override truncation dims, e.g. a=16,b=33,c=33");
  run->add_option("--cache-dir", cache_dir,
                  "Cache directory (default: $QSPLIT_CACHE_DIR or <out>/.cache)");
  run->add_flag("--no-verify-dims", no_verify, "Skip the dims+2 convergence guard");
  run->add_flag("--no-cache", no_cache, "Do not read or write the sweep cache");

  // list-scenarios
  auto* list = app.add_subcommand("list-scenarios", "List scenario files in a directory");
  std::string scenarios_dir = "scenarios";
  list->add_option("--scenarios-dir", scenarios_dir, "Directory to scan (default: scenarios)");

  // clean-cache
  auto* clean = app.add_subcommand("clean-cache", "Remove cached sweep results");
  std::string clean_dir;
  clean->add_option("--cache-dir", clean_dir,
                    "Cache directory (default: $QSPLIT_CACHE_DIR or out/.cache)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      qsplit::Scenario sc = qsplit::Scenario::load(scenario_path);
      qsplit::RunOptions opts;
      opts.threads = threads;
      if (!no_cache) opts.cache_dir = cache_dir.empty() ? default_cache_dir(out_dir) : cache_dir;
      if (!log_base.empty()) {
        if (log_base == "2") {
          opts.log_base_override = qsplit::LogBase::two;
        } else if (log_base == "e") {
          opts.log_base_override = qsplit::LogBase::e;
        } else {
          std::cerr << "--log-base must be 2 or e\n";
          return 1;
        }
      }
      if (!dims_spec.empty()) opts.dims_override = parse_dims(dims_spec);
      if (no_verify) opts.verify_dims_override = false;

      qsplit::RunOutcome outcome = qsplit::run_scenario(sc, opts);
      qsplit::EmitOptions eo;
      eo.out_dir = out_dir;
      eo.plots = plots;
      auto files = qsplit::emit(outcome.series, sc, eo);
      std::cout << "scenario " << sc.id << (outcome.from_cache ? " (cached)" : "") << ": "
                << outcome.series.records.size() << " sweep points\n";
      for (const auto& f : files) std::cout << "  wrote " << f << "\n";
      if (!outcome.convergence_ok) {
        std::cerr << "convergence guard FAILED:\n";
        for (const auto& msg : outcome.convergence_failures) std::cerr << "  " << msg << "\n";
        return 2;
      }
      return 0;
    }
    if (*list) {
      if (!fs::exists(scenarios_dir)) {
        std::cerr << "no such directory: " << scenarios_dir << "\n";
        return 1;
      }
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(scenarios_dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        try {
          qsplit::Scenario sc = qsplit::Scenario::load(f.string());
          std::cout << f.string() << "\t" << sc.id << "\t" << sc.title << "\t"
                    << sc.points.size() << " points\n";
        } catch (const std::exception& e) {
          std::cout << f.string() << "\t(unreadable: " << e.what() << ")\n";
        }
      }
      return 0;
    }
    if (*clean) {
      std::string dir = clean_dir.empty() ? default_cache_dir("out") : clean_dir;
      qsplit::SweepCache cache(dir);
      std::size_t n = cache.clear();
      std::cout << "removed " << n << " cached series from " << dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
