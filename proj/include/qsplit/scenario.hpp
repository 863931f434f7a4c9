#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qsplit/distill.hpp"
#include "qsplit/lindblad.hpp"

namespace qsplit {

using json = nlohmann::json;

/// One requested diagnostic, parsed from strings like "ep_b", "ln_bc",
/// "ln_bc@base", "pk_b", "var_xtheta_b".
struct MeasureRequest {
  enum class Kind {
    ep,
    ln,
    gaussian_ln_max,
    pk,
    klyshko,
    pdf,
    distill_universal,
    distill_nonuniversal,
    distill_asymptotic,
    var_xtheta,
    wigner_min,
    parity_odd_max,
  };
  enum class Variant { base, aux };

  Kind kind;
  Variant variant;
  std::string modes;  // "b" or "bc"
  std::string name;   // canonical column name

  static MeasureRequest parse(const std::string& text, bool has_aux);
  bool per_tau_scalar() const { return kind == Kind::ep || kind == Kind::ln; }
};

struct LindbladConfig {
  double lambda = 0.0;
  double nbar_th = 0.0;
  bool fixed_time = true;  // evaluate at the unitary first-peak times
};

/// One fully resolved sweep point.
struct ResolvedPoint {
  HamiltonianSpec base_system;              // auxiliary mode stripped
  HamiltonianSpec aux_system;               // with auxiliary mode when configured
  bool has_aux = false;
  std::map<std::string, StatePrep> preps;   // by mode label; missing = ground
  std::optional<LindbladConfig> lindblad;
  double t_max = 10.0;
  double dt = 0.01;
  std::vector<MeasureRequest> measures;
  std::string anchor;                        // measure name anchoring state measures
  std::map<std::string, int> explicit_dims;  // empty = auto
  int dim_margin = 0;
  double eps_tail = 1e-6;
  LogBase log_base = LogBase::two;
  double peak_floor = 1e-6;
  int distill_steps = 12;
  QuadratureGrid quad_grid;
  std::size_t theta_points = 128;
  double wigner_half_width = 6.0;
  std::size_t wigner_points = 121;
  std::map<std::string, double> axis_values;
  std::map<std::string, std::string> axis_tags;
};

/// Parsed scenario: the raw document plus the resolved sweep points.
struct Scenario {
  std::string id;
  std::string title;
  json document;
  std::vector<std::string> axis_names;  // declared sweep order
  std::vector<ResolvedPoint> points;
  bool verify_dims = true;

  static Scenario parse(const json& doc);
  static Scenario load(const std::string& path);
};

/// Columnar block of per-point vector output (distributions, traces, grids).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct MeasureRecord {
  std::map<std::string, double> scalars;
  std::map<std::string, std::string> tags;
  std::map<std::string, Table> tables;
};

struct MeasureSeries {
  std::string scenario_id;
  json provenance;
  std::vector<MeasureRecord> records;

  json to_json() const;
  static MeasureSeries from_json(const json& j);
};

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace qsplit
