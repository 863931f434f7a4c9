#include "qsplit/scenario.hpp"

#include <fstream>
#include <stdexcept>

namespace qsplit {

namespace {

HamiltonianSpec::Interaction interaction_from(const std::string& s) {
  if (s == "degenerate_trilinear") return HamiltonianSpec::Interaction::degenerate_trilinear;
  if (s == "higher_order") return HamiltonianSpec::Interaction::higher_order;
  if (s == "nondegenerate") return HamiltonianSpec::Interaction::nondegenerate;
  if (s == "multi_shared_b") return HamiltonianSpec::Interaction::multi_shared_b;
  if (s == "multi_shared_a") return HamiltonianSpec::Interaction::multi_shared_a;
  if (s == "none") return HamiltonianSpec::Interaction::none;
  throw std::invalid_argument("unknown interaction: " + s);
}

StatePrep prep_from(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "ground") return StatePrep::ground();
  if (kind == "fock") return StatePrep::fock(j.at("n").get<int>());
  if (kind == "thermal") return StatePrep::thermal(j.at("nbar").get<double>());
  if (kind == "coherent") {
    double phase = j.value("phase", 0.0);
    if (j.contains("alpha")) return StatePrep::coherent(j.at("alpha").get<double>(), phase);
    return StatePrep::coherent(std::sqrt(j.at("nbar").get<double>()), phase);
  }
  if (kind == "prcs") {
    return StatePrep::prcs(j.contains("mu") ? j.at("mu").get<double>()
                                            : j.at("nbar").get<double>());
  }
  throw std::invalid_argument("unknown prep kind: " + kind);
}

// Replace "$axis" / "$axis.field" strings by the axis values of one sweep point.
json substitute(const json& node, const std::map<std::string, json>& values) {
  if (node.is_string()) {
    const std::string s = node.get<std::string>();
    if (!s.empty() && s[0] == '$') {
      std::string name = s.substr(1);
      std::string field;
      if (auto dot = name.find('.'); dot != std::string::npos) {
        field = name.substr(dot + 1);
        name = name.substr(0, dot);
      }
      auto it = values.find(name);
      if (it == values.end()) throw std::invalid_argument("unknown sweep axis: " + s);
      return field.empty() ? it->second : it->second.at(field);
    }
    return node;
  }
  if (node.is_object()) {
    json out = json::object();
    for (auto it = node.begin(); it != node.end(); ++it) {
      out[it.key()] = substitute(it.value(), values);
    }
    return out;
  }
  if (node.is_array()) {
    json out = json::array();
    for (const auto& v : node) out.push_back(substitute(v, values));
    return out;
  }
  return node;
}

LogBase log_base_from(const json& j) {
  if (j.is_number()) {
    if (j.get<double>() == 2.0) return LogBase::two;
    throw std::invalid_argument("log_base must be 2 or \"e\"");
  }
  const std::string s = j.get<std::string>();
  if (s == "2") return LogBase::two;
  if (s == "e") return LogBase::e;
  throw std::invalid_argument("log_base must be 2 or \"e\"");
}

ResolvedPoint resolve_point(const json& doc) {
  ResolvedPoint p;
  const json& sys = doc.at("system");
  HamiltonianSpec spec;
  spec.interaction = interaction_from(sys.at("interaction").get<std::string>());
  spec.coupling = sys.value("coupling", 1.0);
  spec.coupling2 = sys.value("coupling2", 1.0);
  spec.order = sys.value("order", 2);
  if (sys.contains("free_motion_omega") && !sys.at("free_motion_omega").is_null()) {
    spec.free_motion_omega = sys.at("free_motion_omega").get<double>();
  }
  p.base_system = spec;
  if (sys.contains("aux_coupling") && !sys.at("aux_coupling").is_null()) {
    spec.aux_coupling = sys.at("aux_coupling").get<double>();
    p.has_aux = true;
  }
  p.aux_system = spec;

  if (doc.contains("pump")) {
    for (auto it = doc.at("pump").begin(); it != doc.at("pump").end(); ++it) {
      p.preps[it.key()] = prep_from(it.value());
    }
  }
  if (doc.contains("lindblad") && !doc.at("lindblad").is_null()) {
    LindbladConfig lc;
    const json& l = doc.at("lindblad");
    lc.lambda = l.at("lambda").get<double>();
    lc.nbar_th = l.value("nbar_th", 0.0);
    lc.fixed_time = l.value("mode", std::string("fixed_time")) == "fixed_time";
    p.lindblad = lc;
  }
  if (doc.contains("grid")) {
    p.t_max = doc.at("grid").value("t_max", 10.0);
    p.dt = doc.at("grid").value("dt", 0.01);
  }
  for (const auto& m : doc.at("measures")) {
    p.measures.push_back(MeasureRequest::parse(m.get<std::string>(), p.has_aux));
  }
  if (doc.contains("anchor")) {
    p.anchor = doc.at("anchor").get<std::string>();
  } else {
    for (const auto& m : p.measures) {
      if (m.kind == MeasureRequest::Kind::ep) {
        p.anchor = m.name;
        break;
      }
    }
    if (p.anchor.empty()) {
      for (const auto& m : p.measures) {
        if (m.kind == MeasureRequest::Kind::ln) {
          p.anchor = m.name;
          break;
        }
      }
    }
  }
  if (doc.contains("dims") && doc.at("dims").is_object()) {
    for (auto it = doc.at("dims").begin(); it != doc.at("dims").end(); ++it) {
      p.explicit_dims[it.key()] = it.value().get<int>();
    }
  }
  p.dim_margin = doc.value("dim_margin", 0);
  p.eps_tail = doc.value("eps_tail", 1e-6);
  if (doc.contains("log_base")) p.log_base = log_base_from(doc.at("log_base"));
  p.peak_floor = doc.value("peak_floor", 1e-6);
  p.distill_steps = doc.value("distill_steps", 12);
  if (doc.contains("quad_grid")) {
    const json& q = doc.at("quad_grid");
    p.quad_grid.x_min = q.value("x_min", -10.0);
    p.quad_grid.x_max = q.value("x_max", 10.0);
    p.quad_grid.n = q.value("n", static_cast<std::size_t>(4096));
  }
  p.theta_points = doc.value("theta_points", static_cast<std::size_t>(128));
  if (doc.contains("wigner_grid")) {
    p.wigner_half_width = doc.at("wigner_grid").value("half_width", 6.0);
    p.wigner_points = doc.at("wigner_grid").value("points", static_cast<std::size_t>(121));
  }
  return p;
}

}  // namespace

MeasureRequest MeasureRequest::parse(const std::string& text, bool has_aux) {
  MeasureRequest r;
  std::string body = text;
  std::optional<Variant> forced;
  if (auto at = body.find('@'); at != std::string::npos) {
    std::string v = body.substr(at + 1);
    body = body.substr(0, at);
    if (v == "base") {
      forced = Variant::base;
    } else if (v == "aux") {
      forced = Variant::aux;
    } else {
      throw std::invalid_argument("measure variant must be base or aux: " + text);
    }
  }
  auto strip = [&](const std::string& prefix) -> std::optional<std::string> {
    if (body.rfind(prefix, 0) == 0) return body.substr(prefix.size());
    return std::nullopt;
  };
  bool default_aux = false;
  if (auto m = strip("ep_")) {
    r.kind = Kind::ep;
    r.modes = *m;
  } else if (auto m2 = strip("ln_")) {
    r.kind = Kind::ln;
    r.modes = *m2;
    default_aux = true;
  } else if (body == "gaussian_ln_max") {
    r.kind = Kind::gaussian_ln_max;
    default_aux = true;
  } else if (auto m3 = strip("pk_")) {
    r.kind = Kind::pk;
    r.modes = *m3;
  } else if (auto m4 = strip("klyshko_")) {
    r.kind = Kind::klyshko;
    r.modes = *m4;
  } else if (auto m5 = strip("pdf_")) {
    r.kind = Kind::pdf;
    r.modes = *m5;
  } else if (auto m6 = strip("distill_universal_")) {
    r.kind = Kind::distill_universal;
    r.modes = *m6;
  } else if (auto m7 = strip("distill_nonuniversal_")) {
    r.kind = Kind::distill_nonuniversal;
    r.modes = *m7;
  } else if (auto m8 = strip("distill_asymptotic_")) {
    r.kind = Kind::distill_asymptotic;
    r.modes = *m8;
  } else if (auto m9 = strip("var_xtheta_")) {
    r.kind = Kind::var_xtheta;
    r.modes = *m9;
  } else if (auto m10 = strip("wigner_min_")) {
    r.kind = Kind::wigner_min;
    r.modes = *m10;
  } else if (auto m11 = strip("parity_odd_max_")) {
    r.kind = Kind::parity_odd_max;
    r.modes = *m11;
  } else {
    throw std::invalid_argument("unknown measure: " + text);
  }
  if (r.kind == Kind::ln && r.modes.size() != 2) {
    throw std::invalid_argument("ln measure needs a mode pair: " + text);
  }
  if (r.kind != Kind::ln && r.kind != Kind::gaussian_ln_max && r.modes.size() != 1) {
    throw std::invalid_argument("measure needs a single mode: " + text);
  }
  r.variant = forced.value_or((default_aux && has_aux) ? Variant::aux : Variant::base);
  if (r.variant == Variant::aux && !has_aux) r.variant = Variant::base;
  r.name = text;
  return r;
}

Scenario Scenario::parse(const json& doc) {
  Scenario sc;
  sc.id = doc.at("id").get<std::string>();
  sc.title = doc.value("title", sc.id);
  sc.document = doc;
  sc.verify_dims = doc.value("verify_dims", true);

  std::vector<std::pair<std::string, json>> axes;
  if (doc.contains("sweep")) {
    for (auto it = doc.at("sweep").begin(); it != doc.at("sweep").end(); ++it) {
      if (!it.value().is_array() || it.value().empty()) {
        throw std::invalid_argument("sweep axis must be a nonempty array: " + it.key());
      }
      axes.push_back({it.key(), it.value()});
      sc.axis_names.push_back(it.key());
    }
  }
  // Cartesian product in declared axis order.
  std::vector<std::size_t> pick(axes.size(), 0);
  for (;;) {
    std::map<std::string, json> values;
    for (std::size_t a = 0; a < axes.size(); ++a) values[axes[a].first] = axes[a].second[pick[a]];
    json resolved = substitute(doc, values);
    ResolvedPoint p = resolve_point(resolved);
    for (const auto& [name, v] : values) {
      if (v.is_number()) {
        p.axis_values[name] = v.get<double>();
      } else if (v.is_string()) {
        p.axis_tags[name] = v.get<std::string>();
      } else if (v.is_object()) {
        for (auto it = v.begin(); it != v.end(); ++it) {
          if (it.value().is_number()) p.axis_values[name + "." + it.key()] = it.value().get<double>();
        }
      }
    }
    sc.points.push_back(std::move(p));
    if (axes.empty()) break;
    std::size_t a = axes.size();
    bool done = true;
    while (a-- > 0) {
      if (++pick[a] < axes[a].second.size()) {
        done = false;
        break;
      }
      pick[a] = 0;
    }
    if (done) break;
  }
  return sc;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  json doc = json::parse(in);
  return parse(doc);
}

json MeasureSeries::to_json() const {
  json recs = json::array();
  for (const auto& r : records) {
    json jr;
    jr["scalars"] = r.scalars;
    jr["tags"] = r.tags;
    json tables = json::object();
    for (const auto& [name, t] : r.tables) {
      tables[name] = {{"columns", t.columns}, {"rows", t.rows}};
    }
    jr["tables"] = tables;
    recs.push_back(std::move(jr));
  }
  return json{{"scenario_id", scenario_id}, {"provenance", provenance}, {"records", recs}};
}

MeasureSeries MeasureSeries::from_json(const json& j) {
  MeasureSeries s;
  s.scenario_id = j.at("scenario_id").get<std::string>();
  s.provenance = j.at("provenance");
  for (const auto& jr : j.at("records")) {
    MeasureRecord r;
    r.scalars = jr.at("scalars").get<std::map<std::string, double>>();
    r.tags = jr.at("tags").get<std::map<std::string, std::string>>();
    for (auto it = jr.at("tables").begin(); it != jr.at("tables").end(); ++it) {
      Table t;
      t.columns = it.value().at("columns").get<std::vector<std::string>>();
      t.rows = it.value().at("rows").get<std::vector<std::vector<double>>>();
      r.tables[it.key()] = std::move(t);
    }
    s.records.push_back(std::move(r));
  }
  return s;
}

}  // namespace qsplit
