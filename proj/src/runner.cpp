#include "qsplit/runner.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qsplit {

namespace {

constexpr double kReduceTrim = 1e-14;

struct VariantCtx {
  HamiltonianSpec spec;
  std::vector<std::string> labels;
  std::map<std::string, ModeIndex> mode_of;
  FockSpace space{std::vector<int>{1}};
  std::vector<std::vector<long>> charges;
  std::vector<std::pair<double, Support>> components;
  bool phase_symmetric = true;
  std::unique_ptr<ShellPropagator> prop;
};

// Weight pair for the sigma-block reduction of (x, y): any nonnegative integer
// combination of conserved charges with positive weight on both modes.
std::optional<std::pair<long, long>> pair_block_weights(
    const std::vector<std::vector<long>>& charges, ModeIndex x, ModeIndex y) {
  std::vector<std::vector<long>> combos = charges;
  for (std::size_t i = 0; i < charges.size(); ++i) {
    for (std::size_t j = i + 1; j < charges.size(); ++j) {
      std::vector<long> s = charges[i];
      for (std::size_t m = 0; m < s.size(); ++m) s[m] += charges[j][m];
      combos.push_back(std::move(s));
    }
  }
  for (const auto& w : combos) {
    if (w[x] >= 1 && w[y] >= 1) return std::make_pair(w[x], w[y]);
  }
  return std::nullopt;
}

VariantCtx build_variant(const ResolvedPoint& pt, const HamiltonianSpec& spec,
                         const std::map<std::string, int>& dims_override, int extra_dims,
                         bool for_lindblad) {
  VariantCtx ctx;
  ctx.spec = spec;
  ctx.labels = spec.mode_labels();
  for (ModeIndex m = 0; m < ctx.labels.size(); ++m) ctx.mode_of[ctx.labels[m]] = m;

  std::vector<StatePrep> preps;
  for (const auto& label : ctx.labels) {
    auto it = pt.preps.find(label);
    preps.push_back(it == pt.preps.end() ? StatePrep::ground() : it->second);
  }
  ctx.charges = spec.charge_weights();

  // Per-mode support requirements at the configured tail cutoff.
  std::vector<int> support_dim;
  for (const auto& p : preps) support_dim.push_back(p.required_dim(pt.eps_tail));

  std::vector<int> dims(ctx.labels.size());
  bool any_explicit = false;
  for (ModeIndex m = 0; m < ctx.labels.size(); ++m) {
    auto ov = dims_override.find(ctx.labels[m]);
    auto cf = pt.explicit_dims.find(ctx.labels[m]);
    if (ov != dims_override.end()) {
      dims[m] = ov->second;
      any_explicit = true;
    } else if (cf != pt.explicit_dims.end()) {
      dims[m] = cf->second;
      any_explicit = true;
    } else {
      dims[m] = 0;  // auto
    }
  }
  // Charge-based shell ceilings for the initial sectors.
  std::vector<long> ceiling(ctx.labels.size(), -1);
  if (!ctx.charges.empty()) {
    std::vector<long> s_max(ctx.charges.size(), 0);
    for (std::size_t c = 0; c < ctx.charges.size(); ++c) {
      for (ModeIndex m = 0; m < ctx.labels.size(); ++m) {
        s_max[c] += ctx.charges[c][m] * (support_dim[m] - 1);
      }
    }
    for (ModeIndex m = 0; m < ctx.labels.size(); ++m) {
      long bound = -1;
      for (std::size_t c = 0; c < ctx.charges.size(); ++c) {
        if (ctx.charges[c][m] > 0) {
          long b = s_max[c] / ctx.charges[c][m];
          bound = (bound < 0) ? b : std::min(bound, b);
        }
      }
      ceiling[m] = bound;
    }
  }
  for (ModeIndex m = 0; m < ctx.labels.size(); ++m) {
    if (dims[m] == 0) {
      if (ceiling[m] < 0) {
        throw std::invalid_argument("auto dims need a conserved charge bounding mode " +
                                    ctx.labels[m] + "; give explicit dims");
      }
      dims[m] = static_cast<int>(std::max<long>(support_dim[m], ceiling[m] + 1));
      dims[m] += pt.dim_margin;
    } else {
      if (dims[m] < support_dim[m]) {
        throw std::invalid_argument("dims for mode " + ctx.labels[m] +
                                    " too small for the preparation at eps_tail");
      }
      if (!for_lindblad && ceiling[m] >= 0 && dims[m] < ceiling[m] + 1) {
        throw std::invalid_argument("dims for mode " + ctx.labels[m] +
                                    " fail the charge-based sufficiency check (need " +
                                    std::to_string(ceiling[m] + 1) + ")");
      }
    }
    dims[m] += extra_dims;
    if (dims[m] > 256) {
      throw std::invalid_argument("mode " + ctx.labels[m] + " needs dimension " +
                                  std::to_string(dims[m]) + " > 256; reduce eps_tail or sweep");
    }
  }
  (void)any_explicit;
  ctx.space = FockSpace(dims);

  // Sparse product components.
  std::vector<std::vector<ModeComponent>> per_mode;
  for (ModeIndex m = 0; m < preps.size(); ++m) {
    per_mode.push_back(mode_components(preps[m], dims[m], pt.eps_tail));
  }
  std::vector<std::size_t> pick(preps.size(), 0);
  double wsum = 0;
  for (;;) {
    double w = 1.0;
    for (std::size_t m = 0; m < preps.size(); ++m) w *= per_mode[m][pick[m]].weight;
    Support support = {{0ull, cplx(1.0, 0.0)}};
    for (std::size_t m = 0; m < preps.size(); ++m) {
      Support next;
      next.reserve(support.size() * per_mode[m][pick[m]].amplitudes.size());
      for (const auto& [key, amp] : support) {
        for (const auto& [n, a] : per_mode[m][pick[m]].amplitudes) {
          next.push_back({key | (static_cast<std::uint64_t>(n) << (8 * m)), amp * a});
        }
      }
      support = std::move(next);
    }
    ctx.components.push_back({w, std::move(support)});
    wsum += w;
    std::size_t m = preps.size();
    bool done = true;
    while (m-- > 0) {
      if (++pick[m] < per_mode[m].size()) {
        done = false;
        break;
      }
      pick[m] = 0;
    }
    if (done) break;
  }
  for (auto& [w, s] : ctx.components) w /= wsum;

  if (!ctx.charges.empty()) {
    ShellDecomposition probe(ctx.space, ctx.charges);
    for (const auto& [w, s] : ctx.components) {
      auto key0 = probe.key_of_packed(s.front().first);
      for (const auto& [k, a] : s) {
        if (probe.key_of_packed(k) != key0) {
          ctx.phase_symmetric = false;
          break;
        }
      }
      if (!ctx.phase_symmetric) break;
    }
  } else {
    ctx.phase_symmetric = false;
  }
  if (!for_lindblad) {
    ctx.prop = std::make_unique<ShellPropagator>(ctx.space, spec.terms(), ctx.charges);
  }
  return ctx;
}

// ---- per-tau measure evaluation ---------------------------------------------------------

using SupportRefs = std::vector<std::pair<double, const Support*>>;

std::vector<double> diag_populations(const VariantCtx& ctx, ModeIndex mode,
                                     const SupportRefs& states) {
  DiagReducer red(ctx.space, mode);
  for (const auto& [w, s] : states) red.add_component(w, *s);
  return red.populations();
}

Mat single_mode_rho(const VariantCtx& ctx, ModeIndex mode, const SupportRefs& states) {
  SingleModeReducer red(ctx.space, mode);
  for (const auto& [w, s] : states) red.add_component(w, *s);
  return red.rho();
}

// Reduced single-mode matrix; diagonal for charge-symmetric mixtures.
Mat reduced_mode_rho(const VariantCtx& ctx, ModeIndex mode, const SupportRefs& states) {
  if (!ctx.phase_symmetric) return single_mode_rho(ctx, mode, states);
  auto p = diag_populations(ctx, mode, states);
  Mat rho = Mat::Zero(p.size(), p.size());
  for (std::size_t k = 0; k < p.size(); ++k) rho(k, k) = p[k];
  return rho;
}

double eval_ep(const VariantCtx& ctx, ModeIndex mode, const SupportRefs& states, LogBase base) {
  if (ctx.phase_symmetric) {
    auto p = diag_populations(ctx, mode, states);
    return entanglement_potential(std::span<const double>(p), base);
  }
  return entanglement_potential(single_mode_rho(ctx, mode, states), base);
}

double eval_ln(const VariantCtx& ctx, ModeIndex x, ModeIndex y, const SupportRefs& states,
               LogBase base) {
  if (ctx.phase_symmetric) {
    if (auto w = pair_block_weights(ctx.charges, x, y)) {
      PairBlockReducer red(ctx.space, x, y, w->first, w->second);
      for (const auto& [wt, s] : states) red.add_component(wt, *s);
      return log_negativity(red, base, kReduceTrim);
    }
  }
  PairDenseReducer red(ctx.space, x, y);
  for (const auto& [wt, s] : states) red.add_component(wt, *s);
  return log_negativity(red, base, kReduceTrim);
}

double eval_gaussian_ln_max_pairs(const VariantCtx& ctx, const SupportRefs& states,
                                  LogBase base) {
  double mx = 0;
  for (ModeIndex x = 0; x < ctx.space.mode_count(); ++x) {
    for (ModeIndex y = x + 1; y < ctx.space.mode_count(); ++y) {
      CovarianceMatrix cm;
      if (ctx.phase_symmetric) {
        if (auto w = pair_block_weights(ctx.charges, x, y)) {
          PairBlockReducer red(ctx.space, x, y, w->first, w->second);
          for (const auto& [wt, s] : states) red.add_component(wt, *s);
          cm = pair_covariance(red.moments());
        } else {
          continue;
        }
      } else {
        PairDenseReducer red(ctx.space, x, y);
        for (const auto& [wt, s] : states) red.add_component(wt, *s);
        FockSpace pair_space({ctx.space.dim(x), ctx.space.dim(y)});
        DensityMatrix rho(pair_space, red.rho(), DensityMatrix::Validate::none);
        cm = covariance(rho, {0, 1});
      }
      mx = std::max(mx, gaussian_log_negativity(cm, {0}, base));
    }
  }
  return mx;
}

// ---- scan machinery ---------------------------------------------------------------------

struct ScanRequest {
  const MeasureRequest* req;
  ModeIndex mode_x = 0, mode_y = 0;
};

ModeIndex mode_index(const VariantCtx& ctx, char label) {
  auto it = ctx.mode_of.find(std::string(1, label));
  if (it == ctx.mode_of.end()) {
    throw std::invalid_argument(std::string("measure refers to unknown mode ") + label);
  }
  return it->second;
}

struct ScanSeries {
  std::vector<double> taus;
  std::map<std::string, std::vector<double>> values;
  double gaussian_max = 0;
  double parity_max = 0;
  Table var_table;  // theta, tau, variance (when requested)
};

// Evaluate the per-tau quantities over an ascending tau list.
ScanSeries scan_variant(const VariantCtx& ctx, const ResolvedPoint& pt,
                        const std::vector<double>& taus,
                        const std::vector<const MeasureRequest*>& reqs, LogBase base,
                        unsigned threads) {
  ScanSeries out;
  out.taus = taus;
  for (const auto* r : reqs) {
    if (r->per_tau_scalar()) out.values[r->name] = std::vector<double>(taus.size(), 0.0);
  }
  bool want_var = false, want_gauss = false, want_parity = false;
  ModeIndex var_mode = 0, parity_mode = 0;
  for (const auto* r : reqs) {
    if (r->kind == MeasureRequest::Kind::var_xtheta) {
      want_var = true;
      var_mode = mode_index(ctx, r->modes[0]);
      out.var_table.columns = {"theta", "tau", "variance"};
    }
    if (r->kind == MeasureRequest::Kind::gaussian_ln_max) want_gauss = true;
    if (r->kind == MeasureRequest::Kind::parity_odd_max) {
      want_parity = true;
      parity_mode = mode_index(ctx, r->modes[0]);
    }
  }

  std::vector<ShellPropagator::Walker> walkers;
  walkers.reserve(ctx.components.size());
  for (const auto& [w, s] : ctx.components) walkers.emplace_back(*ctx.prop, s);

  for (std::size_t g = 0; g < taus.size(); ++g) {
    parallel_for(walkers.size(), threads,
                 [&](std::size_t i) { walkers[i].advance_to(taus[g]); });
    SupportRefs states;
    states.reserve(walkers.size());
    for (std::size_t i = 0; i < walkers.size(); ++i) {
      states.push_back({ctx.components[i].first, &walkers[i].support()});
    }
    for (const auto* r : reqs) {
      switch (r->kind) {
        case MeasureRequest::Kind::ep:
          out.values[r->name][g] = eval_ep(ctx, mode_index(ctx, r->modes[0]), states, base);
          break;
        case MeasureRequest::Kind::ln:
          out.values[r->name][g] = eval_ln(ctx, mode_index(ctx, r->modes[0]),
                                           mode_index(ctx, r->modes[1]), states, base);
          break;
        default:
          break;
      }
    }
    if (want_gauss) {
      out.gaussian_max = std::max(out.gaussian_max, eval_gaussian_ln_max_pairs(ctx, states, base));
    }
    if (want_parity) {
      auto p = diag_populations(ctx, parity_mode, states);
      double odd = 0;
      for (std::size_t k = 1; k < p.size(); k += 2) odd += p[k];
      out.parity_max = std::max(out.parity_max, odd);
    }
    if (want_var) {
      Mat rho = single_mode_rho(ctx, var_mode, states);
      LadderMoments lm = ladder_moments(rho);
      for (std::size_t j = 0; j < pt.theta_points; ++j) {
        double theta = 2.0 * pi * static_cast<double>(j) / static_cast<double>(pt.theta_points);
        out.var_table.rows.push_back(
            {theta, taus[g], quadrature_moments_from(lm, theta).variance});
      }
    }
  }
  return out;
}

// Peak finding with a significance floor: values below the floor count as 0.
FirstPeak find_peak_floored(const std::vector<double>& taus, const std::vector<double>& vals,
                            double floor_value) {
  std::vector<double> v = vals;
  for (auto& x : v) {
    if (x < floor_value) x = 0.0;
  }
  return first_peak(taus, v);
}

struct PeakResult {
  double tau_star;
  double value;
  bool interior;
};

PeakResult refine_peak(const VariantCtx& ctx, const ResolvedPoint& pt, const MeasureRequest& req,
                       const std::vector<double>& taus, const std::vector<double>& series,
                       LogBase base, unsigned threads) {
  FirstPeak coarse = find_peak_floored(taus, series, pt.peak_floor);
  if (!coarse.interior) return {coarse.tau, coarse.value, false};
  std::size_t i = coarse.index;
  double lo = taus[i > 0 ? i - 1 : 0];
  double hi = taus[std::min(i + 1, taus.size() - 1)];
  const std::size_t fine_n = 21;
  std::vector<double> fine(fine_n);
  for (std::size_t k = 0; k < fine_n; ++k) {
    fine[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(fine_n - 1);
  }
  ScanSeries fs = scan_variant(ctx, pt, fine, {&req}, base, threads);
  FirstPeak refined = find_peak_floored(fs.taus, fs.values.at(req.name), pt.peak_floor);
  if (!refined.interior) {
    // Peak sits at the window edge; fall back to the coarse parabola.
    return {coarse.tau, coarse.value, true};
  }
  return {refined.tau, refined.value, true};
}

// ---- anchored state measures ------------------------------------------------------------

void add_distribution_tables(const VariantCtx& ctx, const ResolvedPoint& pt,
                             const SupportRefs& states, MeasureRecord& rec,
                             const std::vector<const MeasureRequest*>& reqs) {
  for (const auto* r : reqs) {
    ModeIndex mode = mode_index(ctx, r->modes[0]);
    switch (r->kind) {
      case MeasureRequest::Kind::pk: {
        auto p = diag_populations(ctx, mode, states);
        Table t;
        t.columns = {"k", "p"};
        for (std::size_t k = 0; k < p.size(); ++k) {
          t.rows.push_back({static_cast<double>(k), p[k]});
        }
        rec.tables[r->name] = std::move(t);
        PhononDistribution dist(p);
        rec.scalars["mean_n_" + r->modes] = dist.mean();
        rec.scalars["parity_odd_" + r->modes] = dist.odd_mass();
        break;
      }
      case MeasureRequest::Kind::klyshko: {
        auto p = diag_populations(ctx, mode, states);
        KlyshkoReport rep = klyshko(PhononDistribution(p));
        Table t;
        t.columns = {"n", "B", "violation"};
        double bmin = 0;
        int count = 0;
        for (const auto& e : rep.entries) {
          t.rows.push_back({static_cast<double>(e.n), e.b, e.violation ? 1.0 : 0.0});
          bmin = std::min(bmin, e.b);
          count += e.violation ? 1 : 0;
        }
        rec.tables[r->name] = std::move(t);
        rec.scalars["klyshko_min_" + r->modes] = bmin;
        rec.scalars["klyshko_violations_" + r->modes] = count;
        break;
      }
      case MeasureRequest::Kind::pdf:
      case MeasureRequest::Kind::distill_universal:
      case MeasureRequest::Kind::distill_nonuniversal:
      case MeasureRequest::Kind::distill_asymptotic: {
        Mat rho = reduced_mode_rho(ctx, mode, states);
        QuadraturePdf pdf = quadrature_pdf(rho, 0.0, pt.quad_grid);
        if (r->kind == MeasureRequest::Kind::pdf) {
          Table t;
          t.columns = {"x", "p"};
          for (std::size_t i = 0; i < pdf.x.size(); ++i) t.rows.push_back({pdf.x[i], pdf.p[i]});
          rec.tables[r->name] = std::move(t);
          rec.scalars["var_x_" + r->modes] = pdf.moments().variance;
        } else if (r->kind == MeasureRequest::Kind::distill_asymptotic) {
          AsymptoticLimit lim = asymptotic_limit(pdf);
          rec.scalars["asymptotic_has_squeezing_" + r->modes] = lim.has_squeezing ? 1.0 : 0.0;
          rec.scalars["asymptotic_log_curvature_" + r->modes] = lim.log_curvature;
          if (lim.has_squeezing) rec.scalars["asymptotic_variance_" + r->modes] = lim.variance;
        } else {
          bool universal = r->kind == MeasureRequest::Kind::distill_universal;
          DistillationTrace trace = universal ? universal_distill(pdf, pt.distill_steps)
                                              : nonuniversal_distill(pdf, pt.distill_steps);
          Table t;
          t.columns = {"step", "copies", "cond_point", "variance", "squeezing_db"};
          for (const auto& s : trace.steps) {
            t.rows.push_back({static_cast<double>(s.step), static_cast<double>(s.copies),
                              s.cond_point, s.variance, s.squeezing_db});
          }
          rec.tables[r->name] = std::move(t);
          rec.scalars[(universal ? "universal_min_variance_" : "nonuniversal_min_variance_") +
                      r->modes] = trace.min_variance();
        }
        break;
      }
      case MeasureRequest::Kind::wigner_min: {
        Mat rho = reduced_mode_rho(ctx, mode, states);
        PhaseSpaceGrid g;
        g.x_min = -pt.wigner_half_width;
        g.x_max = pt.wigner_half_width;
        g.p_min = -pt.wigner_half_width;
        g.p_max = pt.wigner_half_width;
        g.nx = pt.wigner_points;
        g.np = pt.wigner_points;
        rec.scalars["wigner_min_" + r->modes] = wigner_min(rho, g);
        break;
      }
      default:
        break;
    }
  }
}

// ---- lindblad evaluation ----------------------------------------------------------------

std::map<std::string, double> lindblad_measures_at(const VariantCtx& ctx,
                                                   BlockedLindblad& bl,
                                                   const std::vector<const MeasureRequest*>& reqs,
                                                   LogBase base) {
  std::map<std::string, double> out;
  const auto& sectors = bl.shells().sectors();
  auto feed = [&](auto& reducer) {
    for (std::size_t s = 0; s < sectors.size(); ++s) {
      if (bl.blocks()[s].rows() > 0) reducer.add_dm_block(sectors[s].basis, bl.blocks()[s]);
    }
  };
  for (const auto* r : reqs) {
    if (r->kind == MeasureRequest::Kind::ep) {
      ModeIndex mode = mode_index(ctx, r->modes[0]);
      DiagReducer red(ctx.space, mode);
      feed(red);
      auto p = red.populations();
      out[r->name] = entanglement_potential(std::span<const double>(p), base);
    } else if (r->kind == MeasureRequest::Kind::ln) {
      ModeIndex x = mode_index(ctx, r->modes[0]);
      ModeIndex y = mode_index(ctx, r->modes[1]);
      auto w = pair_block_weights(ctx.charges, x, y);
      if (!w) throw std::runtime_error("lindblad ln needs a charge-compatible mode pair");
      PairBlockReducer red(ctx.space, x, y, w->first, w->second);
      feed(red);
      out[r->name] = log_negativity(red, base, kReduceTrim);
    }
  }
  return out;
}

// ---- record assembly per sweep point ----------------------------------------------------

struct PointContext {
  const Scenario* sc;
  const ResolvedPoint* pt;
  LogBase base;
  unsigned threads;
  std::map<std::string, int> dims_override;
  int extra_dims = 0;
};

MeasureRecord evaluate_point(const PointContext& pc) {
  const ResolvedPoint& pt = *pc.pt;
  MeasureRecord rec;
  for (const auto& [name, v] : pt.axis_values) rec.scalars[name] = v;
  for (const auto& [name, v] : pt.axis_tags) rec.tags[name] = v;

  // Partition measures by variant.
  std::vector<const MeasureRequest*> base_reqs, aux_reqs;
  for (const auto& m : pt.measures) {
    (m.variant == MeasureRequest::Variant::aux ? aux_reqs : base_reqs).push_back(&m);
  }

  std::map<MeasureRequest::Variant, VariantCtx> ctxs;
  if (!base_reqs.empty()) {
    ctxs.emplace(MeasureRequest::Variant::base,
                 build_variant(pt, pt.base_system, pc.dims_override, pc.extra_dims,
                               pt.lindblad.has_value()));
  }
  if (!aux_reqs.empty()) {
    ctxs.emplace(MeasureRequest::Variant::aux,
                 build_variant(pt, pt.aux_system, pc.dims_override, pc.extra_dims,
                               pt.lindblad.has_value()));
  }
  for (auto& [variant, ctx] : ctxs) {
    std::string key = variant == MeasureRequest::Variant::aux ? "dims_aux" : "dims_base";
    rec.tags[key] = ctx.space.describe();
  }

  std::vector<double> taus;
  const std::size_t n_tau = static_cast<std::size_t>(std::floor(pt.t_max / pt.dt + 0.5)) + 1;
  for (std::size_t i = 0; i < n_tau; ++i) taus.push_back(static_cast<double>(i) * pt.dt);

  if (!pt.lindblad) {
    // Unitary path: coarse scan per variant, peak refinement, anchored measures.
    std::map<std::string, PeakResult> peaks;
    std::map<MeasureRequest::Variant, ScanSeries> scans;
    for (auto& [variant, ctx] : ctxs) {
      const auto& reqs = variant == MeasureRequest::Variant::aux ? aux_reqs : base_reqs;
      ScanSeries ss = scan_variant(ctx, pt, taus, reqs, pc.base, pc.threads);
      for (const auto* r : reqs) {
        if (r->per_tau_scalar()) {
          PeakResult prr =
              refine_peak(ctx, pt, *r, ss.taus, ss.values.at(r->name), pc.base, pc.threads);
          peaks[r->name] = prr;
          rec.scalars[r->name] = prr.value;
          rec.scalars["tau_star_" + r->name] = prr.tau_star;
          rec.scalars[r->name + "_interior"] = prr.interior ? 1.0 : 0.0;
        }
        if (r->kind == MeasureRequest::Kind::gaussian_ln_max) {
          rec.scalars[r->name] = ss.gaussian_max;
        }
        if (r->kind == MeasureRequest::Kind::parity_odd_max) {
          rec.scalars[r->name] = ss.parity_max;
        }
        if (r->kind == MeasureRequest::Kind::var_xtheta) {
          rec.tables[r->name] = ss.var_table;
        }
      }
      scans.emplace(variant, std::move(ss));
    }
    // Anchored state measures.
    std::vector<const MeasureRequest*> anchored_base, anchored_aux;
    auto anchored = [](MeasureRequest::Kind k) {
      using K = MeasureRequest::Kind;
      return k == K::pk || k == K::klyshko || k == K::pdf || k == K::distill_universal ||
             k == K::distill_nonuniversal || k == K::distill_asymptotic || k == K::wigner_min;
    };
    for (const auto& m : pt.measures) {
      if (anchored(m.kind)) {
        (m.variant == MeasureRequest::Variant::aux ? anchored_aux : anchored_base).push_back(&m);
      }
    }
    if (!anchored_base.empty() || !anchored_aux.empty()) {
      if (!peaks.count(pt.anchor)) {
        throw std::invalid_argument("anchor measure " + pt.anchor +
                                    " is not among the scanned quantities");
      }
      double tau_star = peaks.at(pt.anchor).tau_star;
      rec.scalars["anchor_tau"] = tau_star;
      for (auto& [variant, ctx] : ctxs) {
        const auto& areqs =
            variant == MeasureRequest::Variant::aux ? anchored_aux : anchored_base;
        if (areqs.empty()) continue;
        std::vector<ShellPropagator::Walker> walkers;
        SupportRefs states;
        walkers.reserve(ctx.components.size());
        for (const auto& [w, s] : ctx.components) walkers.emplace_back(*ctx.prop, s);
        parallel_for(walkers.size(), pc.threads,
                     [&](std::size_t i) { walkers[i].advance_to(tau_star); });
        for (std::size_t i = 0; i < walkers.size(); ++i) {
          states.push_back({ctx.components[i].first, &walkers[i].advance_to(tau_star)});
        }
        add_distribution_tables(ctx, pt, states, rec, areqs);
      }
    }
    return rec;
  }

  // Lindblad path.
  const LindbladConfig& lc = *pt.lindblad;
  for (auto& [variant, ctx] : ctxs) {
    const auto& reqs = variant == MeasureRequest::Variant::aux ? aux_reqs : base_reqs;
    std::vector<const MeasureRequest*> scalar_reqs;
    for (const auto* r : reqs) {
      if (r->per_tau_scalar()) scalar_reqs.push_back(r);
    }
    if (scalar_reqs.empty()) continue;
    if (!ctx.phase_symmetric) {
      throw std::invalid_argument("lindblad path requires a charge-symmetric initial state");
    }
    LindbladSpec lspec;
    lspec.rates.assign(ctx.space.mode_count(), lc.lambda);
    lspec.nbar_th = lc.nbar_th;
    auto jumps = jump_terms(lspec);

    // Anchor times from the unitary case.
    std::map<std::string, double> anchor_tau;
    std::vector<double> times;
    if (lc.fixed_time) {
      ScanSeries ss = scan_variant(ctx, pt, taus, scalar_reqs, pc.base, pc.threads);
      for (const auto* r : scalar_reqs) {
        PeakResult prr =
            refine_peak(ctx, pt, *r, ss.taus, ss.values.at(r->name), pc.base, pc.threads);
        anchor_tau[r->name] = prr.tau_star;
        rec.scalars["tau_star_" + r->name] = prr.tau_star;
      }
      for (const auto& [name, t] : anchor_tau) times.push_back(t);
      std::sort(times.begin(), times.end());
      times.erase(std::unique(times.begin(), times.end()), times.end());
    } else {
      times = taus;
    }

    auto integrate = [&](double dt) {
      BlockedLindblad bl(ctx.space, ctx.spec.terms(), ctx.charges, jumps);
      bl.set_initial(ctx.components);
      std::map<std::string, std::vector<double>> series;
      for (const auto* r : scalar_reqs) series[r->name] = {};
      for (double t : times) {
        bl.advance_to(t, dt);
        auto vals = lindblad_measures_at(ctx, bl, scalar_reqs, pc.base);
        for (const auto& [name, v] : vals) series[name].push_back(v);
      }
      double tr = bl.trace();
      if (std::abs(tr - 1.0) > 1e-6 * std::max(1.0, times.empty() ? 1.0 : times.back())) {
        throw std::runtime_error("lindblad: trace drift " + format_double(std::abs(tr - 1.0)));
      }
      if (bl.min_block_eigenvalue() < -1e-5) {
        throw std::runtime_error("lindblad: positivity violation (truncation inadequate)");
      }
      return series;
    };
    double dt = 0.01;
    auto series = integrate(dt);
    bool converged = false;
    for (int halving = 0; halving < 10; ++halving) {
      dt *= 0.5;
      auto finer = integrate(dt);
      double diff = 0;
      for (const auto& [name, v] : series) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          diff = std::max(diff, std::abs(v[i] - finer.at(name)[i]));
        }
      }
      series = std::move(finer);
      if (diff < 1e-6) {
        converged = true;
        break;
      }
    }
    if (!converged) throw std::runtime_error("lindblad: step halving did not converge");
    rec.scalars["lindblad_dt"] = dt;

    if (lc.fixed_time) {
      for (const auto* r : scalar_reqs) {
        double t = anchor_tau.at(r->name);
        std::size_t idx =
            static_cast<std::size_t>(std::find(times.begin(), times.end(), t) - times.begin());
        rec.scalars[r->name] = series.at(r->name)[idx];
      }
    } else {
      Table t;
      t.columns = {"tau"};
      for (const auto* r : scalar_reqs) t.columns.push_back(r->name);
      for (std::size_t i = 0; i < times.size(); ++i) {
        std::vector<double> row = {times[i]};
        for (const auto* r : scalar_reqs) row.push_back(series.at(r->name)[i]);
        t.rows.push_back(std::move(row));
      }
      rec.tables[variant == MeasureRequest::Variant::aux ? "series_aux" : "series_base"] =
          std::move(t);
    }
  }
  return rec;
}

}  // namespace

json effective_config(const Scenario& sc, const RunOptions& opts) {
  json eff;
  eff["document"] = sc.document;
  eff["version"] = kLibraryVersion;
  if (opts.log_base_override) {
    eff["log_base_override"] = *opts.log_base_override == LogBase::two ? "2" : "e";
  }
  if (!opts.dims_override.empty()) eff["dims_override"] = opts.dims_override;
  return eff;
}

RunOutcome run_scenario(const Scenario& sc, const RunOptions& opts) {
  RunOutcome out;
  json eff = effective_config(sc, opts);
  std::string key = SweepCache::key_of(eff);

  std::unique_ptr<SweepCache> cache;
  if (!opts.cache_dir.empty()) {
    cache = std::make_unique<SweepCache>(opts.cache_dir);
    if (auto hit = cache->load(key)) {
      out.series = *hit;
      out.from_cache = true;
      return out;
    }
  }

  bool verify = opts.verify_dims_override.value_or(sc.verify_dims);

  out.series.scenario_id = sc.id;
  out.series.provenance = json{{"config_hash", key},
                               {"library_version", kLibraryVersion},
                               {"scenario_id", sc.id},
                               {"title", sc.title},
                               {"verified_dims", verify}};

  for (std::size_t i = 0; i < sc.points.size(); ++i) {
    PointContext pc;
    pc.sc = &sc;
    pc.pt = &sc.points[i];
    pc.base = opts.log_base_override.value_or(sc.points[i].log_base);
    pc.threads = opts.threads;
    pc.dims_override = opts.dims_override;
    pc.extra_dims = 0;
    MeasureRecord rec;
    try {
      rec = evaluate_point(pc);
    } catch (const std::exception& e) {
      throw std::runtime_error("scenario " + sc.id + ", sweep point " + std::to_string(i) +
                               ": " + e.what());
    }
    if (verify) {
      pc.extra_dims = 2;
      MeasureRecord rec2 = evaluate_point(pc);
      for (const auto& [name, v] : rec.scalars) {
        double v2 = rec2.scalars.count(name) ? rec2.scalars.at(name) : v;
        if (std::abs(v - v2) >= 1e-4) {
          out.convergence_ok = false;
          out.convergence_failures.push_back(sc.id + " point " + std::to_string(i) + " " + name +
                                             " drift " + format_double(std::abs(v - v2)));
        }
      }
      for (const auto& [name, table] : rec.tables) {
        if (!rec2.tables.count(name)) continue;
        const Table& t2 = rec2.tables.at(name);
        if (t2.rows.size() != table.rows.size()) {
          out.convergence_ok = false;
          out.convergence_failures.push_back(sc.id + " point " + std::to_string(i) + " table " +
                                             name + " shape drift");
          continue;
        }
        double drift = 0;
        for (std::size_t r2 = 0; r2 < table.rows.size(); ++r2) {
          for (std::size_t c2 = 0; c2 < table.rows[r2].size(); ++c2) {
            drift = std::max(drift, std::abs(table.rows[r2][c2] - t2.rows[r2][c2]));
          }
        }
        if (drift >= 1e-4) {
          out.convergence_ok = false;
          out.convergence_failures.push_back(sc.id + " point " + std::to_string(i) + " table " +
                                             name + " drift " + format_double(drift));
        }
      }
    }
    out.series.records.push_back(std::move(rec));
  }

  if (cache && out.convergence_ok) cache->store(key, out.series);
  return out;
}

}  // namespace qsplit
