#include "qsplit/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qsplit {

namespace {

// Catmull-Rom cubic interpolation on the uniform grid; zero outside.
double interpolate(const QuadraturePdf& p, double x) {
  const double t = (x - p.x.front()) / p.dx;
  if (t < 0 || t > static_cast<double>(p.x.size() - 1)) return 0.0;
  const long i = std::clamp<long>(static_cast<long>(std::floor(t)), 0,
                                  static_cast<long>(p.x.size()) - 2);
  const double f = t - static_cast<double>(i);
  const long n = static_cast<long>(p.x.size());
  auto at = [&](long k) { return (k < 0 || k >= n) ? 0.0 : p.p[k]; };
  const double y0 = at(i - 1), y1 = at(i), y2 = at(i + 1), y3 = at(i + 2);
  const double a = -0.5 * y0 + 1.5 * y1 - 1.5 * y2 + 0.5 * y3;
  const double b = y0 - 2.5 * y1 + 2.0 * y2 - 0.5 * y3;
  const double c = -0.5 * y0 + 0.5 * y2;
  return std::max(0.0, ((a * f + b) * f + c) * f + y1);
}

void renormalise(QuadraturePdf& p) {
  double s = p.riemann_sum();
  if (!(s > 0)) throw std::runtime_error("distill: normalisation failure");
  for (auto& v : p.p) v /= s;
}

// Global maximum with parabolic refinement; ties break to the smallest x.
double refined_maximum(const QuadraturePdf& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.p.size(); ++i) {
    if (p.p[i] > p.p[best]) best = i;
  }
  if (best == 0 || best + 1 == p.p.size()) {
    throw std::runtime_error("distill: maximum at grid boundary (grid too narrow)");
  }
  const double y0 = p.p[best - 1], y1 = p.p[best], y2 = p.p[best + 1];
  const double denom = y0 - 2 * y1 + y2;
  if (denom >= 0) return p.x[best];
  return p.x[best] + 0.5 * p.dx * (y0 - y2) / denom;
}

QuadraturePdf shift(const QuadraturePdf& p, double x0) {
  QuadraturePdf out = p;
  for (std::size_t i = 0; i < p.x.size(); ++i) out.p[i] = interpolate(p, p.x[i] + x0);
  renormalise(out);
  return out;
}

// P_out(x) proportional to P((x+c)/sqrt2) P((x-c)/sqrt2).
QuadraturePdf condition_step(const QuadraturePdf& p, double c) {
  QuadraturePdf out = p;
  const double s = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    out.p[i] = interpolate(p, (p.x[i] + c) * s) * interpolate(p, (p.x[i] - c) * s);
  }
  renormalise(out);
  return out;
}

double variance_of(const QuadraturePdf& p) { return p.moments().variance; }

DistillationStep record(int step, double c, double v) {
  return DistillationStep{step, 1L << step, c, v, 10.0 * std::log10(v / 0.5)};
}

}  // namespace

double DistillationTrace::min_variance() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& s : steps) v = std::min(v, s.variance);
  return v;
}

DistillationTrace universal_distill(const QuadraturePdf& p, int steps) {
  if (steps < 1) throw std::invalid_argument("universal_distill: steps must be >= 1");
  DistillationTrace trace;
  QuadraturePdf cur = p;
  trace.steps.push_back(record(0, 0.0, variance_of(cur)));
  for (int k = 1; k <= steps; ++k) {
    double xm = refined_maximum(cur);
    if (xm != 0.0) cur = shift(cur, xm);
    cur = condition_step(cur, 0.0);
    trace.steps.push_back(record(k, xm, variance_of(cur)));
  }
  return trace;
}

AsymptoticLimit asymptotic_limit(const QuadraturePdf& p) {
  double xm = refined_maximum(p);
  // Five-point central differences of ln P at the refined maximum.
  const double h = p.dx;
  double lp[5];
  for (int k = -2; k <= 2; ++k) {
    double v = interpolate(p, xm + k * h);
    if (!(v > 0)) throw std::runtime_error("asymptotic_limit: density vanishes near maximum");
    lp[k + 2] = std::log(v);
  }
  double curv = (-lp[0] + 16 * lp[1] - 30 * lp[2] + 16 * lp[3] - lp[4]) / (12 * h * h);
  AsymptoticLimit lim;
  lim.log_curvature = curv;
  if (curv >= 0) {
    lim.has_squeezing = false;
    lim.variance = std::numeric_limits<double>::quiet_NaN();
  } else {
    lim.has_squeezing = true;
    lim.variance = -1.0 / curv;
  }
  return lim;
}

DistillationTrace nonuniversal_distill(const QuadraturePdf& p, int steps) {
  if (steps < 1) throw std::invalid_argument("nonuniversal_distill: steps must be >= 1");
  DistillationTrace trace;
  QuadraturePdf cur = p;
  trace.steps.push_back(record(0, 0.0, variance_of(cur)));
  const double span = 0.5 * (cur.x.back() - cur.x.front());
  for (int k = 1; k <= steps; ++k) {
    double xm = refined_maximum(cur);
    if (xm != 0.0) cur = shift(cur, xm);
    auto post_var = [&](double c) { return variance_of(condition_step(cur, c)); };
    // Coarse scan seeds a golden-section bracket; c >= 0 by symmetry of the map.
    const int coarse = 64;
    double best_c = 0, best_v = post_var(0.0);
    for (int i = 1; i <= coarse; ++i) {
      double c = span * static_cast<double>(i) / coarse;
      double v = post_var(c);
      if (v < best_v) {
        best_v = v;
        best_c = c;
      }
    }
    double lo = std::max(0.0, best_c - span / coarse);
    double hi = std::min(span, best_c + span / coarse);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c1 = hi - gr * (hi - lo), c2 = lo + gr * (hi - lo);
    double f1 = post_var(c1), f2 = post_var(c2);
    for (int it = 0; it < 60 && (hi - lo) > 1e-10 * span; ++it) {
      if (f1 < f2) {
        hi = c2;
        c2 = c1;
        f2 = f1;
        c1 = hi - gr * (hi - lo);
        f1 = post_var(c1);
      } else {
        lo = c1;
        c1 = c2;
        f1 = f2;
        c2 = lo + gr * (hi - lo);
        f2 = post_var(c2);
      }
    }
    double c_opt = (f1 < f2) ? c1 : c2;
    double v_opt = std::min(f1, f2);
    if (best_v < v_opt) {
      c_opt = best_c;
      v_opt = best_v;
    }
    cur = condition_step(cur, c_opt);
    trace.steps.push_back(record(k, c_opt, variance_of(cur)));
  }
  return trace;
}

}  // namespace qsplit
