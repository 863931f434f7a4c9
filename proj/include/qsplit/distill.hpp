#pragma once

#include "qsplit/measures.hpp"

namespace qsplit {

/// One record per distillation round; step k consumes 2^k copies.
struct DistillationStep {
  int step;
  long copies;
  double cond_point;    // conditioning point c (0 for the universal map)
  double variance;      // Var(x) in units where shot noise is 1/2
  double squeezing_db;  // 10 log10(V / 0.5)
};

struct DistillationTrace {
  std::vector<DistillationStep> steps;  // step 0 records the input
  double min_variance() const;
};

/// Iterated two-copy interference with conditioning at the distribution's
/// global maximum: recentre on the refined maximum, then
/// P <- normalise(P(x/sqrt2)^2). Gaussians are exact fixed points.
DistillationTrace universal_distill(const QuadraturePdf& p, int steps);

/// Fixed point of the universal map, from the log-density curvature at the
/// refined global maximum: V_inf = -1 / (d^2 ln P / dx^2)|_{x_m}.
/// `has_squeezing` is false when the curvature is non-negative (no universal
/// squeezing available).
struct AsymptoticLimit {
  bool has_squeezing;
  double variance;
  double log_curvature;
};
AsymptoticLimit asymptotic_limit(const QuadraturePdf& p);

/// Conditioning point optimised per step by golden-section search (seeded by
/// a coarse scan): P <- normalise(P((x+c)/sqrt2) P((x-c)/sqrt2)).
DistillationTrace nonuniversal_distill(const QuadraturePdf& p, int steps);

}  // namespace qsplit
