#include "qsplit/lindblad.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace qsplit {

namespace {

using JumpPair = std::pair<SpMat, SpMat>;  // (L, L^dag L)

Mat dense_rhs(const Mat& rho, const SpMat& h, const std::vector<JumpPair>& jumps) {
  const cplx I(0.0, 1.0);
  Mat d = -I * (h * rho);
  d += I * (rho * h);
  for (const auto& [l, ldl] : jumps) {
    Mat lr = l * rho;
    d += lr * SpMat(l.adjoint());
    Mat anti = ldl * rho;
    anti += rho * ldl;
    d -= 0.5 * anti;
  }
  return d;
}

void rk4_step(Mat& rho, double h, const SpMat& ham, const std::vector<JumpPair>& jumps) {
  Mat k1 = dense_rhs(rho, ham, jumps);
  Mat k2 = dense_rhs(rho + (0.5 * h) * k1, ham, jumps);
  Mat k3 = dense_rhs(rho + (0.5 * h) * k2, ham, jumps);
  Mat k4 = dense_rhs(rho + h * k3, ham, jumps);
  rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  rho = 0.5 * (rho + rho.adjoint()).eval();
}

std::vector<Mat> integrate_grid(const Mat& rho0, const SpMat& ham,
                                const std::vector<JumpPair>& jumps, const TimeGrid& grid,
                                double dt) {
  std::vector<Mat> out;
  out.reserve(grid.size());
  Mat rho = rho0;
  double t = 0.0;
  for (double target : grid.tau) {
    double span = target - t;
    if (span > 0) {
      int n = static_cast<int>(std::ceil(span / dt - 1e-12));
      double h = span / n;
      for (int i = 0; i < n; ++i) rk4_step(rho, h, ham, jumps);
    }
    t = target;
    out.push_back(rho);
  }
  return out;
}

}  // namespace

std::vector<DensityMatrix> lindblad_evolve(const OperatorMatrix& h,
                                           const std::vector<OperatorMatrix>& jumps,
                                           const DensityMatrix& rho0, const TimeGrid& grid,
                                           LindbladOptions opts) {
  if (h.space() != rho0.space()) throw std::invalid_argument("lindblad_evolve: space mismatch");
  std::vector<JumpPair> jp;
  for (const auto& j : jumps) {
    if (j.space() != h.space()) throw std::invalid_argument("lindblad_evolve: jump space mismatch");
    jp.push_back({j.sparse(), SpMat(j.sparse().adjoint() * j.sparse())});
  }
  double dt = std::min(opts.initial_dt, grid.tau.back() > 0 ? grid.tau.back() : opts.initial_dt);
  std::vector<Mat> coarse = integrate_grid(rho0.elements(), h.sparse(), jp, grid, dt);
  std::vector<Mat> fine;
  bool converged = false;
  for (int halving = 0; halving < opts.max_halvings; ++halving) {
    dt *= 0.5;
    if (dt < 1e-12) break;
    fine = integrate_grid(rho0.elements(), h.sparse(), jp, grid, dt);
    double diff = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      diff = std::max(diff, (fine[g] - coarse[g]).norm());
    }
    coarse = std::move(fine);
    if (diff < opts.observable_tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw std::runtime_error("lindblad_evolve: step size underflow without convergence");
  }
  std::vector<DensityMatrix> out;
  out.reserve(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double tr_err = std::abs(coarse[g].trace().real() - 1.0) + std::abs(coarse[g].trace().imag());
    if (tr_err > opts.trace_tol * std::max(1.0, grid.tau[g])) {
      throw std::runtime_error("lindblad_evolve: trace drift " + format_double(tr_err));
    }
    if (coarse[g].rows() <= 1024) {
      Eigen::SelfAdjointEigenSolver<Mat> es(coarse[g], Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < opts.positivity_floor) {
        throw std::runtime_error("lindblad_evolve: positivity violation (truncation inadequate)");
      }
    }
    out.emplace_back(rho0.space(), coarse[g], DensityMatrix::Validate::none);
  }
  return out;
}

BlockedLindblad::BlockedLindblad(FockSpace space, std::vector<Monomial> h_terms,
                                 std::vector<std::vector<long>> charges,
                                 std::vector<LadderJump> jumps)
    : space_(std::move(space)), shells_(space_, std::move(charges)) {
  const auto& sectors = shells_.sectors();
  const std::size_t ns = sectors.size();

  std::map<std::vector<long>, std::size_t> lookup;
  for (std::size_t s = 0; s < ns; ++s) lookup[sectors[s].key] = s;

  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> index_of(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    index_of[s].reserve(2 * sectors[s].basis.size());
    for (std::size_t i = 0; i < sectors[s].basis.size(); ++i) {
      index_of[s].emplace(sectors[s].basis[i], static_cast<std::uint32_t>(i));
    }
  }

  auto restrict_to = [&](const std::vector<Monomial>& terms, std::size_t src,
                         std::size_t dst) -> SpMat {
    std::vector<Eigen::Triplet<cplx>> trip;
    std::vector<int> occ(space_.mode_count()), out(space_.mode_count());
    for (std::size_t col = 0; col < sectors[src].basis.size(); ++col) {
      space_.unpack(sectors[src].basis[col], occ);
      for (const auto& t : terms) {
        cplx amp;
        if (t.apply(occ, space_.dims(), out, amp)) {
          auto row = index_of[dst].find(space_.pack(out));
          if (row == index_of[dst].end()) throw std::logic_error("blocked: term leaves target sector");
          trip.emplace_back(static_cast<int>(row->second), static_cast<int>(col), amp);
        }
      }
    }
    SpMat m(sectors[dst].basis.size(), sectors[src].basis.size());
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
  };

  h_blocks_.reserve(ns);
  for (std::size_t s = 0; s < ns; ++s) h_blocks_.push_back(restrict_to(h_terms, s, s));

  for (const auto& j : jumps) {
    JumpBlocks jb;
    jb.target.assign(ns, -1);
    jb.block.resize(ns);
    jb.block_adj.resize(ns);
    jb.ldl.resize(ns);
    Monomial m = j.monomial();
    auto shift = m.mode_shift(space_.mode_count());
    for (std::size_t s = 0; s < ns; ++s) {
      std::vector<long> tkey = sectors[s].key;
      for (std::size_t c = 0; c < shells_.charges().size(); ++c) {
        long dq = 0;
        for (std::size_t md = 0; md < shift.size(); ++md) {
          dq += shells_.charges()[c][md] * shift[md];
        }
        tkey[c] += dq;
      }
      // L^dag L from the truncated block keeps the flow exactly trace-free.
      auto it = lookup.find(tkey);
      if (it != lookup.end()) {
        jb.target[s] = static_cast<int>(it->second);
        jb.block[s] = restrict_to({m}, s, it->second);
        jb.block_adj[s] = SpMat(jb.block[s].adjoint());
        jb.ldl[s] = SpMat(jb.block_adj[s] * jb.block[s]);
      } else {
        jb.ldl[s] = SpMat(sectors[s].basis.size(), sectors[s].basis.size());
      }
      jb.ldl[s].makeCompressed();
    }
    jumps_.push_back(std::move(jb));
  }
  active_.assign(ns, 0);
  rho_.assign(ns, Mat());
}

void BlockedLindblad::set_initial(const std::vector<std::pair<double, Support>>& components) {
  const auto& sectors = shells_.sectors();
  for (auto& m : rho_) m = Mat();
  std::fill(active_.begin(), active_.end(), 0);
  tau_ = 0.0;

  std::map<std::vector<long>, std::size_t> lookup;
  for (std::size_t s = 0; s < sectors.size(); ++s) lookup[sectors[s].key] = s;

  for (const auto& [w, support] : components) {
    if (support.empty()) continue;
    std::size_t sid = lookup.at(shells_.key_of_packed(support.front().first));
    std::unordered_map<std::uint64_t, std::uint32_t> idx;
    for (std::size_t i = 0; i < sectors[sid].basis.size(); ++i) {
      idx.emplace(sectors[sid].basis[i], static_cast<std::uint32_t>(i));
    }
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(sectors[sid].basis.size());
    for (const auto& [key, amp] : support) {
      auto it = idx.find(key);
      if (it == idx.end()) throw std::invalid_argument("blocked: component spans sectors");
      v[it->second] = amp;
    }
    if (!active_[sid]) {
      rho_[sid] = Mat::Zero(v.size(), v.size());
      active_[sid] = 1;
    }
    rho_[sid].noalias() += w * (v * v.adjoint());
  }

  // Close the active set under jump-induced sector shifts.
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& jb : jumps_) {
      for (std::size_t s = 0; s < active_.size(); ++s) {
        if (active_[s] && jb.target[s] >= 0 && !active_[jb.target[s]]) {
          std::size_t t = static_cast<std::size_t>(jb.target[s]);
          rho_[t] = Mat::Zero(sectors[t].basis.size(), sectors[t].basis.size());
          active_[t] = 1;
          grew = true;
        }
      }
    }
  }
}

void BlockedLindblad::rhs(const std::vector<Mat>& state, std::vector<Mat>& out) const {
  const cplx I(0.0, 1.0);
  for (std::size_t s = 0; s < state.size(); ++s) {
    if (!active_[s]) continue;
    out[s].noalias() = (-I) * (h_blocks_[s] * state[s]);
    out[s].noalias() += I * (state[s] * h_blocks_[s]);
    for (const auto& jb : jumps_) {
      Mat anti = jb.ldl[s] * state[s];
      anti += state[s] * jb.ldl[s];
      out[s].noalias() -= 0.5 * anti;
    }
  }
  for (const auto& jb : jumps_) {
    for (std::size_t s = 0; s < state.size(); ++s) {
      if (!active_[s] || jb.target[s] < 0) continue;
      std::size_t t = static_cast<std::size_t>(jb.target[s]);
      if (!active_[t]) continue;
      Mat lr = jb.block[s] * state[s];
      out[t].noalias() += lr * jb.block_adj[s];
    }
  }
}

void BlockedLindblad::advance_to(double tau, double dt) {
  if (tau < tau_ - 1e-15) throw std::invalid_argument("BlockedLindblad: tau must be nondecreasing");
  double span = tau - tau_;
  if (span <= 0) return;
  int n = static_cast<int>(std::ceil(span / dt - 1e-12));
  double h = span / n;
  std::vector<Mat> k1(rho_.size()), k2(rho_.size()), k3(rho_.size()), k4(rho_.size()),
      tmp(rho_.size());
  for (std::size_t s = 0; s < rho_.size(); ++s) {
    if (active_[s]) {
      k1[s] = k2[s] = k3[s] = k4[s] = tmp[s] = Mat::Zero(rho_[s].rows(), rho_[s].cols());
    }
  }
  auto axpy = [&](std::vector<Mat>& dst, const std::vector<Mat>& base,
                  const std::vector<Mat>& dir, double c) {
    for (std::size_t s = 0; s < dst.size(); ++s) {
      if (active_[s]) dst[s] = base[s] + c * dir[s];
    }
  };
  for (int i = 0; i < n; ++i) {
    rhs(rho_, k1);
    axpy(tmp, rho_, k1, 0.5 * h);
    rhs(tmp, k2);
    axpy(tmp, rho_, k2, 0.5 * h);
    rhs(tmp, k3);
    axpy(tmp, rho_, k3, h);
    rhs(tmp, k4);
    for (std::size_t s = 0; s < rho_.size(); ++s) {
      if (!active_[s]) continue;
      rho_[s] += (h / 6.0) * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
      rho_[s] = 0.5 * (rho_[s] + rho_[s].adjoint()).eval();
    }
  }
  tau_ = tau;
}

double BlockedLindblad::trace() const {
  double tr = 0;
  for (std::size_t s = 0; s < rho_.size(); ++s) {
    if (active_[s]) tr += rho_[s].trace().real();
  }
  return tr;
}

double BlockedLindblad::min_block_eigenvalue() const {
  double lo = 0;
  for (std::size_t s = 0; s < rho_.size(); ++s) {
    if (!active_[s] || rho_[s].rows() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Mat> es(rho_[s], Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
  }
  return lo;
}

}  // namespace qsplit
