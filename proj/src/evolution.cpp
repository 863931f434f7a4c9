#include "qsplit/evolution.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace qsplit {

TimeGrid::TimeGrid(std::vector<double> t) : tau(std::move(t)) {
  if (tau.empty()) throw std::invalid_argument("TimeGrid: empty");
  if (tau.front() < 0) throw std::invalid_argument("TimeGrid: tau must be >= 0");
  for (std::size_t i = 1; i < tau.size(); ++i) {
    if (tau[i] <= tau[i - 1]) throw std::invalid_argument("TimeGrid: not strictly increasing");
  }
}

TimeGrid TimeGrid::uniform(double t_max, double dt, double t0) {
  if (dt <= 0 || t_max < t0) throw std::invalid_argument("TimeGrid: bad uniform grid");
  std::vector<double> t;
  std::size_t n = static_cast<std::size_t>(std::floor((t_max - t0) / dt + 0.5)) + 1;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back(t0 + static_cast<double>(i) * dt);
  return TimeGrid(std::move(t));
}

namespace {

bool nearly_equal(double a, double b) {
  double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= 1e-12 * scale;
}

FirstPeak parabolic_refine(std::span<const double> tau, std::span<const double> value,
                           std::size_t i) {
  const double t0 = tau[i - 1], t1 = tau[i], t2 = tau[i + 1];
  const double v0 = value[i - 1], v1 = value[i], v2 = value[i + 1];
  // Quadratic through the bracketing triple; fall back to the sample when flat.
  const double d01 = (v1 - v0) / (t1 - t0);
  const double d12 = (v2 - v1) / (t2 - t1);
  const double curv = (d12 - d01) / (t2 - t0);
  FirstPeak p;
  p.index = i;
  p.interior = true;
  if (curv >= 0) {
    p.tau = t1;
    p.value = v1;
    return p;
  }
  double tv = 0.5 * (t0 + t1 - d01 / curv);
  tv = std::clamp(tv, t0, t2);
  // Evaluate the fitted quadratic at its vertex.
  p.tau = tv;
  p.value = v0 + d01 * (tv - t0) + curv * (tv - t0) * (tv - t1);
  return p;
}

}  // namespace

FirstPeak first_peak(std::span<const double> tau, std::span<const double> value) {
  if (tau.size() != value.size()) throw std::invalid_argument("first_peak: size mismatch");
  const std::size_t n = tau.size();
  if (n < 3) throw std::invalid_argument("first_peak: need at least 3 points");
  std::size_t i = 1;
  while (i + 1 <= n - 1) {
    if (value[i] > value[i - 1] && !nearly_equal(value[i], value[i - 1])) {
      // Risen to value[i]; find the plateau end.
      std::size_t j = i;
      while (j + 1 <= n - 1 && nearly_equal(value[j + 1], value[j])) ++j;
      if (j <= n - 2 && value[j + 1] < value[j] && !nearly_equal(value[j + 1], value[j])) {
        if (j == i) return parabolic_refine(tau, value, i);
        // Plateau followed by decline: earliest plateau point wins.
        FirstPeak p;
        p.index = i;
        p.tau = tau[i];
        p.value = value[i];
        p.interior = true;
        return p;
      }
      i = j + 1;
    } else {
      ++i;
    }
  }
  // No interior maximum: report the (first) global maximum, flagged.
  FirstPeak p;
  p.index = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (value[k] > value[p.index]) p.index = k;
  }
  p.tau = tau[p.index];
  p.value = value[p.index];
  p.interior = false;
  return p;
}

ShellDecomposition::ShellDecomposition(const FockSpace& space,
                                       std::vector<std::vector<long>> charges)
    : space_(space), charges_(std::move(charges)) {
  for (const auto& w : charges_) {
    if (w.size() != space_.mode_count()) {
      throw std::invalid_argument("ShellDecomposition: charge weight length mismatch");
    }
  }
  // Linear sweep of the space, grouping states by joint charge value.
  std::map<std::vector<long>, std::uint32_t> ids;
  std::vector<int> occ(space_.mode_count());
  std::vector<long> key(charges_.size());
  for (std::size_t flat = 0; flat < space_.total_dim(); ++flat) {
    space_.unflatten(flat, occ);
    for (std::size_t c = 0; c < charges_.size(); ++c) {
      long q = 0;
      for (std::size_t m = 0; m < occ.size(); ++m) q += charges_[c][m] * occ[m];
      key[c] = q;
    }
    auto [it, inserted] = ids.try_emplace(key, static_cast<std::uint32_t>(sectors_.size()));
    if (inserted) sectors_.push_back({key, {}});
    sectors_[it->second].basis.push_back(space_.pack_flat(flat));
  }
}

std::vector<long> ShellDecomposition::key_of_packed(std::uint64_t key) const {
  std::vector<int> occ(space_.mode_count());
  space_.unpack(key, occ);
  std::vector<long> out(charges_.size());
  for (std::size_t c = 0; c < charges_.size(); ++c) {
    long q = 0;
    for (std::size_t m = 0; m < occ.size(); ++m) q += charges_[c][m] * occ[m];
    out[c] = q;
  }
  return out;
}

std::size_t ShellDecomposition::sector_of_packed(std::uint64_t key) const {
  auto target = key_of_packed(key);
  for (std::size_t s = 0; s < sectors_.size(); ++s) {
    if (sectors_[s].key == target) return s;
  }
  throw std::logic_error("sector_of_packed: no sector");
}

std::uint64_t ShellDecomposition::key_hash(const std::vector<long>& key) const {
  std::uint64_t h = 1469598103934665603ull;
  for (long v : key) {
    h ^= static_cast<std::uint64_t>(v);
    h *= 1099511628211ull;
  }
  return h;
}

ShellPropagator::ShellPropagator(FockSpace space, std::vector<Monomial> terms,
                                 std::vector<std::vector<long>> charges, PropagatorOptions opts)
    : space_(std::move(space)),
      terms_(std::move(terms)),
      shells_(space_, std::move(charges)),
      opts_(opts) {}

const ShellPropagator::SectorData& ShellPropagator::sector_data(std::size_t sector_id) const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto it = cache_.find(sector_id);
  if (it != cache_.end()) return *it->second;

  auto sd = std::make_unique<SectorData>();
  sd->sector = &shells_.sectors().at(sector_id);
  const auto& basis = sd->sector->basis;
  const std::size_t dim = basis.size();
  max_dim_touched_ = std::max(max_dim_touched_, dim);
  sd->index_of.reserve(2 * dim);
  for (std::size_t i = 0; i < dim; ++i) sd->index_of.emplace(basis[i], static_cast<std::uint32_t>(i));

  std::vector<Eigen::Triplet<cplx>> trip;
  std::vector<int> occ(space_.mode_count()), out(space_.mode_count());
  for (std::size_t col = 0; col < dim; ++col) {
    space_.unpack(basis[col], occ);
    for (const auto& t : terms_) {
      cplx amp;
      if (t.apply(occ, space_.dims(), out, amp)) {
        auto row = sd->index_of.find(space_.pack(out));
        if (row == sd->index_of.end()) {
          throw std::logic_error("ShellPropagator: term leaves its sector");
        }
        trip.emplace_back(static_cast<int>(row->second), static_cast<int>(col), amp);
      }
    }
  }
  sd->h.resize(dim, dim);
  sd->h.setFromTriplets(trip.begin(), trip.end());

  if (dim <= opts_.dense_eig_max_dim) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(sd->h));
    if (es.info() != Eigen::Success) throw std::runtime_error("sector eigendecomposition failed");
    sd->evals = es.eigenvalues();
    sd->evecs = es.eigenvectors();
    sd->has_eig = true;
  } else {
    // Gershgorin bounds for the Chebyshev expansion interval.
    Eigen::VectorXd diag(dim), radius(dim);
    diag.setZero();
    radius.setZero();
    for (int k = 0; k < sd->h.outerSize(); ++k) {
      for (SpMat::InnerIterator it2(sd->h, k); it2; ++it2) {
        if (it2.row() == it2.col()) {
          diag[it2.row()] += it2.value().real();
        } else {
          radius[it2.row()] += std::abs(it2.value());
        }
      }
    }
    double lo = (diag - radius).minCoeff();
    double hi = (diag + radius).maxCoeff();
    sd->cheb_center = 0.5 * (hi + lo);
    sd->cheb_radius = std::max(0.5 * (hi - lo), 1e-12);
  }
  auto [ins, ok] = cache_.emplace(sector_id, std::move(sd));
  (void)ok;
  return *ins->second;
}

void ShellPropagator::chebyshev_step(const SectorData& sd, Eigen::VectorXcd& psi,
                                     double dtau) const {
  if (dtau == 0.0) return;
  const double z = sd.cheb_radius * dtau;
  const cplx phase = std::polar(1.0, -sd.cheb_center * dtau);
  // exp(-i H dt) = phase * sum_k (2 - d_k0) (-i)^k J_k(z) T_k(H_scaled)
  const double scale = 1.0 / sd.cheb_radius;
  const cplx shift = -sd.cheb_center * scale;
  auto apply_scaled = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd {
    Eigen::VectorXcd r = scale * (sd.h * v);
    r += shift * v;
    return r;
  };
  Eigen::VectorXcd tkm1 = psi;
  Eigen::VectorXcd tk = apply_scaled(psi);
  Eigen::VectorXcd acc = std::cyl_bessel_j(0, z) * tkm1;
  cplx ik(0.0, -1.0);
  acc += 2.0 * ik * std::cyl_bessel_j(1, z) * tk;
  const int k_cap = static_cast<int>(z) + 300;
  int quiet = 0;
  for (int k = 2; k <= k_cap; ++k) {
    Eigen::VectorXcd tkp1 = 2.0 * apply_scaled(tk) - tkm1;
    tkm1.swap(tk);
    tk.swap(tkp1);
    ik *= cplx(0.0, -1.0);
    double jk = std::cyl_bessel_j(static_cast<unsigned>(k), z);
    acc += (2.0 * jk) * ik * tk;
    if (std::abs(jk) < opts_.chebyshev_tol && k > static_cast<int>(z)) {
      if (++quiet >= 3) break;
    } else {
      quiet = 0;
    }
  }
  psi = phase * acc;
}

ShellPropagator::Walker::Walker(const ShellPropagator& prop, const Support& init)
    : prop_(&prop) {
  // Split the initial support into sector-local slices.
  std::map<std::size_t, std::vector<std::pair<std::uint64_t, cplx>>> by_sector;
  std::map<std::vector<long>, std::size_t> sector_lookup;
  for (std::size_t s = 0; s < prop.shells_.sectors().size(); ++s) {
    sector_lookup[prop.shells_.sectors()[s].key] = s;
  }
  for (const auto& [key, amp] : init) {
    by_sector[sector_lookup.at(prop.shells_.key_of_packed(key))].push_back({key, amp});
  }
  for (auto& [sid, entries] : by_sector) {
    const auto& sd = prop.sector_data(sid);
    Eigen::VectorXcd local = Eigen::VectorXcd::Zero(sd.sector->basis.size());
    for (const auto& [key, amp] : entries) local[sd.index_of.at(key)] = amp;
    Slice slice;
    slice.sector = sid;
    slice.use_eig = sd.has_eig;
    if (sd.has_eig) {
      slice.coeff = sd.evecs.adjoint() * local;
    } else {
      slice.state = std::move(local);
    }
    slices_.push_back(std::move(slice));
  }
  current_tau_ = 0.0;
  rebuild_support();
}

const Support& ShellPropagator::Walker::advance_to(double tau) {
  if (tau < current_tau_ - 1e-15) {
    throw std::invalid_argument("Walker: tau must be nondecreasing");
  }
  if (tau == current_tau_ && !support_.empty()) return support_;
  double dtau = tau - current_tau_;
  for (auto& slice : slices_) {
    const auto& sd = prop_->sector_data(slice.sector);
    if (!slice.use_eig && dtau > 0) prop_->chebyshev_step(sd, slice.state, dtau);
  }
  current_tau_ = tau;
  rebuild_support();
  return support_;
}

void ShellPropagator::Walker::rebuild_support() {
  support_.clear();
  for (auto& slice : slices_) {
    const auto& sd = prop_->sector_data(slice.sector);
    Eigen::VectorXcd local;
    if (slice.use_eig) {
      Eigen::VectorXcd rotated = slice.coeff;
      for (Eigen::Index k = 0; k < rotated.size(); ++k) {
        rotated[k] *= std::polar(1.0, -sd.evals[k] * current_tau_);
      }
      local = sd.evecs * rotated;
    } else {
      local = slice.state;
    }
    for (Eigen::Index i = 0; i < local.size(); ++i) {
      support_.push_back({sd.sector->basis[static_cast<std::size_t>(i)], local[i]});
    }
  }
}

double ShellPropagator::Walker::norm() const {
  double n2 = 0;
  for (const auto& [key, amp] : support_) n2 += std::norm(amp);
  return std::sqrt(n2);
}

Support ShellPropagator::evolve_to(const Support& init, double tau) const {
  Walker w(*this, init);
  return w.advance_to(tau);
}

std::size_t ShellPropagator::max_sector_dim_touched() const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  return max_dim_touched_;
}

Support support_from_state(const StateVector& sv, double drop_below) {
  Support s;
  for (Eigen::Index i = 0; i < sv.amplitudes.size(); ++i) {
    if (std::abs(sv.amplitudes[i]) > drop_below) {
      s.push_back({sv.space.pack_flat(static_cast<std::size_t>(i)), sv.amplitudes[i]});
    }
  }
  return s;
}

StateVector state_from_support(const FockSpace& space, const Support& s) {
  Vec amp = Vec::Zero(space.total_dim());
  for (const auto& [key, a] : s) amp[space.flat_of_packed(key)] = a;
  return StateVector(space, std::move(amp));
}

std::vector<ThermalEnsemble> unitary_evolve(const OperatorMatrix& h, const ThermalEnsemble& init,
                                            const TimeGrid& grid,
                                            const std::vector<OperatorMatrix>& charges) {
  if (h.space() != init.space) throw std::invalid_argument("unitary_evolve: space mismatch");
  if (h.hermiticity_error() > 1e-10) {
    throw std::invalid_argument("unitary_evolve: Hamiltonian not Hermitian");
  }
  // Recover integer charge weights from the diagonal operators.
  std::vector<std::vector<long>> weights;
  const FockSpace& space = h.space();
  for (const auto& q : charges) {
    std::vector<long> w(space.mode_count());
    std::vector<int> occ(space.mode_count());
    for (ModeIndex m = 0; m < space.mode_count(); ++m) {
      if (space.dim(m) < 2) {
        w[m] = 0;
        continue;
      }
      std::fill(occ.begin(), occ.end(), 0);
      occ[m] = 1;
      std::size_t idx = space.flat_index(occ);
      cplx v = q.sparse().coeff(static_cast<int>(idx), static_cast<int>(idx));
      w[m] = static_cast<long>(std::llround(v.real()));
    }
    weights.push_back(std::move(w));
  }

  // Reconstruct monomial terms from the sparse matrix is not possible in
  // general; instead propagate each sector block of H directly.
  ShellDecomposition shells(space, weights);
  struct Block {
    std::vector<std::size_t> flat;
    Eigen::VectorXd evals;
    Mat evecs;
  };
  std::vector<Block> blocks;
  Mat hd = h.dense();
  for (const auto& sec : shells.sectors()) {
    Block b;
    for (auto key : sec.basis) b.flat.push_back(space.flat_of_packed(key));
    Mat sub(b.flat.size(), b.flat.size());
    for (std::size_t i = 0; i < b.flat.size(); ++i) {
      for (std::size_t j = 0; j < b.flat.size(); ++j) sub(i, j) = hd(b.flat[i], b.flat[j]);
    }
    // Verify sector closure: off-sector couplings must vanish.
    Eigen::SelfAdjointEigenSolver<Mat> es(sub);
    b.evals = es.eigenvalues();
    b.evecs = es.eigenvectors();
    blocks.push_back(std::move(b));
  }

  std::vector<ThermalEnsemble> out(grid.size(), ThermalEnsemble{space, {}});
  for (const auto& comp : init.components) {
    // Sector-local coordinates of the initial component.
    std::vector<Eigen::VectorXcd> coords;
    for (const auto& b : blocks) {
      Eigen::VectorXcd local(b.flat.size());
      for (std::size_t i = 0; i < b.flat.size(); ++i) local[i] = comp.state.amplitudes[b.flat[i]];
      coords.push_back(b.evecs.adjoint() * local);
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      Vec amp = Vec::Zero(space.total_dim());
      for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& b = blocks[bi];
        Eigen::VectorXcd rotated = coords[bi];
        for (Eigen::Index k = 0; k < rotated.size(); ++k) {
          rotated[k] *= std::polar(1.0, -b.evals[k] * grid.tau[g]);
        }
        Eigen::VectorXcd local = b.evecs * rotated;
        for (std::size_t i = 0; i < b.flat.size(); ++i) amp[b.flat[i]] = local[i];
      }
      double norm = amp.norm();
      if (std::abs(norm - 1.0) > 1e-8) {
        throw std::runtime_error("unitary_evolve: component norm lost (truncation leak)");
      }
      if (charges.empty()) {
        // Plain truncation: flag leakage through the top Fock level of any mode.
        double top = 0;
        std::vector<int> occ(space.mode_count());
        for (Eigen::Index i = 0; i < amp.size(); ++i) {
          if (std::norm(amp[i]) == 0.0) continue;
          space.unflatten(static_cast<std::size_t>(i), occ);
          for (ModeIndex m = 0; m < space.mode_count(); ++m) {
            if (occ[m] == space.dim(m) - 1 && space.dim(m) > 1) top += std::norm(amp[i]);
          }
        }
        if (top > 1e-8) {
          throw std::runtime_error("unitary_evolve: component leaking outside provided dims");
        }
      }
      out[g].components.push_back({comp.weight, StateVector(space, std::move(amp))});
    }
  }
  return out;
}

}  // namespace qsplit
