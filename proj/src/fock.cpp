#include "qsplit/fock.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qsplit {

FockSpace::FockSpace(std::vector<int> mode_dims) : dims_(std::move(mode_dims)) {
  if (dims_.empty()) throw std::invalid_argument("FockSpace: no modes");
  for (int d : dims_) {
    if (d < 1) throw std::invalid_argument("FockSpace: mode dim must be >= 1");
    if (d > 256) throw std::invalid_argument("FockSpace: mode dim must be <= 256");
  }
  strides_.assign(dims_.size(), 1);
  for (std::size_t m = dims_.size(); m-- > 0;) {
    if (m + 1 < dims_.size()) strides_[m] = strides_[m + 1] * dims_[m + 1];
  }
  total_ = strides_[0] * static_cast<std::size_t>(dims_[0]);
}

std::size_t FockSpace::flat_index(std::span<const int> occ) const {
  std::size_t flat = 0;
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    if (occ[m] < 0 || occ[m] >= dims_[m]) throw std::out_of_range("FockSpace: occupation out of range");
    flat += static_cast<std::size_t>(occ[m]) * strides_[m];
  }
  return flat;
}

void FockSpace::unflatten(std::size_t flat, std::span<int> occ) const {
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    occ[m] = static_cast<int>(flat / strides_[m]);
    flat %= strides_[m];
  }
}

std::uint64_t FockSpace::pack(std::span<const int> occ) const {
  std::uint64_t key = 0;
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    key |= static_cast<std::uint64_t>(occ[m] & 0xff) << (8 * m);
  }
  return key;
}

void FockSpace::unpack(std::uint64_t key, std::span<int> occ) const {
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    occ[m] = static_cast<int>((key >> (8 * m)) & 0xff);
  }
}

std::uint64_t FockSpace::pack_flat(std::size_t flat) const {
  std::uint64_t key = 0;
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    std::size_t n = flat / strides_[m];
    flat %= strides_[m];
    key |= static_cast<std::uint64_t>(n & 0xff) << (8 * m);
  }
  return key;
}

std::size_t FockSpace::flat_of_packed(std::uint64_t key) const {
  std::size_t flat = 0;
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    flat += static_cast<std::size_t>((key >> (8 * m)) & 0xff) * strides_[m];
  }
  return flat;
}

void FockSpace::require_mode(ModeIndex m) const {
  if (m >= dims_.size()) throw std::out_of_range("invalid mode index");
}

std::string FockSpace::describe() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t m = 0; m < dims_.size(); ++m) os << (m ? "," : "") << dims_[m];
  os << ")";
  return os.str();
}

StateVector::StateVector(FockSpace s, Vec a) : space(std::move(s)), amplitudes(std::move(a)) {
  if (static_cast<std::size_t>(amplitudes.size()) != space.total_dim()) {
    throw std::invalid_argument("StateVector: dimension mismatch");
  }
  double n = amplitudes.norm();
  if (std::abs(n * n - 1.0) > 1e-10) {
    throw std::invalid_argument("StateVector: not normalised (|norm^2-1| = " +
                                format_double(std::abs(n * n - 1.0)) + ")");
  }
}

DensityMatrix::DensityMatrix(FockSpace s, Mat m, Validate v)
    : space_(std::move(s)), m_(std::move(m)) {
  if (m_.rows() != m_.cols() || static_cast<std::size_t>(m_.rows()) != space_.total_dim()) {
    throw std::invalid_argument("DensityMatrix: dimension mismatch");
  }
  if (v == Validate::none) return;
  if (hermiticity_error() > 1e-10) {
    throw std::invalid_argument("DensityMatrix: not Hermitian");
  }
  if (trace_error() > 1e-8) {
    throw std::invalid_argument("DensityMatrix: trace != 1 (error " +
                                format_double(trace_error()) + ")");
  }
  if (v == Validate::full) {
    if (min_eigenvalue() < -1e-8) {
      throw std::invalid_argument("DensityMatrix: negative eigenvalue " +
                                  format_double(min_eigenvalue()));
    }
  }
}

double DensityMatrix::trace_error() const { return std::abs(m_.trace().real() - 1.0) + std::abs(m_.trace().imag()); }

double DensityMatrix::hermiticity_error() const {
  return (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Mat> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double ThermalEnsemble::weight_sum() const {
  double s = 0;
  for (const auto& c : components) s += c.weight;
  return s;
}

DensityMatrix ThermalEnsemble::to_density_matrix(DensityMatrix::Validate v) const {
  Mat rho = Mat::Zero(space.total_dim(), space.total_dim());
  for (const auto& c : components) {
    rho.noalias() += c.weight * (c.state.amplitudes * c.state.amplitudes.adjoint());
  }
  return DensityMatrix(space, std::move(rho), v);
}

StatePrep StatePrep::ground() { return StatePrep{}; }

StatePrep StatePrep::fock(int n) {
  if (n < 0) throw std::invalid_argument("fock: n must be >= 0");
  StatePrep p;
  p.kind = Kind::fock;
  p.fock_n = n;
  return p;
}

StatePrep StatePrep::thermal(double nbar) {
  if (nbar < 0) throw std::invalid_argument("thermal: nbar must be >= 0");
  StatePrep p;
  p.kind = Kind::thermal;
  p.nbar = nbar;
  return p;
}

StatePrep StatePrep::coherent(double mag, double phase) {
  if (mag < 0) throw std::invalid_argument("coherent: |alpha| must be >= 0");
  StatePrep p;
  p.kind = Kind::coherent;
  p.alpha_mag = mag;
  p.alpha_phase = phase;
  return p;
}

StatePrep StatePrep::prcs(double mu) {
  if (mu < 0) throw std::invalid_argument("prcs: mean occupation must be >= 0");
  StatePrep p;
  p.kind = Kind::prcs;
  p.mu = mu;
  return p;
}

namespace {

// Geometric weights p_k = nbar^k / (1+nbar)^{k+1}.
double thermal_weight(double nbar, int k) {
  if (nbar == 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(static_cast<double>(k) * std::log(nbar) -
                  static_cast<double>(k + 1) * std::log1p(nbar));
}

// Poisson weights p_n = e^{-mu} mu^n / n!.
double poisson_weight(double mu, int n) {
  if (mu == 0.0) return n == 0 ? 1.0 : 0.0;
  double lg = std::lgamma(static_cast<double>(n) + 1.0);
  return std::exp(-mu + static_cast<double>(n) * std::log(mu) - lg);
}

// Keep leading weights until cumulative mass >= 1 - eps_tail, renormalise.
std::vector<double> truncated_weights(const std::function<double(int)>& w, int dim,
                                      double eps_tail, const char* what) {
  std::vector<double> out;
  double cum = 0;
  for (int k = 0; k < dim; ++k) {
    out.push_back(w(k));
    cum += out.back();
    if (cum >= 1.0 - eps_tail) {
      for (auto& v : out) v /= cum;
      return out;
    }
  }
  throw std::invalid_argument(std::string(what) +
                              ": truncation dim too small to reach eps_tail");
}

}  // namespace

int StatePrep::required_dim(double eps_tail) const {
  switch (kind) {
    case Kind::ground:
      return 1;
    case Kind::fock:
      return fock_n + 1;
    case Kind::thermal: {
      double cum = 0;
      for (int k = 0;; ++k) {
        cum += thermal_weight(nbar, k);
        if (cum >= 1.0 - eps_tail) return k + 1;
        if (k > 100000) throw std::runtime_error("thermal: eps_tail unreachable");
      }
    }
    case Kind::coherent: {
      double mu = alpha_mag * alpha_mag;
      double cum = 0;
      for (int k = 0;; ++k) {
        cum += poisson_weight(mu, k);
        if (cum >= 1.0 - eps_tail) return k + 1;
        if (k > 100000) throw std::runtime_error("coherent: eps_tail unreachable");
      }
    }
    case Kind::prcs: {
      double cum = 0;
      for (int k = 0;; ++k) {
        cum += poisson_weight(mu, k);
        if (cum >= 1.0 - eps_tail) return k + 1;
        if (k > 100000) throw std::runtime_error("prcs: eps_tail unreachable");
      }
    }
  }
  throw std::logic_error("unreachable");
}

std::string StatePrep::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::ground: os << "ground"; break;
    case Kind::fock: os << "fock(" << fock_n << ")"; break;
    case Kind::thermal: os << "thermal(" << nbar << ")"; break;
    case Kind::coherent: os << "coherent(" << alpha_mag << "," << alpha_phase << ")"; break;
    case Kind::prcs: os << "prcs(" << mu << ")"; break;
  }
  return os.str();
}

std::vector<ModeComponent> mode_components(const StatePrep& prep, int dim, double eps_tail) {
  std::vector<ModeComponent> out;
  switch (prep.kind) {
    case StatePrep::Kind::ground:
      out.push_back({1.0, {{0, 1.0}}});
      break;
    case StatePrep::Kind::fock:
      if (prep.fock_n >= dim) throw std::invalid_argument("fock: n exceeds truncation dim");
      out.push_back({1.0, {{prep.fock_n, 1.0}}});
      break;
    case StatePrep::Kind::thermal: {
      auto w = truncated_weights([&](int k) { return thermal_weight(prep.nbar, k); }, dim,
                                 eps_tail, "thermal");
      for (int k = 0; k < static_cast<int>(w.size()); ++k) {
        if (w[k] > 0) out.push_back({w[k], {{k, 1.0}}});
      }
      break;
    }
    case StatePrep::Kind::prcs: {
      auto w = truncated_weights([&](int k) { return poisson_weight(prep.mu, k); }, dim,
                                 eps_tail, "prcs");
      for (int k = 0; k < static_cast<int>(w.size()); ++k) {
        if (w[k] > 0) out.push_back({w[k], {{k, 1.0}}});
      }
      break;
    }
    case StatePrep::Kind::coherent: {
      // Truncated expansion alpha^n / sqrt(n!), renormalised to keep an exact
      // unit norm under truncation.
      double mu = prep.alpha_mag * prep.alpha_mag;
      cplx alpha = std::polar(prep.alpha_mag, prep.alpha_phase);
      std::vector<cplx> amps(dim);
      double norm2 = 0;
      cplx cur = 1.0;           // alpha^n / sqrt(n!) before the exp(-mu/2) factor
      double scale = std::exp(-mu / 2.0);
      for (int n = 0; n < dim; ++n) {
        if (n > 0) cur *= alpha / std::sqrt(static_cast<double>(n));
        amps[n] = scale * cur;
        norm2 += std::norm(amps[n]);
      }
      if (1.0 - norm2 > eps_tail) {
        throw std::invalid_argument("coherent: truncation dim too small to reach eps_tail");
      }
      double inv = 1.0 / std::sqrt(norm2);
      ModeComponent c;
      c.weight = 1.0;
      for (int n = 0; n < dim; ++n) {
        cplx a = amps[n] * inv;
        if (std::abs(a) > 0) c.amplitudes.push_back({n, a});
      }
      out.push_back(std::move(c));
      break;
    }
  }
  return out;
}

ThermalEnsemble prepare(const FockSpace& space, const std::vector<StatePrep>& preps,
                        double eps_tail) {
  if (preps.size() != space.mode_count()) {
    throw std::invalid_argument("prepare: one StatePrep per mode required");
  }
  std::vector<std::vector<ModeComponent>> per_mode;
  per_mode.reserve(preps.size());
  for (std::size_t m = 0; m < preps.size(); ++m) {
    per_mode.push_back(mode_components(preps[m], space.dim(m), eps_tail));
  }
  ThermalEnsemble ens{space, {}};
  // Cartesian product across modes.
  std::vector<std::size_t> pick(preps.size(), 0);
  for (;;) {
    double w = 1.0;
    for (std::size_t m = 0; m < preps.size(); ++m) w *= per_mode[m][pick[m]].weight;
    Vec amp = Vec::Zero(space.total_dim());
    std::vector<int> occ(space.mode_count());
    // Tensor product of the sparse per-mode amplitudes.
    std::vector<std::pair<std::size_t, cplx>> acc = {{0, 1.0}};
    for (std::size_t m = 0; m < preps.size(); ++m) {
      std::vector<std::pair<std::size_t, cplx>> next;
      next.reserve(acc.size() * per_mode[m][pick[m]].amplitudes.size());
      for (const auto& [base, av] : acc) {
        for (const auto& [n, a] : per_mode[m][pick[m]].amplitudes) {
          next.push_back({base + static_cast<std::size_t>(n) * space.stride(m), av * a});
        }
      }
      acc = std::move(next);
    }
    for (const auto& [idx, a] : acc) amp[idx] = a;
    ens.components.push_back({w, StateVector(space, std::move(amp))});
    // Advance the product index.
    std::size_t m = preps.size();
    while (m-- > 0) {
      if (++pick[m] < per_mode[m].size()) break;
      pick[m] = 0;
      if (m == 0) {
        double total = ens.weight_sum();
        if (std::abs(total - 1.0) > 1e-10) {
          for (auto& c : ens.components) c.weight /= total;
        }
        return ens;
      }
    }
  }
}

DensityMatrix prepare_density(const FockSpace& space, const std::vector<StatePrep>& preps,
                              double eps_tail) {
  return prepare(space, preps, eps_tail).to_density_matrix();
}

OperatorMatrix ladder(const FockSpace& space, ModeIndex mode) {
  space.require_mode(mode);
  const std::size_t total = space.total_dim();
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(total);
  std::vector<int> occ(space.mode_count());
  for (std::size_t i = 0; i < total; ++i) {
    space.unflatten(i, occ);
    int n = occ[mode];
    if (n >= 1) {
      // <n-1| a |n> = sqrt(n); column index is the source state.
      trip.emplace_back(static_cast<int>(i - space.stride(mode)), static_cast<int>(i),
                        std::sqrt(static_cast<double>(n)));
    }
  }
  SpMat m(total, total);
  m.setFromTriplets(trip.begin(), trip.end());
  return OperatorMatrix(space, std::move(m), false);
}

OperatorMatrix number_operator(const FockSpace& space, ModeIndex mode) {
  space.require_mode(mode);
  const std::size_t total = space.total_dim();
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(total);
  std::vector<int> occ(space.mode_count());
  for (std::size_t i = 0; i < total; ++i) {
    space.unflatten(i, occ);
    if (occ[mode] > 0) {
      trip.emplace_back(static_cast<int>(i), static_cast<int>(i),
                        static_cast<double>(occ[mode]));
    }
  }
  SpMat m(total, total);
  m.setFromTriplets(trip.begin(), trip.end());
  return OperatorMatrix(space, std::move(m), true);
}

OperatorMatrix::OperatorMatrix(FockSpace s, SpMat m, bool hermitian)
    : space_(std::move(s)), m_(std::move(m)), hermitian_(hermitian) {
  if (m_.rows() != m_.cols() || static_cast<std::size_t>(m_.rows()) != space_.total_dim()) {
    throw std::invalid_argument("OperatorMatrix: dimension mismatch");
  }
}

double OperatorMatrix::hermiticity_error() const {
  SpMat diff = SpMat(m_ - SpMat(m_.adjoint()));
  double err = 0;
  for (int k = 0; k < diff.outerSize(); ++k) {
    for (SpMat::InnerIterator it(diff, k); it; ++it) err = std::max(err, std::abs(it.value()));
  }
  return err;
}

OperatorMatrix OperatorMatrix::adjoint() const {
  return OperatorMatrix(space_, SpMat(m_.adjoint()), hermitian_);
}

namespace {

// Enumerate flat indices of the subspace spanned by `modes` (in the given
// order) together with the complementary subspace, as (sub_flat, stride map).
struct SubspaceEnum {
  std::vector<std::size_t> offsets;  // flat contribution of each sub-basis state
  std::size_t dim;
};

SubspaceEnum enumerate_subspace(const FockSpace& space, const std::vector<ModeIndex>& modes) {
  SubspaceEnum e;
  e.dim = 1;
  for (ModeIndex m : modes) e.dim *= static_cast<std::size_t>(space.dim(m));
  e.offsets.resize(e.dim);
  for (std::size_t i = 0; i < e.dim; ++i) {
    std::size_t rem = i, off = 0;
    for (std::size_t k = modes.size(); k-- > 0;) {
      std::size_t d = static_cast<std::size_t>(space.dim(modes[k]));
      off += (rem % d) * space.stride(modes[k]);
      rem /= d;
    }
    e.offsets[i] = off;
  }
  return e;
}

std::vector<ModeIndex> complement_modes(const FockSpace& space, const std::vector<ModeIndex>& modes) {
  std::vector<bool> used(space.mode_count(), false);
  for (ModeIndex m : modes) {
    space.require_mode(m);
    if (used[m]) throw std::invalid_argument("duplicate mode index");
    used[m] = true;
  }
  std::vector<ModeIndex> rest;
  for (ModeIndex m = 0; m < space.mode_count(); ++m) {
    if (!used[m]) rest.push_back(m);
  }
  return rest;
}

}  // namespace

DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<ModeIndex>& keep) {
  if (keep.empty()) throw std::invalid_argument("partial_trace: keep set must be nonempty");
  const FockSpace& space = rho.space();
  auto traced = complement_modes(space, keep);
  auto kept_e = enumerate_subspace(space, keep);
  auto traced_e = enumerate_subspace(space, traced);
  Mat out = Mat::Zero(kept_e.dim, kept_e.dim);
  const Mat& m = rho.elements();
  for (std::size_t i = 0; i < kept_e.dim; ++i) {
    for (std::size_t j = 0; j < kept_e.dim; ++j) {
      cplx sum = 0;
      for (std::size_t t = 0; t < traced_e.dim; ++t) {
        sum += m(kept_e.offsets[i] + traced_e.offsets[t], kept_e.offsets[j] + traced_e.offsets[t]);
      }
      out(i, j) = sum;
    }
  }
  std::vector<int> dims;
  for (ModeIndex mdx : keep) dims.push_back(space.dim(mdx));
  return DensityMatrix(FockSpace(dims), std::move(out), DensityMatrix::Validate::basic);
}

OperatorMatrix partial_transpose(const DensityMatrix& rho,
                                 const std::vector<ModeIndex>& transposed) {
  const FockSpace& space = rho.space();
  std::vector<bool> flip(space.mode_count(), false);
  for (ModeIndex m : transposed) {
    space.require_mode(m);
    flip[m] = true;
  }
  const Mat& m = rho.elements();
  const std::size_t total = space.total_dim();
  std::vector<Eigen::Triplet<cplx>> trip;
  std::vector<int> ro(space.mode_count()), co(space.mode_count());
  for (std::size_t r = 0; r < total; ++r) {
    space.unflatten(r, ro);
    for (std::size_t c = 0; c < total; ++c) {
      if (m(r, c) == cplx(0.0, 0.0)) continue;
      space.unflatten(c, co);
      std::size_t nr = 0, nc = 0;
      for (std::size_t k = 0; k < space.mode_count(); ++k) {
        int rk = flip[k] ? co[k] : ro[k];
        int ck = flip[k] ? ro[k] : co[k];
        nr += static_cast<std::size_t>(rk) * space.stride(k);
        nc += static_cast<std::size_t>(ck) * space.stride(k);
      }
      trip.emplace_back(static_cast<int>(nr), static_cast<int>(nc), m(r, c));
    }
  }
  SpMat out(total, total);
  out.setFromTriplets(trip.begin(), trip.end());
  return OperatorMatrix(space, std::move(out), true);
}

DensityMatrix tensor_product(const DensityMatrix& a, const DensityMatrix& b) {
  std::vector<int> dims = a.space().dims();
  for (int d : b.space().dims()) dims.push_back(d);
  const std::size_t da = a.dim(), db = b.dim();
  Mat out(da * db, da * db);
  for (std::size_t i = 0; i < da; ++i) {
    for (std::size_t j = 0; j < da; ++j) {
      out.block(i * db, j * db, db, db) = a.elements()(i, j) * b.elements();
    }
  }
  return DensityMatrix(FockSpace(dims), std::move(out), DensityMatrix::Validate::basic);
}

LadderMoments ladder_moments(const Mat& rho) {
  const int d = static_cast<int>(rho.rows());
  LadderMoments lm{0.0, 0.0, 0.0};
  for (int n = 0; n < d; ++n) {
    lm.mean_n += static_cast<double>(n) * rho(n, n).real();
    if (n + 1 < d) lm.mean_b += std::sqrt(n + 1.0) * rho(n + 1, n);
    if (n + 2 < d) lm.mean_b2 += std::sqrt((n + 1.0) * (n + 2.0)) * rho(n + 2, n);
  }
  return lm;
}

Moments quadrature_moments_from(const LadderMoments& lm, double theta) {
  const cplx half_phase = std::polar(1.0, -theta / 2.0);
  const cplx phase = std::polar(1.0, -theta);
  double mean = std::sqrt(2.0) * (lm.mean_b * half_phase).real();
  double x2 = (lm.mean_b2 * phase).real() + lm.mean_n + 0.5;
  return Moments{mean, x2 - mean * mean};
}

Moments quadrature_moments(const DensityMatrix& rho, ModeIndex mode, double theta) {
  rho.space().require_mode(mode);
  Mat reduced = rho.space().mode_count() == 1
                    ? rho.elements()
                    : partial_trace(rho, {mode}).elements();
  return quadrature_moments_from(ladder_moments(reduced), theta);
}

Moments quadrature_moments(const ThermalEnsemble& ens, ModeIndex mode, double theta) {
  return quadrature_moments(ens.to_density_matrix(DensityMatrix::Validate::none), mode, theta);
}

}  // namespace qsplit
