#include "qsplit/measures.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace qsplit {

PhononDistribution::PhononDistribution(std::vector<double> p) : p_(std::move(p)) {
  double sum = 0;
  for (auto& v : p_) {
    if (v < -1e-12) throw std::invalid_argument("PhononDistribution: negative probability");
    if (v < 0) v = 0;
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-8) {
    throw std::invalid_argument("PhononDistribution: sum != 1 (" + format_double(sum) + ")");
  }
}

double PhononDistribution::odd_mass() const {
  double s = 0;
  for (std::size_t k = 1; k < p_.size(); k += 2) s += p_[k];
  return s;
}

double PhononDistribution::mean() const {
  double s = 0;
  for (std::size_t k = 0; k < p_.size(); ++k) s += static_cast<double>(k) * p_[k];
  return s;
}

bool KlyshkoReport::any_violation() const {
  for (const auto& e : entries) {
    if (e.violation) return true;
  }
  return false;
}

KlyshkoReport klyshko(const PhononDistribution& dist, double tol) {
  const auto& p = dist.p();
  KlyshkoReport rep;
  rep.tol = tol;
  for (int n = 0; n + 2 < static_cast<int>(p.size()); ++n) {
    double b = (n + 2.0) * p[n] * p[n + 2] - (n + 1.0) * p[n + 1] * p[n + 1];
    rep.entries.push_back({n, b, b < -tol});
  }
  return rep;
}

double QuadraturePdf::riemann_sum() const {
  return std::accumulate(p.begin(), p.end(), 0.0) * dx;
}

Moments QuadraturePdf::moments() const {
  double m0 = 0, m1 = 0, m2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m0 += p[i];
    m1 += p[i] * x[i];
    m2 += p[i] * x[i] * x[i];
  }
  m0 *= dx;
  m1 *= dx;
  m2 *= dx;
  double mean = m1 / m0;
  return Moments{mean, m2 / m0 - mean * mean};
}

QuadraturePdf quadrature_pdf(const Mat& rho, double theta, const QuadratureGrid& grid) {
  if (grid.n < 16 || grid.x_max <= grid.x_min) {
    throw std::invalid_argument("quadrature_pdf: bad grid");
  }
  const int d = static_cast<int>(rho.rows());
  QuadraturePdf out;
  out.x.resize(grid.n);
  out.p.assign(grid.n, 0.0);
  out.dx = grid.dx();

  // Oscillator eigenfunctions psi_n by stable upward recurrence,
  // psi_0 = pi^-1/4 exp(-x^2/2).
  std::vector<double> psi_prev(grid.n), psi_cur(grid.n), psi_next(grid.n);
  std::vector<std::vector<double>> psi(d, std::vector<double>(grid.n));
  for (std::size_t i = 0; i < grid.n; ++i) {
    double x = grid.x_min + static_cast<double>(i) * out.dx;
    out.x[i] = x;
    psi[0][i] = std::pow(pi, -0.25) * std::exp(-0.5 * x * x);
    if (d > 1) psi[1][i] = std::sqrt(2.0) * x * psi[0][i];
  }
  for (int n = 2; n < d; ++n) {
    for (std::size_t i = 0; i < grid.n; ++i) {
      psi[n][i] = std::sqrt(2.0 / n) * out.x[i] * psi[n - 1][i] -
                  std::sqrt((n - 1.0) / n) * psi[n - 2][i];
    }
  }

  for (int m = 0; m < d; ++m) {
    for (int n = m; n < d; ++n) {
      cplx r = rho(m, n);
      if (std::abs(r) < 1e-18) continue;
      cplx w = r * std::polar(1.0, (n - m) * theta / 2.0);
      double factor = (n == m) ? w.real() : 2.0 * w.real();
      if (n == m) {
        for (std::size_t i = 0; i < grid.n; ++i) out.p[i] += factor * psi[m][i] * psi[m][i];
      } else {
        for (std::size_t i = 0; i < grid.n; ++i) out.p[i] += factor * psi[m][i] * psi[n][i];
      }
    }
  }
  for (auto& v : out.p) {
    if (v < 0 && v > -1e-10) v = 0;
  }
  double sum = out.riemann_sum();
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::runtime_error("quadrature_pdf: grid too narrow (integral " + format_double(sum) + ")");
  }
  Moments mo = out.moments();
  double sd = std::sqrt(std::max(mo.variance, 0.0));
  if (mo.mean - 6 * sd < grid.x_min || mo.mean + 6 * sd > grid.x_max) {
    throw std::runtime_error("quadrature_pdf: grid narrower than 6 standard deviations");
  }
  return out;
}

QuadraturePdf quadrature_pdf(const DensityMatrix& rho, double theta, const QuadratureGrid& grid) {
  if (rho.space().mode_count() != 1) {
    throw std::invalid_argument("quadrature_pdf: single-mode state required");
  }
  return quadrature_pdf(rho.elements(), theta, grid);
}

double hermitian_abs_eigen_sum(const std::vector<Mat>& blocks) {
  double sum = 0;
  for (const auto& b : blocks) {
    if (b.rows() == 0) continue;
    if (b.rows() == 1) {
      sum += std::abs(b(0, 0).real());
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(b, Eigen::EigenvaluesOnly);
    sum += es.eigenvalues().cwiseAbs().sum();
  }
  return sum;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void join(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

double trace_norm_hermitian(const SpMat& m) {
  const int n = static_cast<int>(m.rows());
  UnionFind uf(n);
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      if (it.value() != cplx(0.0, 0.0) && it.row() != it.col()) {
        uf.join(static_cast<int>(it.row()), static_cast<int>(it.col()));
      }
    }
  }
  std::map<int, std::vector<int>> comps;
  for (int i = 0; i < n; ++i) comps[uf.find(i)].push_back(i);
  std::vector<Mat> blocks;
  for (const auto& [root, idx] : comps) {
    Mat b = Mat::Zero(idx.size(), idx.size());
    std::map<int, int> pos;
    for (std::size_t i = 0; i < idx.size(); ++i) pos[idx[i]] = static_cast<int>(i);
    for (int i : idx) {
      for (SpMat::InnerIterator it(m, i); it; ++it) {
        b(pos.at(static_cast<int>(it.row())), pos.at(i)) = it.value();
      }
    }
    blocks.push_back(std::move(b));
  }
  return hermitian_abs_eigen_sum(blocks);
}

double log_negativity(const DensityMatrix& rho, const std::vector<ModeIndex>& part_a,
                      LogBase base) {
  const FockSpace& space = rho.space();
  if (part_a.empty()) throw std::invalid_argument("log_negativity: empty partition");
  std::vector<bool> in_a(space.mode_count(), false);
  for (ModeIndex m : part_a) {
    space.require_mode(m);
    in_a[m] = true;
  }
  std::vector<ModeIndex> part_b;
  for (ModeIndex m = 0; m < space.mode_count(); ++m) {
    if (!in_a[m]) part_b.push_back(m);
  }
  if (part_b.empty()) throw std::invalid_argument("log_negativity: partition must be proper");
  OperatorMatrix pt = partial_transpose(rho, part_b);
  double tn = trace_norm_hermitian(pt.sparse());
  return std::max(0.0, log_in_base(tn, base));
}

namespace {

// Partial transpose of a sigma-blocked two-mode state, re-blocked over the
// conserved difference d = w_x i_x - w_y j_y, dropping basis states whose
// marginal populations fall below the trim threshold.
double pt_trace_norm_from_blocks(const PairBlockReducer& red, double trim) {
  auto px = red.populations_x();
  auto py = red.populations_y();
  std::vector<char> keep_x(px.size()), keep_y(py.size());
  for (std::size_t i = 0; i < px.size(); ++i) keep_x[i] = px[i] > trim;
  for (std::size_t i = 0; i < py.size(); ++i) keep_y[i] = py[i] > trim;

  // Collect the (i_x, j_y) pairs appearing per difference block.
  struct DBlock {
    std::map<std::pair<int, int>, int> pos;
    std::vector<Eigen::Triplet<cplx>> trip;
  };
  std::map<long, DBlock> dblocks;
  const long wx = red.weight_x(), wy = red.weight_y();
  for (const auto& [sigma, b] : red.blocks()) {
    const auto& basis = b.basis;
    for (std::size_t i = 0; i < basis.size(); ++i) {
      auto [ix, iy] = basis[i];
      if (!keep_x[ix] || !keep_y[iy]) continue;
      for (std::size_t j = 0; j < basis.size(); ++j) {
        auto [jx, jy] = basis[j];
        if (!keep_x[jx] || !keep_y[jy]) continue;
        cplx v = b.m(i, j);
        if (v == cplx(0.0, 0.0)) continue;
        // element ((ix,iy),(jx,jy)) -> PT element ((ix,jy),(jx,iy))
        long d = wx * ix - wy * jy;
        DBlock& db = dblocks[d];
        auto r = db.pos.try_emplace({ix, jy}, static_cast<int>(db.pos.size()));
        auto c = db.pos.try_emplace({jx, iy}, static_cast<int>(db.pos.size()));
        db.trip.emplace_back(r.first->second, c.first->second, v);
      }
    }
  }
  std::vector<Mat> blocks;
  for (auto& [d, db] : dblocks) {
    Mat b = Mat::Zero(db.pos.size(), db.pos.size());
    for (const auto& t : db.trip) b(t.row(), t.col()) += t.value();
    blocks.push_back(std::move(b));
  }
  return hermitian_abs_eigen_sum(blocks);
}

}  // namespace

double log_negativity(const PairBlockReducer& red, LogBase base, double trim) {
  double tn = pt_trace_norm_from_blocks(red, trim);
  return std::max(0.0, log_in_base(tn, base));
}

double log_negativity_two_mode(const Mat& rho, int dim_x, int dim_y, LogBase base, double trim) {
  if (rho.rows() != static_cast<Eigen::Index>(dim_x) * dim_y) {
    throw std::invalid_argument("log_negativity_two_mode: dimension mismatch");
  }
  std::vector<double> px(dim_x, 0.0), py(dim_y, 0.0);
  for (int ix = 0; ix < dim_x; ++ix) {
    for (int iy = 0; iy < dim_y; ++iy) {
      double d = rho(ix * dim_y + iy, ix * dim_y + iy).real();
      px[ix] += d;
      py[iy] += d;
    }
  }
  std::vector<int> kx, ky;
  for (int i = 0; i < dim_x; ++i) {
    if (px[i] > trim) kx.push_back(i);
  }
  for (int i = 0; i < dim_y; ++i) {
    if (py[i] > trim) ky.push_back(i);
  }
  std::vector<int> posx(dim_x, -1), posy(dim_y, -1);
  for (std::size_t i = 0; i < kx.size(); ++i) posx[kx[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < ky.size(); ++i) posy[ky[i]] = static_cast<int>(i);
  const int nx = static_cast<int>(kx.size()), ny = static_cast<int>(ky.size());
  std::vector<Eigen::Triplet<cplx>> trip;
  for (int a = 0; a < nx; ++a) {
    for (int b = 0; b < ny; ++b) {
      for (int c = 0; c < nx; ++c) {
        for (int d = 0; d < ny; ++d) {
          cplx v = rho(kx[a] * dim_y + ky[b], kx[c] * dim_y + ky[d]);
          if (v == cplx(0.0, 0.0)) continue;
          // PT on mode y: ((a,b),(c,d)) -> ((a,d),(c,b))
          trip.emplace_back((a * ny + d), (c * ny + b), v);
        }
      }
    }
  }
  SpMat pt(nx * ny, nx * ny);
  pt.setFromTriplets(trip.begin(), trip.end());
  double tn = trace_norm_hermitian(pt);
  return std::max(0.0, log_in_base(tn, base));
}

double log_negativity(const PairDenseReducer& red, LogBase base, double trim) {
  return log_negativity_two_mode(red.rho(), red.dim_x(), red.dim_y(), base, trim);
}

namespace {

// Balanced-beamsplitter unitaries exp((pi/4)(c^dag A - c A^dag)) restricted
// to total-number sectors, built exactly from the Hermitian generator.
class BeamsplitterSectors {
 public:
  static const Mat& sector(int s) {
    static BeamsplitterSectors inst;
    std::lock_guard<std::mutex> lock(inst.mutex_);
    auto it = inst.cache_.find(s);
    if (it != inst.cache_.end()) return it->second;
    // Basis |j>_A |s-j>_c, j = 0..s. G = (pi/4)(c^dag A - c A^dag) is real
    // antisymmetric tridiagonal; exp(G) = V exp(-i mu) V^dag with iG = V mu V^dag.
    Mat ig = Mat::Zero(s + 1, s + 1);
    for (int j = 1; j <= s; ++j) {
      double g = 0.25 * pi * std::sqrt(static_cast<double>(j) * (s - j + 1.0));
      // c^dag A : |j, s-j> -> sqrt(j (s-j+1)) |j-1, s-j+1>
      ig(j - 1, j) = cplx(0.0, 1.0) * g;
      ig(j, j - 1) = cplx(0.0, -1.0) * g;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(ig);
    Mat u = es.eigenvectors();
    Vec phases(s + 1);
    for (int k = 0; k <= s; ++k) phases[k] = std::polar(1.0, -es.eigenvalues()[k]);
    Mat result = u * phases.asDiagonal() * u.adjoint();
    return inst.cache_.emplace(s, std::move(result)).first->second;
  }

 private:
  std::mutex mutex_;
  std::map<int, Mat> cache_;
};

// chi_s = U_BS^dag |s, 0>: sector-s amplitudes of the split input |s>_A |0>_c.
Vec beamsplit_column(int s) {
  const Mat& u = BeamsplitterSectors::sector(s);
  return u.row(s).conjugate().transpose();
}

}  // namespace

double entanglement_potential(std::span<const double> populations, LogBase base, double trim) {
  int k_max = -1;
  for (int s = 0; s < static_cast<int>(populations.size()); ++s) {
    if (populations[s] > trim) k_max = s;
  }
  if (k_max <= 0) return 0.0;  // vacuum (or empty) splits into a product
  // rho_E = sum_s P_s |chi_s><chi_s| is block diagonal per total number; its
  // partial transpose is block diagonal per difference d = j - m.
  std::vector<Vec> chi(k_max + 1);
  for (int s = 0; s <= k_max; ++s) {
    if (populations[s] > trim) chi[s] = beamsplit_column(s);
  }
  std::map<long, std::pair<std::map<std::pair<int, int>, int>, std::vector<Eigen::Triplet<cplx>>>>
      dblocks;
  for (int s = 0; s <= k_max; ++s) {
    if (!(populations[s] > trim)) continue;
    for (int j = 0; j <= s; ++j) {
      cplx aj = chi[s][j];
      if (std::abs(aj) < 1e-18) continue;
      for (int jp = 0; jp <= s; ++jp) {
        cplx v = populations[s] * aj * std::conj(chi[s][jp]);
        if (v == cplx(0.0, 0.0)) continue;
        // PT element: row (j, s-jp), col (jp, s-j); d = j - (s - jp).
        long d = j + jp - s;
        auto& db = dblocks[d];
        auto r = db.first.try_emplace({j, s - jp}, static_cast<int>(db.first.size()));
        auto c = db.first.try_emplace({jp, s - j}, static_cast<int>(db.first.size()));
        db.second.emplace_back(r.first->second, c.first->second, v);
      }
    }
  }
  std::vector<Mat> blocks;
  for (auto& [d, db] : dblocks) {
    Mat b = Mat::Zero(db.first.size(), db.first.size());
    for (const auto& t : db.second) b(t.row(), t.col()) += t.value();
    blocks.push_back(std::move(b));
  }
  double tn = hermitian_abs_eigen_sum(blocks);
  return std::max(0.0, log_in_base(tn, base));
}

double entanglement_potential(const Mat& rho, LogBase base, double trim) {
  const int d = static_cast<int>(rho.rows());
  // Diagonal states go through the number-block path.
  double offdiag = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) offdiag = std::max(offdiag, std::abs(rho(i, j)));
  }
  if (offdiag == 0.0) {
    std::vector<double> p(d);
    for (int i = 0; i < d; ++i) p[i] = rho(i, i).real();
    return entanglement_potential(std::span<const double>(p), base, trim);
  }
  // General state: assemble the partial transpose of
  // U^dag (rho x |0><0|) U over the trimmed support.
  std::vector<int> kept;
  for (int s = 0; s < d; ++s) {
    if (rho(s, s).real() > trim) kept.push_back(s);
  }
  if (kept.empty()) return 0.0;
  const int k = kept.back() + 1;  // contiguous range keeps sector structure simple
  if (k > 72) {
    throw std::runtime_error("entanglement_potential: dimension overflow guard (support " +
                             std::to_string(k) + ")");
  }
  std::vector<Vec> chi(k);
  for (int s = 0; s < k; ++s) chi[s] = beamsplit_column(s);
  const Eigen::Index dd = static_cast<Eigen::Index>(k) * k;
  Mat pt = Mat::Zero(dd, dd);
  for (int s = 0; s < k; ++s) {
    for (int sp = 0; sp < k; ++sp) {
      cplx r = rho(s, sp);
      if (std::abs(r) < 1e-18) continue;
      for (int j = 0; j <= s; ++j) {
        cplx a = r * chi[s][j];
        if (std::abs(a) < 1e-20) continue;
        for (int jp = 0; jp <= sp; ++jp) {
          // rho_E element ((j, s-j), (jp, sp-jp)); PT swaps the ancilla
          // indices: row (j, sp-jp), col (jp, s-j).
          cplx v = a * std::conj(chi[sp][jp]);
          pt(j * k + (sp - jp), jp * k + (s - j)) += v;
        }
      }
    }
  }
  SpMat sp_pt = pt.sparseView(1.0, 0.0);
  double tn = trace_norm_hermitian(sp_pt);
  return std::max(0.0, log_in_base(tn, base));
}

double entanglement_potential(const DensityMatrix& rho, LogBase base) {
  if (rho.space().mode_count() != 1) {
    throw std::invalid_argument("entanglement_potential: single-mode state required");
  }
  return entanglement_potential(rho.elements(), base);
}

CovarianceMatrix covariance(const DensityMatrix& rho, const std::vector<ModeIndex>& modes) {
  DensityMatrix red = rho.space().mode_count() == modes.size()
                          ? DensityMatrix(rho.space(), rho.elements(), DensityMatrix::Validate::none)
                          : partial_trace(rho, modes);
  const FockSpace& sp = red.space();
  const std::size_t nm = sp.mode_count();
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  std::vector<SpMat> quad(2 * nm);
  for (std::size_t m = 0; m < nm; ++m) {
    SpMat a = ladder(sp, m).sparse();
    SpMat ad = SpMat(a.adjoint());
    quad[2 * m] = SpMat(inv_sqrt2 * (a + ad));
    quad[2 * m + 1] = SpMat((cplx(0.0, 1.0) * inv_sqrt2) * (ad - a));
  }
  CovarianceMatrix cm;
  cm.mean.resize(2 * nm);
  cm.sigma.resize(2 * nm, 2 * nm);
  const Mat& r = red.elements();
  std::vector<Mat> qr(2 * nm);
  for (std::size_t i = 0; i < 2 * nm; ++i) {
    qr[i] = quad[i] * r;
    cm.mean[static_cast<Eigen::Index>(i)] = qr[i].trace().real();
  }
  for (std::size_t i = 0; i < 2 * nm; ++i) {
    for (std::size_t j = i; j < 2 * nm; ++j) {
      cplx eij = (quad[i] * qr[j]).trace();
      cplx eji = (quad[j] * qr[i]).trace();
      double s = 0.5 * (eij + eji).real() - cm.mean[i] * cm.mean[j];
      cm.sigma(i, j) = s;
      cm.sigma(j, i) = s;
    }
  }
  // Uncertainty relation sigma + i Omega / 2 >= -1e-8.
  Mat test = cm.sigma.cast<cplx>();
  for (std::size_t m = 0; m < nm; ++m) {
    test(2 * m, 2 * m + 1) += cplx(0.0, 0.5);
    test(2 * m + 1, 2 * m) += cplx(0.0, -0.5);
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(test, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-8) {
    throw std::runtime_error("covariance: unphysical covariance matrix");
  }
  return cm;
}

CovarianceMatrix pair_covariance(const PairMoments& pm) {
  CovarianceMatrix cm;
  cm.mean = Eigen::VectorXd::Zero(4);
  cm.sigma = Eigen::MatrixXd::Zero(4, 4);
  double c_re = pm.xdag_y.real(), c_im = pm.xdag_y.imag();
  cm.sigma(0, 0) = cm.sigma(1, 1) = pm.n_x + 0.5;
  cm.sigma(2, 2) = cm.sigma(3, 3) = pm.n_y + 0.5;
  cm.sigma(0, 2) = cm.sigma(2, 0) = c_re;
  cm.sigma(1, 3) = cm.sigma(3, 1) = c_re;
  cm.sigma(0, 3) = cm.sigma(3, 0) = c_im;
  cm.sigma(1, 2) = cm.sigma(2, 1) = -c_im;
  return cm;
}

double gaussian_log_negativity(const CovarianceMatrix& cm,
                               const std::vector<std::size_t>& part_a_modes,
                               LogBase base) {
  const std::size_t nm = cm.modes();
  std::vector<bool> in_a(nm, false);
  for (std::size_t m : part_a_modes) {
    if (m >= nm) throw std::invalid_argument("gaussian_log_negativity: bad mode");
    in_a[m] = true;
  }
  // Partial transpose flips the momenta of side B.
  Eigen::VectorXd flip = Eigen::VectorXd::Ones(2 * nm);
  for (std::size_t m = 0; m < nm; ++m) {
    if (!in_a[m]) flip[2 * m + 1] = -1.0;
  }
  Eigen::MatrixXd sig = flip.asDiagonal() * cm.sigma * flip.asDiagonal();
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2 * nm, 2 * nm);
  for (std::size_t m = 0; m < nm; ++m) {
    omega(2 * m, 2 * m + 1) = 1.0;
    omega(2 * m + 1, 2 * m) = -1.0;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(omega * sig, false);
  double ln = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double nu = es.eigenvalues()[i].imag();
    if (nu > 1e-14 && 2 * nu < 1.0) ln -= log_in_base(2 * nu, base);
  }
  return std::max(0.0, ln);
}

double wigner_min(const Mat& rho, const PhaseSpaceGrid& grid) {
  const int d = static_cast<int>(rho.rows());
  int top = 0;
  for (int m = 0; m < d; ++m) {
    if (std::abs(rho(m, m)) > 1e-16) top = m;
  }
  double min_w = std::numeric_limits<double>::infinity();
  double integral = 0;
  const double dx = (grid.x_max - grid.x_min) / static_cast<double>(grid.nx - 1);
  const double dp = (grid.p_max - grid.p_min) / static_cast<double>(grid.np - 1);
  for (std::size_t ip = 0; ip < grid.np; ++ip) {
    double p = grid.p_min + static_cast<double>(ip) * dp;
    for (std::size_t ixx = 0; ixx < grid.nx; ++ixx) {
      double x = grid.x_min + static_cast<double>(ixx) * dx;
      double r2 = x * x + p * p;
      double w = 0;
      // Diagonal: (1/pi) e^{-r^2} sum_m rho_mm (-1)^m L_m(2 r^2).
      for (int m = 0; m <= top; ++m) {
        double pm = rho(m, m).real();
        if (std::abs(pm) < 1e-17) continue;
        double lm = std::assoc_laguerre(static_cast<unsigned>(m), 0, 2 * r2);
        w += pm * ((m % 2) ? -lm : lm);
      }
      // Off-diagonal: 2 Re rho_mn (-1)^m sqrt(m!/n!) (sqrt2 (x - i p))^{n-m} L_m^{n-m}(2 r^2).
      cplx zbar = std::sqrt(2.0) * cplx(x, -p);
      for (int m = 0; m < d; ++m) {
        for (int n = m + 1; n < d; ++n) {
          cplx rmn = rho(m, n);
          if (std::abs(rmn) < 1e-16) continue;
          double logmag = 0.5 * (std::lgamma(m + 1.0) - std::lgamma(n + 1.0));
          cplx zpow = std::pow(zbar, n - m);
          double lag = std::assoc_laguerre(static_cast<unsigned>(m),
                                           static_cast<unsigned>(n - m), 2 * r2);
          double sign = (m % 2) ? -1.0 : 1.0;
          w += 2.0 * (rmn * zpow).real() * sign * std::exp(logmag) * lag;
        }
      }
      w *= std::exp(-r2) / pi;
      min_w = std::min(min_w, w);
      integral += w;
    }
  }
  integral *= dx * dp;
  if (std::abs(integral - 1.0) > 1e-3) {
    throw std::runtime_error("wigner_min: grid too coarse (integral " + format_double(integral) +
                             ")");
  }
  return min_w;
}

double wigner_min(const DensityMatrix& rho, const PhaseSpaceGrid& grid) {
  if (rho.space().mode_count() != 1) {
    throw std::invalid_argument("wigner_min: single-mode state required");
  }
  return wigner_min(rho.elements(), grid);
}

}  // namespace qsplit
