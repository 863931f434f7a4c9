#pragma once

#include <span>

#include "qsplit/reduce.hpp"

namespace qsplit {

enum class LogBase { two, e };

inline double log_in_base(double x, LogBase base) {
  return base == LogBase::two ? std::log2(x) : std::log(x);
}

/// Probability vector over Fock index; entries below -1e-12 raise, small
/// negatives are clipped to zero, total must be 1 within 1e-8.
class PhononDistribution {
 public:
  explicit PhononDistribution(std::vector<double> p);
  const std::vector<double>& p() const { return p_; }
  double odd_mass() const;
  double mean() const;

 private:
  std::vector<double> p_;
};

struct KlyshkoEntry {
  int n;
  double b;
  bool violation;
};

/// B(n) = (n+2) P_n P_{n+2} - (n+1) P_{n+1}^2; nonclassicality is flagged
/// where B(n) < -tol. Vanishes identically on Poissonian statistics.
struct KlyshkoReport {
  std::vector<KlyshkoEntry> entries;
  double tol;
  bool any_violation() const;
};
KlyshkoReport klyshko(const PhononDistribution& p, double tol = 1e-10);

struct QuadratureGrid {
  double x_min = -10.0;
  double x_max = 10.0;
  std::size_t n = 4096;
  double dx() const { return (x_max - x_min) / static_cast<double>(n - 1); }
};

/// Quadrature probability density on a uniform grid.
struct QuadraturePdf {
  std::vector<double> x;
  std::vector<double> p;
  double dx = 0.0;

  double riemann_sum() const;
  Moments moments() const;
};

/// Marginal of X_theta from a single-mode density matrix via real
/// harmonic-oscillator eigenfunctions (vacuum variance 1/2). Throws when the
/// grid fails the normalisation or +-6 sigma span checks.
QuadraturePdf quadrature_pdf(const Mat& rho_single_mode, double theta, const QuadratureGrid& grid);
QuadraturePdf quadrature_pdf(const DensityMatrix& rho, double theta, const QuadratureGrid& grid);

/// Sum of |eigenvalue| over independent Hermitian blocks.
double hermitian_abs_eigen_sum(const std::vector<Mat>& blocks);

/// Trace norm of a Hermitian sparse matrix, splitting into connected
/// components of the nonzero pattern first.
double trace_norm_hermitian(const SpMat& m);

/// log of the trace norm of the partial transpose over the second part.
/// Nonnegative; zero for all PPT states.
double log_negativity(const DensityMatrix& rho, const std::vector<ModeIndex>& part_a,
                      LogBase base = LogBase::two);

/// Fast paths over reduced two-mode representations. `trim` drops basis
/// states whose marginal population is below trim (relative to the trace).
double log_negativity(const PairBlockReducer& red, LogBase base = LogBase::two,
                      double trim = 1e-14);
double log_negativity(const PairDenseReducer& red, LogBase base = LogBase::two,
                      double trim = 1e-14);
double log_negativity_two_mode(const Mat& rho, int dim_x, int dim_y,
                               LogBase base = LogBase::two, double trim = 1e-14);

/// Entanglement potential: mix the state with vacuum on a balanced
/// beamsplitter exp((pi/4)(c^dag A - c A^dag)) applied exactly per
/// total-number sector, ancilla dimension matching the state, then take the
/// log-negativity of the output. Zero for classical states.
double entanglement_potential(const Mat& rho_single_mode, LogBase base = LogBase::two,
                              double trim = 1e-13);
double entanglement_potential(std::span<const double> populations, LogBase base = LogBase::two,
                              double trim = 1e-13);
double entanglement_potential(const DensityMatrix& rho_single_mode, LogBase base = LogBase::two);

/// Quadrature second moments (x_1, p_1, x_2, p_2, ...) with vacuum diagonal
/// 1/2, plus first moments. Validated against the uncertainty relation
/// sigma + i Omega / 2 >= -1e-8.
struct CovarianceMatrix {
  Eigen::MatrixXd sigma;
  Eigen::VectorXd mean;
  std::size_t modes() const { return static_cast<std::size_t>(mean.size()) / 2; }
};

CovarianceMatrix covariance(const DensityMatrix& rho, const std::vector<ModeIndex>& modes);
CovarianceMatrix pair_covariance(const PairMoments& pm);

/// Gaussian log-negativity from the covariance matrix: sum over symplectic
/// eigenvalues nu of the partially transposed CM of max(0, -log(2 nu)).
double gaussian_log_negativity(const CovarianceMatrix& cm,
                               const std::vector<std::size_t>& part_a_modes,
                               LogBase base = LogBase::two);

struct PhaseSpaceGrid {
  double x_min = -6.0, x_max = 6.0;
  std::size_t nx = 121;
  double p_min = -6.0, p_max = 6.0;
  std::size_t np = 121;
};

/// Minimum of the Wigner function over the grid, Fock-basis Laguerre kernel,
/// convention W_vac(x,p) = exp(-x^2-p^2)/pi. Throws when the grid integral
/// deviates from 1 by more than 1e-3 (grid too coarse).
double wigner_min(const Mat& rho_single_mode, const PhaseSpaceGrid& grid);
double wigner_min(const DensityMatrix& rho_single_mode, const PhaseSpaceGrid& grid);

}  // namespace qsplit
