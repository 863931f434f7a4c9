#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qsplit/util.hpp"

namespace qsplit {

using ModeIndex = std::size_t;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<cplx>;

/// Register of bosonic modes with per-mode truncation dimensions.
///
/// Basis states are labelled by occupation multi-indices (n_0, ..., n_{M-1}).
/// The flat index is row-major over modes in declared order: mode 0 is the
/// most significant, so flat = ((n_0 * d_1 + n_1) * d_2 + n_2) * ... .
class FockSpace {
 public:
  explicit FockSpace(std::vector<int> mode_dims);

  std::size_t mode_count() const { return dims_.size(); }
  int dim(ModeIndex m) const { return dims_.at(m); }
  const std::vector<int>& dims() const { return dims_; }
  std::size_t total_dim() const { return total_; }
  std::size_t stride(ModeIndex m) const { return strides_.at(m); }

  std::size_t flat_index(std::span<const int> occ) const;
  void unflatten(std::size_t flat, std::span<int> occ) const;

  /// Packed multi-index: one byte per mode, mode m in bits [8m, 8m+8).
  /// Requires every dim <= 256; enforced at construction.
  std::uint64_t pack(std::span<const int> occ) const;
  void unpack(std::uint64_t key, std::span<int> occ) const;
  std::uint64_t pack_flat(std::size_t flat) const;
  std::size_t flat_of_packed(std::uint64_t key) const;

  bool operator==(const FockSpace& other) const { return dims_ == other.dims_; }
  bool operator!=(const FockSpace& other) const { return !(*this == other); }

  void require_mode(ModeIndex m) const;
  std::string describe() const;

 private:
  std::vector<int> dims_;
  std::vector<std::size_t> strides_;
  std::size_t total_ = 1;
};

/// Pure state; amplitudes indexed by flat basis index. Normalised to 1
/// within 1e-10 on construction.
struct StateVector {
  FockSpace space;
  Vec amplitudes;

  StateVector(FockSpace s, Vec a);
  double norm() const { return amplitudes.norm(); }
};

/// Mixed state. Construction validates Hermiticity (1e-10), unit trace
/// (1e-8) and, for Validate::full, positivity (smallest eigenvalue >= -1e-8).
class DensityMatrix {
 public:
  enum class Validate { full, basic, none };

  DensityMatrix(FockSpace s, Mat m, Validate v = Validate::full);

  const FockSpace& space() const { return space_; }
  const Mat& elements() const { return m_; }
  Mat& elements() { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

  double trace_error() const;
  double hermiticity_error() const;
  double min_eigenvalue() const;

 private:
  FockSpace space_;
  Mat m_;
};

struct WeightedComponent {
  double weight;
  StateVector state;
};

/// Weighted mixture of pure components over a truncated space. Weights are
/// nonnegative and sum to 1 within 1e-10 after tail truncation/renormalisation.
struct ThermalEnsemble {
  FockSpace space;
  std::vector<WeightedComponent> components;

  double weight_sum() const;
  DensityMatrix to_density_matrix(DensityMatrix::Validate v = DensityMatrix::Validate::basic) const;
};

/// Declarative single-mode preparation.
struct StatePrep {
  enum class Kind { ground, fock, thermal, coherent, prcs };

  Kind kind = Kind::ground;
  int fock_n = 0;        // fock
  double nbar = 0.0;     // thermal mean occupation
  double alpha_mag = 0.0;    // coherent |alpha|
  double alpha_phase = 0.0;  // coherent arg(alpha), radians
  double mu = 0.0;       // prcs mean occupation |alpha|^2

  static StatePrep ground();
  static StatePrep fock(int n);
  static StatePrep thermal(double nbar);
  static StatePrep coherent(double mag, double phase = 0.0);
  static StatePrep prcs(double mu);

  /// Smallest dimension that keeps all but eps_tail of the weight.
  int required_dim(double eps_tail) const;
  std::string describe() const;
};

/// Complex operator on a FockSpace, sparse-backed. A Hermiticity flag is
/// recorded when asserted by the producer and can be verified on demand.
class OperatorMatrix {
 public:
  OperatorMatrix(FockSpace s, SpMat m, bool hermitian = false);

  const FockSpace& space() const { return space_; }
  const SpMat& sparse() const { return m_; }
  Mat dense() const { return Mat(m_); }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

  bool hermitian_hint() const { return hermitian_; }
  /// max |M - M^dagger| entry.
  double hermiticity_error() const;

  OperatorMatrix adjoint() const;

 private:
  FockSpace space_;
  SpMat m_;
  bool hermitian_;
};

/// Annihilation operator of `mode` embedded in the full space; its adjoint
/// is the creation operator.
OperatorMatrix ladder(const FockSpace& space, ModeIndex mode);

/// Occupation-number operator of `mode`.
OperatorMatrix number_operator(const FockSpace& space, ModeIndex mode);

/// One pure component of a single-mode preparation: weight plus sparse
/// amplitudes (fock index, amplitude).
struct ModeComponent {
  double weight;
  std::vector<std::pair<int, cplx>> amplitudes;
};

/// Decompose a single-mode preparation into weighted pure components over a
/// dim-dimensional mode. Throws if `dim` cannot reach the eps_tail cutoff.
std::vector<ModeComponent> mode_components(const StatePrep& prep, int dim, double eps_tail);

/// Product preparation of all modes; components are tensor products of the
/// per-mode components with multiplied weights.
ThermalEnsemble prepare(const FockSpace& space, const std::vector<StatePrep>& preps,
                        double eps_tail = 1e-6);

DensityMatrix prepare_density(const FockSpace& space, const std::vector<StatePrep>& preps,
                              double eps_tail = 1e-6);

/// Reduced state over `keep` (order preserved from declared mode order).
DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<ModeIndex>& keep);

/// Transpose the listed modes; Hermitian, trace one, possibly indefinite.
OperatorMatrix partial_transpose(const DensityMatrix& rho,
                                 const std::vector<ModeIndex>& transposed);

DensityMatrix tensor_product(const DensityMatrix& a, const DensityMatrix& b);

struct Moments {
  double mean;
  double variance;
};

/// Mean and variance of the generalised quadrature
/// X_theta = (b e^{-i theta/2} + b^dagger e^{i theta/2}) / sqrt(2)
/// for the given mode; vacuum variance is 1/2.
Moments quadrature_moments(const DensityMatrix& rho, ModeIndex mode, double theta);
Moments quadrature_moments(const ThermalEnsemble& ens, ModeIndex mode, double theta);

/// Ladder moments <b>, <b^2>, <b^dagger b> of a single-mode density matrix.
struct LadderMoments {
  cplx mean_b;
  cplx mean_b2;
  double mean_n;
};
LadderMoments ladder_moments(const Mat& rho_single_mode);
Moments quadrature_moments_from(const LadderMoments& lm, double theta);

}  // namespace qsplit
