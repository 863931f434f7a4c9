#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "qsplit/hamiltonian.hpp"

namespace qsplit {

/// Strictly increasing, nonnegative dimensionless times tau = rate * t.
struct TimeGrid {
  std::vector<double> tau;

  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> t);
  static TimeGrid uniform(double t_max, double dt, double t0 = 0.0);
  std::size_t size() const { return tau.size(); }
};

/// Result of first-peak selection on a sampled series. `interior` is false
/// when no interior local maximum exists and the global maximum is returned.
struct FirstPeak {
  double tau = 0.0;
  double value = 0.0;
  bool interior = false;
  std::size_t index = 0;
};

/// First strict interior local maximum, refined by parabolic interpolation
/// through the bracketing triple. Plateaus followed by a decline resolve to
/// the earliest plateau point. Requires at least 3 points.
FirstPeak first_peak(std::span<const double> tau, std::span<const double> value);

/// Partition of a Fock space into joint eigenspaces ("shells") of a set of
/// diagonal charges sum_m w_m n_m. With no charges the whole space is one
/// sector. Each sector is exactly closed under any charge-conserving
/// Hamiltonian on the truncated space.
class ShellDecomposition {
 public:
  struct Sector {
    std::vector<long> key;               // one charge value per weight vector
    std::vector<std::uint64_t> basis;    // packed multi-indices, ascending flat order
  };

  ShellDecomposition(const FockSpace& space, std::vector<std::vector<long>> charges);

  const FockSpace& space() const { return space_; }
  const std::vector<std::vector<long>>& charges() const { return charges_; }
  const std::vector<Sector>& sectors() const { return sectors_; }
  std::size_t sector_of_packed(std::uint64_t key) const;
  std::vector<long> key_of_packed(std::uint64_t key) const;

 private:
  FockSpace space_;
  std::vector<std::vector<long>> charges_;
  std::vector<Sector> sectors_;
  std::unordered_map<std::uint64_t, std::uint32_t> sector_index_;  // key hash -> sector
  std::uint64_t key_hash(const std::vector<long>& key) const;
};

/// Sparse amplitude list over packed multi-indices.
using Support = std::vector<std::pair<std::uint64_t, cplx>>;

struct PropagatorOptions {
  std::size_t dense_eig_max_dim = 900;  // sectors above this use Chebyshev stepping
  double chebyshev_tol = 1e-16;
};

/// Exact time propagation, block-diagonal per shell. Sub-Hamiltonians are
/// diagonalised once per sector and reused across the grid and across
/// components sharing a shell; sectors too large to diagonalise are advanced
/// by Chebyshev expansion of exp(-iH dt) to machine accuracy.
class ShellPropagator {
 public:
  ShellPropagator(FockSpace space, std::vector<Monomial> terms,
                  std::vector<std::vector<long>> charges, PropagatorOptions opts = {});

  const FockSpace& space() const { return space_; }
  const ShellDecomposition& shells() const { return shells_; }

  /// Sequential evolver for one initial support; advance_to must be called
  /// with nondecreasing tau.
  class Walker {
   public:
    Walker(const ShellPropagator& prop, const Support& init);
    const Support& advance_to(double tau);
    const Support& support() const { return support_; }
    double norm() const;

   private:
    friend class ShellPropagator;
    struct Slice {
      std::size_t sector;
      Eigen::VectorXcd coeff;   // eigenbasis coordinates (eig path)
      Eigen::VectorXcd state;   // sector-local amplitudes (chebyshev path)
      bool use_eig;
    };
    const ShellPropagator* prop_;
    std::vector<Slice> slices_;
    double current_tau_ = 0.0;
    Support support_;
    void rebuild_support();
  };

  /// One-shot evaluation at arbitrary tau.
  Support evolve_to(const Support& init, double tau) const;

  std::size_t max_sector_dim_touched() const;

 private:
  friend class Walker;
  struct SectorData {
    const ShellDecomposition::Sector* sector;
    std::unordered_map<std::uint64_t, std::uint32_t> index_of;
    SpMat h;
    bool has_eig = false;
    Eigen::VectorXd evals;
    Mat evecs;
    double cheb_center = 0.0, cheb_radius = 0.0;
  };

  const SectorData& sector_data(std::size_t sector_id) const;
  void chebyshev_step(const SectorData& sd, Eigen::VectorXcd& psi, double dtau) const;

  FockSpace space_;
  std::vector<Monomial> terms_;
  ShellDecomposition shells_;
  PropagatorOptions opts_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::size_t, std::unique_ptr<SectorData>> cache_;
  mutable std::size_t max_dim_touched_ = 0;
};

/// Evolve every pure component of `init` under H through the grid. With
/// `charges` supplied the evolution is block-diagonal per shell and exact for
/// components whose shells fit the truncation; without charges the full space
/// is propagated as one block and truncation leakage is detected via the
/// population of the top Fock level of any mode (> 1e-8 raises).
std::vector<ThermalEnsemble> unitary_evolve(const OperatorMatrix& h, const ThermalEnsemble& init,
                                            const TimeGrid& grid,
                                            const std::vector<OperatorMatrix>& charges = {});

Support support_from_state(const StateVector& sv, double drop_below = 0.0);
StateVector state_from_support(const FockSpace& space, const Support& s);

}  // namespace qsplit
