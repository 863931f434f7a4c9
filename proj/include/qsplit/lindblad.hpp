#pragma once

#include "qsplit/evolution.hpp"

namespace qsplit {

struct LindbladOptions {
  double initial_dt = 0.01;
  double observable_tol = 1e-6;  // grid-state convergence threshold under halving
  int max_halvings = 12;
  double positivity_floor = -1e-5;
  double trace_tol = 1e-6;  // allowed drift per unit tau
};

/// Fixed-step 4th-order integration of
///   drho/dt = -i[H, rho] + sum_k (L rho L^dag - 1/2 {rho, L^dag L}),
/// with Hermitisation each step and step halving until the grid states
/// change by less than observable_tol (Frobenius norm). Throws on step-size
/// underflow, trace drift beyond trace_tol per unit tau, or positivity
/// violation beyond positivity_floor (truncation inadequacy).
std::vector<DensityMatrix> lindblad_evolve(const OperatorMatrix& h,
                                           const std::vector<OperatorMatrix>& jumps,
                                           const DensityMatrix& rho0, const TimeGrid& grid,
                                           LindbladOptions opts = {});

/// Density-matrix propagation restricted to the charge-sector block diagonal.
/// Valid when the initial state is block-diagonal over the joint charge
/// sectors (diagonal Fock mixtures are) and H conserves the charges; jumps
/// shift whole sectors and keep the block structure intact.
class BlockedLindblad {
 public:
  BlockedLindblad(FockSpace space, std::vector<Monomial> h_terms,
                  std::vector<std::vector<long>> charges, std::vector<LadderJump> jumps);

  /// Initial mixture of pure components, each lying in a single sector.
  void set_initial(const std::vector<std::pair<double, Support>>& components);

  /// Advance with fixed RK4 steps of size <= dt; tau must be nondecreasing.
  void advance_to(double tau, double dt);

  double current_tau() const { return tau_; }
  double trace() const;
  double min_block_eigenvalue() const;

  const ShellDecomposition& shells() const { return shells_; }
  /// Per-sector diagonal blocks; empty matrix when a sector carries no weight.
  const std::vector<Mat>& blocks() const { return rho_; }

 private:
  void rhs(const std::vector<Mat>& state, std::vector<Mat>& out) const;

  FockSpace space_;
  ShellDecomposition shells_;
  std::vector<SpMat> h_blocks_;                      // per sector
  struct JumpBlocks {
    std::vector<int> target;                         // sector -> target sector (-1 none)
    std::vector<SpMat> block;                        // L restricted, per source sector
    std::vector<SpMat> block_adj;                    // L^dag restricted
    std::vector<SpMat> ldl;                          // L^dag L restricted, per sector
  };
  std::vector<JumpBlocks> jumps_;
  std::vector<char> active_;
  std::vector<Mat> rho_;
  double tau_ = 0.0;
};

}  // namespace qsplit
