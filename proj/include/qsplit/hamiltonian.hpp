#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qsplit/fock.hpp"

namespace qsplit {

/// Normal-ordered ladder monomial: coeff * prod_m (a_m^dagger)^create (a_m)^annihilate.
struct LadderFactor {
  ModeIndex mode;
  int create = 0;
  int annihilate = 0;
};

struct Monomial {
  cplx coeff;
  std::vector<LadderFactor> factors;

  /// Apply to an occupation multi-index. Returns false when annihilation hits
  /// the vacuum or creation exceeds the truncation (the transition is dropped).
  /// On success writes the target occupations and the transition amplitude.
  bool apply(std::span<const int> occ, std::span<const int> dims, std::span<int> out,
             cplx& amp) const;

  Monomial adjoint() const;

  /// Net occupation change per mode (create - annihilate).
  std::vector<int> mode_shift(std::size_t mode_count) const;
};

/// Declarative interaction description. Couplings are in units of the
/// reference rate (the trilinear coupling, set to 1); time is tau = rate * t.
struct HamiltonianSpec {
  enum class Interaction {
    none,                  // no nonlinear interaction (linear/free terms only)
    degenerate_trilinear,  // coupling * (a b^dag^2 + a^dag b^2)
    higher_order,          // coupling * (a^dag b^N + a b^dag^N)
    nondegenerate,         // coupling * (a^dag b c + a b^dag c^dag)
    multi_shared_b,        // coupling*(a b^dag^2 + h.c.) + coupling2*(c b^dag^2 + h.c.)
    multi_shared_a,        // coupling*(a b^dag^2 + h.c.) + coupling2*(a c^dag^2 + h.c.)
  };

  Interaction interaction = Interaction::degenerate_trilinear;
  double coupling = 1.0;
  double coupling2 = 1.0;
  int order = 2;  // N for higher_order, >= 2

  /// Linear coupling g (b x^dag + b^dag x) to an appended auxiliary mode x.
  std::optional<double> aux_coupling;

  /// Free-motion terms sum_k omega_k n_k with omega_a = 2 omega_b and all
  /// other modes at omega_b; the stored value is omega_b.
  std::optional<double> free_motion_omega;

  std::size_t base_mode_count() const;
  std::size_t mode_count() const;
  /// Index of the appended auxiliary mode (only valid when aux_coupling set).
  ModeIndex aux_mode() const;
  /// Mode the auxiliary couples to (mode b).
  ModeIndex aux_partner() const { return 1; }

  /// Mode labels in declared order: a, b, c, d.
  std::vector<std::string> mode_labels() const;

  /// Full Hermitian term list (conjugate pairs included explicitly).
  std::vector<Monomial> terms() const;

  /// Integer weight vectors w with [H, sum_m w_m n_m] = 0; empty when no
  /// exact charge is known.
  std::vector<std::vector<long>> charge_weights() const;

  std::string label() const;
};

/// Assemble the Hamiltonian on `space`. Hermitian by construction.
OperatorMatrix build(const HamiltonianSpec& spec, const FockSpace& space);

/// Conserved charges as operators; one entry per weight vector (diagonal
/// number-operator combinations). Empty when no exact charge exists.
std::vector<OperatorMatrix> conserved_charges(const HamiltonianSpec& spec,
                                              const FockSpace& space);

/// Assemble a sparse operator from monomials (used for jump operators and
/// sector submatrices as well as full Hamiltonians).
SpMat assemble(const std::vector<Monomial>& terms, const FockSpace& space);

/// Bath coupling description: per-mode rates lambda_k >= 0 and a common bath
/// occupation nbar_th >= 0.
struct LindbladSpec {
  std::vector<double> rates;
  double nbar_th = 0.0;
};

/// A single jump operator sqrt(rate_eff) * a_m or sqrt(rate_eff) * a_m^dagger.
struct LadderJump {
  ModeIndex mode;
  bool raising;
  double amplitude;  // sqrt(lambda (1+nbar_th)) or sqrt(lambda nbar_th)

  Monomial monomial() const;
};

/// Jump set {sqrt(lambda_k (1+nbar_th)) a_k, sqrt(lambda_k nbar_th) a_k^dag}
/// per damped mode; the raising member is omitted when nbar_th = 0.
std::vector<LadderJump> jump_terms(const LindbladSpec& spec);
std::vector<OperatorMatrix> jump_operators(const LindbladSpec& spec, const FockSpace& space);

}  // namespace qsplit
