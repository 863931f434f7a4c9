#include "qsplit/hamiltonian.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qsplit {

bool Monomial::apply(std::span<const int> occ, std::span<const int> dims, std::span<int> out,
                     cplx& amp) const {
  for (std::size_t m = 0; m < occ.size(); ++m) out[m] = occ[m];
  double mag = 1.0;
  for (const auto& f : factors) {
    int n = out[f.mode];
    for (int k = 0; k < f.annihilate; ++k) {
      if (n == 0) return false;
      mag *= std::sqrt(static_cast<double>(n));
      --n;
    }
    for (int k = 0; k < f.create; ++k) {
      if (n + 1 >= dims[f.mode]) return false;
      ++n;
      mag *= std::sqrt(static_cast<double>(n));
    }
    out[f.mode] = n;
  }
  amp = coeff * mag;
  return true;
}

Monomial Monomial::adjoint() const {
  Monomial adj;
  adj.coeff = std::conj(coeff);
  adj.factors = factors;
  for (auto& f : adj.factors) std::swap(f.create, f.annihilate);
  return adj;
}

std::vector<int> Monomial::mode_shift(std::size_t mode_count) const {
  std::vector<int> shift(mode_count, 0);
  for (const auto& f : factors) shift[f.mode] += f.create - f.annihilate;
  return shift;
}

std::size_t HamiltonianSpec::base_mode_count() const {
  switch (interaction) {
    case Interaction::none:
      return 2;
    case Interaction::degenerate_trilinear:
    case Interaction::higher_order:
      return 2;
    case Interaction::nondegenerate:
    case Interaction::multi_shared_b:
    case Interaction::multi_shared_a:
      return 3;
  }
  throw std::logic_error("unreachable");
}

std::size_t HamiltonianSpec::mode_count() const {
  return base_mode_count() + (aux_coupling ? 1 : 0);
}

ModeIndex HamiltonianSpec::aux_mode() const {
  if (!aux_coupling) throw std::logic_error("no auxiliary mode configured");
  return base_mode_count();
}

std::vector<std::string> HamiltonianSpec::mode_labels() const {
  static const char* names[] = {"a", "b", "c", "d"};
  std::vector<std::string> out;
  for (std::size_t m = 0; m < mode_count(); ++m) out.push_back(names[m]);
  return out;
}

namespace {

Monomial mono(cplx coeff, std::vector<LadderFactor> factors) {
  return Monomial{coeff, std::move(factors)};
}

void push_pair(std::vector<Monomial>& v, const Monomial& m) {
  v.push_back(m);
  v.push_back(m.adjoint());
}

}  // namespace

std::vector<Monomial> HamiltonianSpec::terms() const {
  if (order < 2) throw std::invalid_argument("higher_order: N must be >= 2");
  std::vector<Monomial> out;
  switch (interaction) {
    case Interaction::none:
      break;
    case Interaction::degenerate_trilinear:
      // coupling * (a b^dag^2 + a^dag b^2)
      push_pair(out, mono(coupling, {{0, 0, 1}, {1, 2, 0}}));
      break;
    case Interaction::higher_order:
      // coupling * (a^dag b^N + a b^dag^N)
      push_pair(out, mono(coupling, {{0, 1, 0}, {1, 0, order}}));
      break;
    case Interaction::nondegenerate:
      // coupling * (a^dag b c + a b^dag c^dag)
      push_pair(out, mono(coupling, {{0, 1, 0}, {1, 0, 1}, {2, 0, 1}}));
      break;
    case Interaction::multi_shared_b:
      push_pair(out, mono(coupling, {{0, 0, 1}, {1, 2, 0}}));
      push_pair(out, mono(coupling2, {{2, 0, 1}, {1, 2, 0}}));
      break;
    case Interaction::multi_shared_a:
      push_pair(out, mono(coupling, {{0, 0, 1}, {1, 2, 0}}));
      push_pair(out, mono(coupling2, {{0, 0, 1}, {2, 2, 0}}));
      break;
  }
  if (aux_coupling) {
    // g (b x^dag + b^dag x) with x the appended mode.
    ModeIndex x = aux_mode();
    ModeIndex b = aux_partner();
    push_pair(out, mono(*aux_coupling, {{b, 0, 1}, {x, 1, 0}}));
  }
  if (free_motion_omega) {
    // omega_a = 2 omega_b; all other modes at omega_b.
    double wb = *free_motion_omega;
    for (ModeIndex m = 0; m < mode_count(); ++m) {
      double w = (m == 0) ? 2.0 * wb : wb;
      if (w != 0.0) out.push_back(mono(w, {{m, 1, 1}}));
    }
  }
  return out;
}

std::vector<std::vector<long>> HamiltonianSpec::charge_weights() const {
  const std::size_t n = mode_count();
  auto pad = [&](std::vector<long> w) {
    w.resize(n, 0);
    return w;
  };
  std::vector<std::vector<long>> charges;
  switch (interaction) {
    case Interaction::none:
      if (aux_coupling) {
        // Pure beamsplitter conserves each untouched mode and the coupled total.
        std::vector<long> w(n, 0);
        w[aux_partner()] = 1;
        w[aux_mode()] = 1;
        charges.push_back(w);
        for (ModeIndex m = 0; m < n; ++m) {
          if (m != aux_partner() && m != aux_mode()) {
            std::vector<long> wm(n, 0);
            wm[m] = 1;
            charges.push_back(wm);
          }
        }
      } else {
        // Free motion only: every number operator commutes.
        for (ModeIndex m = 0; m < n; ++m) {
          std::vector<long> wm(n, 0);
          wm[m] = 1;
          charges.push_back(wm);
        }
      }
      break;
    case Interaction::degenerate_trilinear:
      charges.push_back(pad(aux_coupling ? std::vector<long>{2, 1, 1}
                                         : std::vector<long>{2, 1}));
      break;
    case Interaction::higher_order:
      charges.push_back(pad(aux_coupling ? std::vector<long>{order, 1, 1}
                                         : std::vector<long>{order, 1}));
      break;
    case Interaction::nondegenerate:
      if (aux_coupling) {
        charges.push_back(pad({1, 1, 0, 1}));
        charges.push_back(pad({1, 0, 1, 0}));
      } else {
        charges.push_back(pad({1, 1, 0}));
        charges.push_back(pad({1, 0, 1}));
      }
      break;
    case Interaction::multi_shared_b:
      charges.push_back(pad({2, 1, 2}));
      break;
    case Interaction::multi_shared_a:
      charges.push_back(pad({2, 1, 1}));
      break;
  }
  return charges;
}

std::string HamiltonianSpec::label() const {
  std::ostringstream os;
  switch (interaction) {
    case Interaction::none: os << "none"; break;
    case Interaction::degenerate_trilinear: os << "degenerate_trilinear"; break;
    case Interaction::higher_order: os << "higher_order(N=" << order << ")"; break;
    case Interaction::nondegenerate: os << "nondegenerate"; break;
    case Interaction::multi_shared_b: os << "multi_shared_b"; break;
    case Interaction::multi_shared_a: os << "multi_shared_a"; break;
  }
  if (aux_coupling) os << "+aux(g=" << *aux_coupling << ")";
  if (free_motion_omega) os << "+free(w_b=" << *free_motion_omega << ")";
  return os.str();
}

SpMat assemble(const std::vector<Monomial>& terms, const FockSpace& space) {
  const std::size_t total = space.total_dim();
  std::vector<Eigen::Triplet<cplx>> trip;
  std::vector<int> occ(space.mode_count()), out(space.mode_count());
  for (std::size_t col = 0; col < total; ++col) {
    space.unflatten(col, occ);
    for (const auto& t : terms) {
      cplx amp;
      if (t.apply(occ, space.dims(), out, amp)) {
        trip.emplace_back(static_cast<int>(space.flat_index(out)), static_cast<int>(col), amp);
      }
    }
  }
  SpMat m(total, total);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

OperatorMatrix build(const HamiltonianSpec& spec, const FockSpace& space) {
  if (space.mode_count() != spec.mode_count()) {
    throw std::invalid_argument("build: space has " + std::to_string(space.mode_count()) +
                                " modes, spec needs " + std::to_string(spec.mode_count()));
  }
  return OperatorMatrix(space, assemble(spec.terms(), space), true);
}

std::vector<OperatorMatrix> conserved_charges(const HamiltonianSpec& spec,
                                              const FockSpace& space) {
  if (space.mode_count() != spec.mode_count()) {
    throw std::invalid_argument("conserved_charges: space/spec mode count mismatch");
  }
  std::vector<OperatorMatrix> out;
  for (const auto& w : spec.charge_weights()) {
    const std::size_t total = space.total_dim();
    std::vector<Eigen::Triplet<cplx>> trip;
    std::vector<int> occ(space.mode_count());
    for (std::size_t i = 0; i < total; ++i) {
      space.unflatten(i, occ);
      long q = 0;
      for (std::size_t m = 0; m < occ.size(); ++m) q += w[m] * occ[m];
      if (q != 0) trip.emplace_back(static_cast<int>(i), static_cast<int>(i),
                                    static_cast<double>(q));
    }
    SpMat m(total, total);
    m.setFromTriplets(trip.begin(), trip.end());
    out.push_back(OperatorMatrix(space, std::move(m), true));
  }
  return out;
}

Monomial LadderJump::monomial() const {
  return Monomial{amplitude, {{mode, raising ? 1 : 0, raising ? 0 : 1}}};
}

std::vector<LadderJump> jump_terms(const LindbladSpec& spec) {
  if (spec.nbar_th < 0) throw std::invalid_argument("LindbladSpec: nbar_th must be >= 0");
  std::vector<LadderJump> out;
  for (ModeIndex m = 0; m < spec.rates.size(); ++m) {
    double lam = spec.rates[m];
    if (lam < 0) throw std::invalid_argument("LindbladSpec: negative rate");
    if (lam == 0) continue;
    out.push_back({m, false, std::sqrt(lam * (1.0 + spec.nbar_th))});
    if (spec.nbar_th > 0) out.push_back({m, true, std::sqrt(lam * spec.nbar_th)});
  }
  return out;
}

std::vector<OperatorMatrix> jump_operators(const LindbladSpec& spec, const FockSpace& space) {
  if (spec.rates.size() > space.mode_count()) {
    throw std::invalid_argument("jump_operators: more rates than modes");
  }
  std::vector<OperatorMatrix> out;
  for (const auto& j : jump_terms(spec)) {
    out.push_back(OperatorMatrix(space, assemble({j.monomial()}, space), false));
  }
  return out;
}

}  // namespace qsplit
