#pragma once

// Exact tabular evaluation and the performance bounds for families of MDPs
// that share semantics up to a state relabeling.

#include <cstddef>
#include <string>
#include <vector>

#include "advp/common/random.hpp"
#include "advp/envgen/tabular.hpp"

namespace advp::theory {

using envgen::TabularFamily;
using envgen::TabularMDP;

/// Row-stochastic (n_states x n_actions) action distribution table.
struct PolicyTable {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> probs;

  double p(std::size_t s, std::size_t a) const { return probs[s * n_actions + a]; }
  double& p(std::size_t s, std::size_t a) { return probs[s * n_actions + a]; }

  /// Throws std::invalid_argument on negative entries or rows off by > 1e-12.
  void validate() const;

  static PolicyTable uniform(std::size_t n_states, std::size_t n_actions);
  /// Rows drawn as normalized positive uniforms.
  static PolicyTable random(std::size_t n_states, std::size_t n_actions, Rng& rng);
  static PolicyTable deterministic(std::size_t n_actions, const std::vector<std::size_t>& actions);
};

/// A policy over a family: one table per member, indexed by the member's
/// observed states. This lets the policy depend on m the way a policy over
/// rendered observations can.
using FamilyPolicy = std::vector<PolicyTable>;

/// The same raw-index table for every member.
FamilyPolicy shared_table(const TabularFamily& family, const PolicyTable& table);
/// An m-invariant policy: member m acts on observed state relabel[m][u]
/// exactly as `semantic` acts on u.
FamilyPolicy lift_semantic(const TabularFamily& family, const PolicyTable& semantic);

struct EvalReport {
  std::vector<double> V;    // per state
  std::vector<double> Q;    // (s, a)
  std::vector<double> A;    // Q - V
  std::vector<double> rho;  // unnormalized discounted visitation
  double eta = 0.0;         // rho0 . V
};

/// Direct linear solves of (I - gamma P_pi) V = r_pi and
/// (I - gamma P_pi^T) rho = rho0.
EvalReport exact_eval(const TabularMDP& mdp, const PolicyTable& pi);

/// Train-distribution and full-distribution expected returns.
double eta(const TabularFamily& family, const FamilyPolicy& pi);
double zeta(const TabularFamily& family, const FamilyPolicy& pi);

struct BoundReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // lhs - rhs
  double r_max = 0.0;
  double A_max = 0.0;
  double C = 0.0;
  double D1 = 0.0;
  double D2 = 0.0;
  double D3 = 0.0;
  double M_pi = 0.0;

  bool holds(double tol = 1e-9) const { return slack >= -tol; }
};

/// zeta(pi) >= eta(pi) - 2 r_max (1 - M) / (1 - gamma).
BoundReport check_theorem1(const TabularFamily& family, const FamilyPolicy& pi);

struct PerfDiffReport {
  double lhs = 0.0;  // eta(pi_tilde)
  double rhs = 0.0;  // eta(pi) + E_{s~rho_tilde, a~pi_tilde}[A^pi(s, a)]
  double abs_error = 0.0;
};
PerfDiffReport check_perf_diff(const TabularMDP& mdp, const PolicyTable& pi,
                               const PolicyTable& pi_tilde);

struct DTerms {
  double D1 = 0.0;
  double D2 = 0.0;
  double D3 = 0.0;
};

/// Exact enumeration over train members and semantic states. Rejects
/// families without shared semantics.
DTerms compute_D_terms(const TabularFamily& family, const FamilyPolicy& pi,
                       const FamilyPolicy& pi_tilde);

/// L_pi(pi_tilde) = eta(pi) + E_m E_{s~rho_pi^m, a~pi_tilde}[A_m^pi(s, a)].
double surrogate(const TabularFamily& family, const FamilyPolicy& pi,
                 const FamilyPolicy& pi_tilde);

/// max over train members, states and actions of |A_m^pi|.
double advantage_max(const TabularFamily& family, const FamilyPolicy& pi);

/// eta(pi_tilde) >= L_pi(pi_tilde) - C (sqrt D1 + sqrt D2 + sqrt D3)^2.
BoundReport check_theorem4(const TabularFamily& family, const FamilyPolicy& pi,
                           const FamilyPolicy& pi_tilde);
/// The intermediate form with D1 alone: eta(pi_tilde) >= L - C D1.
BoundReport check_lemma1(const TabularFamily& family, const FamilyPolicy& pi,
                         const FamilyPolicy& pi_tilde);

/// Per member, the deterministic policy picking the lowest-index argmax of
/// A_m^pi in every state.
FamilyPolicy greedy_policy(const TabularFamily& family, const FamilyPolicy& pi);

/// Convex combination (1 - beta) a + beta b, member by member.
FamilyPolicy mix(const FamilyPolicy& a, const FamilyPolicy& b, double beta);

struct IterationStep {
  double beta = 0.0;       // selected mixing weight (0 keeps the policy)
  double objective = 0.0;  // L - eta - M at the selection
  double eta = 0.0;        // eta of the new policy
};

struct IterationResult {
  std::vector<FamilyPolicy> policies;  // pi_0 .. pi_n
  std::vector<double> eta_trace;       // eta(pi_0) .. eta(pi_n)
  std::vector<IterationStep> steps;
};

/// Conservative policy iteration over mixtures with the greedy policy. Each
/// step maximizes L - eta - M over a beta grid subject to L - eta >= M and
/// keeps pi_i when no candidate qualifies.
IterationResult conservative_iteration(const TabularFamily& family, const FamilyPolicy& pi0,
                                       std::size_t n_iters);

/// Mixing weights searched by conservative_iteration: 0, a log grid on
/// [1e-6, 1] and a linear grid with step 0.05.
std::vector<double> beta_grid();

}  // namespace advp::theory
