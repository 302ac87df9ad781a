#include "advp/theory/bounds.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advp::theory {
namespace {

void require_compatible(const TabularFamily& family, const FamilyPolicy& pi) {
  if (pi.size() != family.members.size())
    throw std::invalid_argument("family policy has " + std::to_string(pi.size()) +
                                " tables for " + std::to_string(family.members.size()) +
                                " members");
  for (std::size_t m = 0; m < pi.size(); ++m) {
    const TabularMDP& mdp = family.members[m];
    if (pi[m].n_states != mdp.n_states || pi[m].n_actions != mdp.n_actions)
      throw std::invalid_argument("policy table " + std::to_string(m) +
                                  " does not match its member's state/action sizes");
  }
}

void require_shared(const TabularFamily& family) {
  if (!family.shared_semantics)
    throw std::invalid_argument(
        "family does not share semantics; semantic states cannot be enumerated");
}

double tv(const PolicyTable& a, std::size_t sa, const PolicyTable& b, std::size_t sb) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.n_actions; ++k) d += std::abs(a.p(sa, k) - b.p(sb, k));
  return 0.5 * d;
}

// max over u of TV(p_m(.|phi_m(u)), q_n(.|phi_n(u))), squared.
double max_tv_sq(const TabularFamily& family, const PolicyTable& p, std::size_t m,
                 const PolicyTable& q, std::size_t n) {
  const std::size_t S = family.members[m].n_states;
  double best = 0.0;
  for (std::size_t u = 0; u < S; ++u)
    best = std::max(best, tv(p, family.relabel[m][u], q, family.relabel[n][u]));
  return best * best;
}

}  // namespace

void PolicyTable::validate() const {
  if (probs.size() != n_states * n_actions)
    throw std::invalid_argument("PolicyTable: size does not match n_states x n_actions");
  for (std::size_t s = 0; s < n_states; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) {
      if (!(p(s, a) >= 0.0)) throw std::invalid_argument("PolicyTable: negative probability");
      total += p(s, a);
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("PolicyTable: row " + std::to_string(s) + " sums to " +
                                  std::to_string(total));
  }
}

PolicyTable PolicyTable::uniform(std::size_t n_states, std::size_t n_actions) {
  return {n_states, n_actions,
          std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions))};
}

PolicyTable PolicyTable::random(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  PolicyTable pi{n_states, n_actions, std::vector<double>(n_states * n_actions)};
  for (std::size_t s = 0; s < n_states; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) total += (pi.p(s, a) = uniform01(rng) + 1e-3);
    for (std::size_t a = 0; a < n_actions; ++a) pi.p(s, a) /= total;
  }
  return pi;
}

PolicyTable PolicyTable::deterministic(std::size_t n_actions,
                                       const std::vector<std::size_t>& actions) {
  PolicyTable pi{actions.size(), n_actions, std::vector<double>(actions.size() * n_actions, 0.0)};
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw std::invalid_argument("deterministic: action out of range");
    pi.p(s, actions[s]) = 1.0;
  }
  return pi;
}

FamilyPolicy shared_table(const TabularFamily& family, const PolicyTable& table) {
  return FamilyPolicy(family.members.size(), table);
}

FamilyPolicy lift_semantic(const TabularFamily& family, const PolicyTable& semantic) {
  FamilyPolicy out;
  for (std::size_t m = 0; m < family.members.size(); ++m) {
    PolicyTable t = semantic;
    for (std::size_t u = 0; u < semantic.n_states; ++u)
      for (std::size_t a = 0; a < semantic.n_actions; ++a)
        t.p(family.relabel[m][u], a) = semantic.p(u, a);
    out.push_back(std::move(t));
  }
  return out;
}

EvalReport exact_eval(const TabularMDP& mdp, const PolicyTable& pi) {
  mdp.validate();
  pi.validate();
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  if (pi.n_states != S || pi.n_actions != A)
    throw std::invalid_argument("exact_eval: policy and MDP sizes differ");
  const auto n = static_cast<Eigen::Index>(S);
  Eigen::MatrixXd P_pi = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd r_pi = Eigen::VectorXd::Zero(n);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      const double w = pi.p(s, a);
      r_pi(static_cast<Eigen::Index>(s)) += w * mdp.reward(s, a);
      for (std::size_t s2 = 0; s2 < S; ++s2)
        P_pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2)) += w * mdp.p(s, a, s2);
    }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I - mdp.gamma * P_pi);
  if (!(std::abs(lu.determinant()) > 0.0))
    throw std::runtime_error("exact_eval: singular evaluation system");
  const Eigen::VectorXd V = lu.solve(r_pi);
  Eigen::VectorXd rho0(n);
  for (std::size_t s = 0; s < S; ++s) rho0(static_cast<Eigen::Index>(s)) = mdp.rho0[s];
  const Eigen::VectorXd rho =
      Eigen::PartialPivLU<Eigen::MatrixXd>(I - mdp.gamma * P_pi.transpose()).solve(rho0);

  EvalReport out;
  out.V.assign(V.data(), V.data() + n);
  out.rho.assign(rho.data(), rho.data() + n);
  out.Q.assign(S * A, 0.0);
  out.A.assign(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      double next = 0.0;
      for (std::size_t s2 = 0; s2 < S; ++s2) next += mdp.p(s, a, s2) * out.V[s2];
      out.Q[s * A + a] = mdp.reward(s, a) + mdp.gamma * next;
      out.A[s * A + a] = out.Q[s * A + a] - out.V[s];
    }
  for (std::size_t s = 0; s < S; ++s) out.eta += mdp.rho0[s] * out.V[s];
  return out;
}

double eta(const TabularFamily& family, const FamilyPolicy& pi) {
  require_compatible(family, pi);
  double total = 0.0;
  for (std::size_t m : family.levels.train_indices())
    total += family.levels.p_train(m) * exact_eval(family.members[m], pi[m]).eta;
  return total;
}

double zeta(const TabularFamily& family, const FamilyPolicy& pi) {
  require_compatible(family, pi);
  double total = 0.0;
  for (std::size_t m = 0; m < family.members.size(); ++m)
    total += family.levels.p_full(m) * exact_eval(family.members[m], pi[m]).eta;
  return total;
}

BoundReport check_theorem1(const TabularFamily& family, const FamilyPolicy& pi) {
  BoundReport rep;
  rep.name = "theorem1";
  double gamma = family.members.front().gamma;
  for (const TabularMDP& mdp : family.members) {
    if (mdp.gamma != gamma) throw std::invalid_argument("check_theorem1: members differ in gamma");
    for (double r : mdp.r) rep.r_max = std::max(rep.r_max, std::abs(r));
  }
  const double M = family.levels.m_coeff();
  rep.lhs = zeta(family, pi);
  rep.rhs = eta(family, pi) - 2.0 * rep.r_max * (1.0 - M) / (1.0 - gamma);
  rep.slack = rep.lhs - rep.rhs;
  return rep;
}

PerfDiffReport check_perf_diff(const TabularMDP& mdp, const PolicyTable& pi,
                               const PolicyTable& pi_tilde) {
  const EvalReport base = exact_eval(mdp, pi);
  const EvalReport next = exact_eval(mdp, pi_tilde);
  double expected_adv = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      expected_adv += next.rho[s] * pi_tilde.p(s, a) * base.A[s * mdp.n_actions + a];
  PerfDiffReport rep;
  rep.lhs = next.eta;
  rep.rhs = base.eta + expected_adv;
  rep.abs_error = std::abs(rep.lhs - rep.rhs);
  return rep;
}

DTerms compute_D_terms(const TabularFamily& family, const FamilyPolicy& pi,
                       const FamilyPolicy& pi_tilde) {
  require_shared(family);
  require_compatible(family, pi);
  require_compatible(family, pi_tilde);
  DTerms d;
  const auto& train = family.levels.train_indices();
  for (std::size_t m : train) {
    const double pm = family.levels.p_train(m);
    d.D1 += pm * max_tv_sq(family, pi[m], m, pi_tilde[m], m);
    for (std::size_t n : train) {
      const double pmn = pm * family.levels.p_train(n);
      d.D2 += pmn * max_tv_sq(family, pi[m], m, pi[n], n);
      d.D3 += pmn * max_tv_sq(family, pi_tilde[m], m, pi_tilde[n], n);
    }
  }
  return d;
}

double surrogate(const TabularFamily& family, const FamilyPolicy& pi,
                 const FamilyPolicy& pi_tilde) {
  require_compatible(family, pi);
  require_compatible(family, pi_tilde);
  double total = 0.0;
  for (std::size_t m : family.levels.train_indices()) {
    const TabularMDP& mdp = family.members[m];
    const EvalReport ev = exact_eval(mdp, pi[m]);
    double adv = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      for (std::size_t a = 0; a < mdp.n_actions; ++a)
        adv += ev.rho[s] * pi_tilde[m].p(s, a) * ev.A[s * mdp.n_actions + a];
    total += family.levels.p_train(m) * (ev.eta + adv);
  }
  return total;
}

double advantage_max(const TabularFamily& family, const FamilyPolicy& pi) {
  require_compatible(family, pi);
  double best = 0.0;
  for (std::size_t m : family.levels.train_indices())
    for (double a : exact_eval(family.members[m], pi[m]).A) best = std::max(best, std::abs(a));
  return best;
}

namespace {

BoundReport bound_common(const TabularFamily& family, const FamilyPolicy& pi,
                         const FamilyPolicy& pi_tilde, const char* name) {
  BoundReport rep;
  rep.name = name;
  const double gamma = family.members.front().gamma;
  for (const TabularMDP& mdp : family.members)
    if (mdp.gamma != gamma) throw std::invalid_argument(std::string(name) + ": members differ in gamma");
  const DTerms d = compute_D_terms(family, pi, pi_tilde);
  rep.D1 = d.D1;
  rep.D2 = d.D2;
  rep.D3 = d.D3;
  rep.A_max = advantage_max(family, pi);
  rep.C = 4.0 * gamma * rep.A_max / ((1.0 - gamma) * (1.0 - gamma));
  rep.lhs = eta(family, pi_tilde);
  return rep;
}

}  // namespace

BoundReport check_theorem4(const TabularFamily& family, const FamilyPolicy& pi,
                           const FamilyPolicy& pi_tilde) {
  BoundReport rep = bound_common(family, pi, pi_tilde, "theorem4");
  const double root = std::sqrt(rep.D1) + std::sqrt(rep.D2) + std::sqrt(rep.D3);
  rep.M_pi = rep.C * root * root;
  rep.rhs = surrogate(family, pi, pi_tilde) - rep.M_pi;
  rep.slack = rep.lhs - rep.rhs;
  return rep;
}

BoundReport check_lemma1(const TabularFamily& family, const FamilyPolicy& pi,
                         const FamilyPolicy& pi_tilde) {
  BoundReport rep = bound_common(family, pi, pi_tilde, "lemma1");
  rep.M_pi = rep.C * rep.D1;
  rep.rhs = surrogate(family, pi, pi_tilde) - rep.M_pi;
  rep.slack = rep.lhs - rep.rhs;
  return rep;
}

FamilyPolicy greedy_policy(const TabularFamily& family, const FamilyPolicy& pi) {
  require_compatible(family, pi);
  FamilyPolicy out;
  for (std::size_t m = 0; m < family.members.size(); ++m) {
    const TabularMDP& mdp = family.members[m];
    const EvalReport ev = exact_eval(mdp, pi[m]);
    std::vector<std::size_t> actions(mdp.n_states);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const auto row = ev.A.begin() + static_cast<std::ptrdiff_t>(s * mdp.n_actions);
      actions[s] = static_cast<std::size_t>(
          std::max_element(row, row + static_cast<std::ptrdiff_t>(mdp.n_actions)) - row);
    }
    out.push_back(PolicyTable::deterministic(mdp.n_actions, actions));
  }
  return out;
}

FamilyPolicy mix(const FamilyPolicy& a, const FamilyPolicy& b, double beta) {
  if (a.size() != b.size()) throw std::invalid_argument("mix: family sizes differ");
  FamilyPolicy out = a;
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (a[m].probs.size() != b[m].probs.size())
      throw std::invalid_argument("mix: table sizes differ");
    for (std::size_t k = 0; k < a[m].probs.size(); ++k)
      out[m].probs[k] = (1.0 - beta) * a[m].probs[k] + beta * b[m].probs[k];
  }
  return out;
}

std::vector<double> beta_grid() {
  std::vector<double> grid{0.0};
  for (int k = -24; k <= 0; ++k) grid.push_back(std::pow(10.0, k / 4.0));
  for (int k = 1; k < 20; ++k) grid.push_back(0.05 * k);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

IterationResult conservative_iteration(const TabularFamily& family, const FamilyPolicy& pi0,
                                       std::size_t n_iters) {
  require_shared(family);
  require_compatible(family, pi0);
  const double gamma = family.members.front().gamma;
  IterationResult out;
  out.policies.push_back(pi0);
  out.eta_trace.push_back(eta(family, pi0));
  const std::vector<double> grid = beta_grid();
  for (std::size_t it = 0; it < n_iters; ++it) {
    const FamilyPolicy& current = out.policies.back();
    const double eta_i = out.eta_trace.back();
    const FamilyPolicy greedy = greedy_policy(family, current);
    const double C = 4.0 * gamma * advantage_max(family, current) / ((1.0 - gamma) * (1.0 - gamma));

    IterationStep best;
    bool found = false;
    FamilyPolicy chosen = current;
    for (double beta : grid) {
      FamilyPolicy cand = mix(current, greedy, beta);
      const DTerms d = compute_D_terms(family, current, cand);
      const double root = std::sqrt(d.D1) + std::sqrt(d.D2) + std::sqrt(d.D3);
      const double gain = surrogate(family, current, cand) - eta_i;
      const double penalty = C * root * root;
      if (gain < penalty) continue;
      const double objective = gain - penalty;
      if (!found || objective > best.objective) {
        found = true;
        best.beta = beta;
        best.objective = objective;
        chosen = std::move(cand);
      }
    }
    if (!found) {
      best = IterationStep{};
      chosen = current;
    }
    best.eta = eta(family, chosen);
    if (best.eta < eta_i - 1e-9)
      throw std::logic_error("conservative_iteration: eta decreased at iteration " +
                             std::to_string(it));
    out.steps.push_back(best);
    out.eta_trace.push_back(best.eta);
    out.policies.push_back(std::move(chosen));
  }
  return out;
}

}  // namespace advp::theory
