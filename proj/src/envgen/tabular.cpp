#include "advp/envgen/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "advp/common/random.hpp"

namespace advp::envgen {
namespace {

void check_distribution(const double* p, std::size_t n, const std::string& what) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] >= 0.0)) throw std::invalid_argument(what + ": negative or NaN probability");
    total += p[i];
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument(what + ": sums to " + std::to_string(total));
}

// Positive draws normalized to sum to one.
void random_distribution(double* out, std::size_t n, Rng& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = uniform01(rng) + 1e-3;
    total += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= total;
}

TabularMDP random_mdp(Rng& rng, std::size_t n_states, std::size_t n_actions, double gamma) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.P.resize(n_states * n_actions * n_states);
  mdp.r.resize(n_states * n_actions);
  mdp.rho0.resize(n_states);
  for (std::size_t sa = 0; sa < n_states * n_actions; ++sa)
    random_distribution(&mdp.P[sa * n_states], n_states, rng);
  for (double& r : mdp.r) r = 2.0 * uniform01(rng) - 1.0;
  random_distribution(mdp.rho0.data(), n_states, rng);
  return mdp;
}

}  // namespace

void TabularMDP::validate() const {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("TabularMDP: empty state/action set");
  if (P.size() != n_states * n_actions * n_states || r.size() != n_states * n_actions ||
      rho0.size() != n_states)
    throw std::invalid_argument("TabularMDP: array sizes do not match n_states/n_actions");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMDP: gamma outside (0,1)");
  for (std::size_t sa = 0; sa < n_states * n_actions; ++sa)
    check_distribution(&P[sa * n_states], n_states,
                       "TabularMDP: P row (s=" + std::to_string(sa / n_actions) +
                           ", a=" + std::to_string(sa % n_actions) + ")");
  check_distribution(rho0.data(), n_states, "TabularMDP: rho0");
  for (double v : r)
    if (!std::isfinite(v)) throw std::invalid_argument("TabularMDP: non-finite reward");
}

TabularMDP permute_states(const TabularMDP& base, const std::vector<std::size_t>& relabel) {
  const std::size_t S = base.n_states, A = base.n_actions;
  if (relabel.size() != S) throw std::invalid_argument("permute_states: relabel size mismatch");
  TabularMDP out = base;
  for (std::size_t u = 0; u < S; ++u) {
    const std::size_t s = relabel[u];
    out.rho0[s] = base.rho0[u];
    for (std::size_t a = 0; a < A; ++a) {
      out.r[s * A + a] = base.r[u * A + a];
      for (std::size_t u2 = 0; u2 < S; ++u2)
        out.P[(s * A + a) * S + relabel[u2]] = base.P[(u * A + a) * S + u2];
    }
  }
  return out;
}

TabularFamily make_tabular_family(std::uint64_t seed, std::size_t n_mdps, std::size_t n_states,
                                  std::size_t n_actions, double gamma, bool shared_semantics,
                                  std::size_t train_count) {
  if (n_states < 2 || n_actions < 2)
    throw std::invalid_argument("make_tabular_family: need n_states >= 2 and n_actions >= 2");
  if (n_mdps == 0) throw std::invalid_argument("make_tabular_family: need at least one MDP");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("make_tabular_family: gamma outside (0,1)");
  if (train_count == 0) train_count = n_mdps;
  if (train_count > n_mdps)
    throw std::invalid_argument("make_tabular_family: train_count exceeds n_mdps");

  Rng rng(seed);
  TabularFamily family;
  family.shared_semantics = shared_semantics;
  family.levels = LevelFamily::first_n(n_mdps, train_count);
  std::vector<std::size_t> identity(n_states);
  std::iota(identity.begin(), identity.end(), std::size_t{0});

  if (shared_semantics) {
    const TabularMDP base = random_mdp(rng, n_states, n_actions, gamma);
    for (std::size_t m = 0; m < n_mdps; ++m) {
      std::vector<std::size_t> relabel = identity;
      if (m > 0) std::shuffle(relabel.begin(), relabel.end(), rng);
      family.members.push_back(permute_states(base, relabel));
      family.relabel.push_back(std::move(relabel));
    }
  } else {
    for (std::size_t m = 0; m < n_mdps; ++m) {
      family.members.push_back(random_mdp(rng, n_states, n_actions, gamma));
      family.relabel.push_back(identity);
    }
  }
  return family;
}

}  // namespace advp::envgen
