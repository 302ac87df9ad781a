#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "advp/envgen/level_family.hpp"

namespace advp::envgen {

/// Finite MDP with dense transitions P[(s * A + a) * S + s'] and rewards
/// r[s * A + a].
struct TabularMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> P;
  std::vector<double> r;
  std::vector<double> rho0;
  double gamma = 0.9;

  double p(std::size_t s, std::size_t a, std::size_t s2) const {
    return P[(s * n_actions + a) * n_states + s2];
  }
  double reward(std::size_t s, std::size_t a) const { return r[s * n_actions + a]; }

  /// Throws std::invalid_argument when sizes, stochasticity (1e-12) or gamma
  /// are off.
  void validate() const;
};

struct TabularFamily {
  std::vector<TabularMDP> members;
  LevelFamily levels;
  /// relabel[m][u] = observed state index of semantic state u in member m.
  /// Identity for every member when semantics are not shared.
  std::vector<std::vector<std::size_t>> relabel;
  bool shared_semantics = false;
};

/// n_mdps random MDPs. With shared_semantics, one base MDP is drawn and member
/// m is that MDP under a random state permutation (member 0 keeps the
/// identity). The first train_count members form the train split
/// (train_count = 0 means all of them).
TabularFamily make_tabular_family(std::uint64_t seed, std::size_t n_mdps, std::size_t n_states,
                                  std::size_t n_actions, double gamma, bool shared_semantics,
                                  std::size_t train_count = 0);

/// The base MDP relabeled so that semantic state u appears as relabel[u].
TabularMDP permute_states(const TabularMDP& base, const std::vector<std::size_t>& relabel);

}  // namespace advp::envgen
