#pragma once

// Dual-agent adversarial training. Each agent attacks the other through its
// encoder (pushing the opponent's policy away when fed the attacker's
// representation) and defends itself (keeping its own policy stable when fed
// the opponent's representation):
//
//   d_own(i, j)   = KL[pi_i(psi_i(s)) || pi_i(psi_j(s))]
//   d_other(i, j) = KL[pi_j(psi_j(s)) || pi_j(psi_i(s))], pi_j frozen
//   total         = L_RL + alpha (d_own - d_other)

#include <cstddef>
#include <cstdint>
#include <vector>

#include "advp/autodiff/tape.hpp"
#include "advp/envgen/gridworld.hpp"
#include "advp/nets/agent.hpp"
#include "advp/rlcore/ppo.hpp"

namespace advp::adv {

/// Mean over rows of sum_a exp(p_a) (p_a - q_a) for row-normalized log-probs.
double kl_categorical(const NArray& p_log, const NArray& q_log);
Var kl_categorical(Var p_log, Var q_log);

/// Throws std::invalid_argument when the agents differ in architecture.
void require_homogeneous(const nets::Agent& a, const nets::Agent& b);

/// Both take the observation batch from the attacker/defender's own data.
Var d_other(Tape& tape, const nets::Agent& attacker, const nets::Agent& victim, Var obs);
Var d_own(Tape& tape, const nets::Agent& defender, const nets::Agent& opponent, Var obs);

struct AgentPair {
  AgentPair(const nets::NetConfig& config, Rng& init1, Rng& init2);

  nets::Agent agent1;
  nets::Agent agent2;
  rl::AdamState adam;  // one optimizer over both agents

  nets::Agent& get(int id);
  const nets::Agent& get(int id) const;
};

struct AdvConfig {
  rl::PpoConfig ppo;
  double alpha = 1.0;
};

/// L_RL + alpha (D_own - D_other) for agent `self` on one minibatch, sharing
/// the representations of both encoders between the terms. pi_j is frozen;
/// psi_j is not. With alpha == 0 the KL terms are not built.
struct TotalLoss {
  Var total;
  rl::PpoLoss rl;
  Var d_own;    // valid when alpha != 0
  Var d_other;  // valid when alpha != 0
};
TotalLoss total_loss(Tape& tape, const nets::Agent& self, const nets::Agent& other, Var obs,
                     const rl::Minibatch& batch, const AdvConfig& config);

/// L2 norms of the total-loss gradient per parameter group, averaged over
/// minibatches. The frozen groups are reported to make freezing observable.
struct GradNorms {
  double encoder_self = 0.0;
  double policy_self = 0.0;
  double value_self = 0.0;
  double encoder_other = 0.0;
  double policy_other = 0.0;
  double value_other = 0.0;
};

/// Means over all minibatch steps of one update.
struct AdvLossReport {
  double d_own = 0.0;
  double d_other = 0.0;
  double l_kl = 0.0;
  double alpha = 0.0;
  double l_rl = 0.0;
  double total = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  GradNorms grad_norms;
  std::size_t minibatch_steps = 0;
};

/// update_epochs x minibatches Adam steps for agent `active` on its own
/// finalized buffer, updating {psi_i, pi_i, V_i, psi_j}. With alpha == 0 the
/// KL terms stay off the graph (psi_j is untouched and the update equals
/// rl::ppo_update) and are computed separately as diagnostics.
AdvLossReport adversarial_update(AgentPair& pair, int active, const rl::RolloutBuffer& buffer,
                                 const AdvConfig& config, Rng& rng);

struct DualConfig {
  AdvConfig adv;
  std::uint64_t seed_agent1 = 1;
  std::uint64_t seed_agent2 = 2;
  int first_agent = 1;  // which agent updates first in each outer iteration
  std::size_t total_steps = 2'000'000;
};

/// One entry per agent update.
struct UpdateRecord {
  std::size_t step = 0;  // environment steps across both agents after this update
  int agent = 0;
  AdvLossReport loss;
  double rollout_return = 0.0;  // mean return of episodes finished during the rollout
  std::size_t rollout_episodes = 0;
};

class DualTrainer {
 public:
  DualTrainer(const envgen::GridFamily& family, const nets::NetConfig& net, DualConfig config);

  bool finished() const { return steps_ >= config_.total_steps; }
  std::size_t steps() const { return steps_; }
  std::size_t steps_per_iteration() const;

  /// One outer iteration: collect + update for the first agent, then the other.
  std::vector<UpdateRecord> iterate();
  /// iterate() until finished(); returns the full metric stream.
  std::vector<UpdateRecord> run();

  AgentPair& pair() { return pair_; }
  const AgentPair& pair() const { return pair_; }
  const DualConfig& config() const { return config_; }

  /// Per-agent mutable runtime state, exposed for checkpointing.
  envgen::EnvPool& pool(int id);
  const envgen::EnvPool& pool(int id) const;
  Rng& rng(int id);
  const Rng& rng(int id) const;
  void set_steps(std::size_t steps) { steps_ = steps; }

 private:
  UpdateRecord update_agent(int id);

  DualConfig config_;
  AgentPair pair_;
  std::vector<envgen::EnvPool> pools_;  // index id - 1
  std::vector<Rng> rngs_;
  std::size_t steps_ = 0;
};

/// Seeds derived from an agent seed.
std::uint64_t init_seed(std::uint64_t agent_seed);
std::uint64_t train_seed(std::uint64_t agent_seed);
std::uint64_t env_seed(std::uint64_t agent_seed);

}  // namespace advp::adv
