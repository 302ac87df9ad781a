#pragma once

// PPO building blocks shared by the baseline and the dual-agent trainer:
// rollout collection, GAE, the clipped surrogate loss and Adam.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "advp/autodiff/tape.hpp"
#include "advp/common/random.hpp"
#include "advp/envgen/gridworld.hpp"
#include "advp/nets/agent.hpp"

namespace advp::rl {

struct PpoConfig {
  double gamma = 0.999;
  double lambda = 0.95;
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double learning_rate = 5e-4;
  std::size_t update_epochs = 3;
  std::size_t minibatches = 8;
  std::size_t horizon = 64;  // rollout steps per env per update
  std::size_t n_envs = 16;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

/// Time-major storage: entry i = t * n_envs + e.
struct RolloutBuffer {
  std::size_t n_envs = 0;
  std::size_t horizon = 0;
  std::size_t obs_dim = 0;

  std::vector<double> obs;  // (size, obs_dim)
  std::vector<std::size_t> level;
  std::vector<std::size_t> semantic_id;
  std::vector<std::size_t> action;
  std::vector<double> reward;
  std::vector<char> done;            // episode ended at this step (goal or horizon cap)
  std::vector<double> truncation_value;  // V(final obs) where the cap hit, else 0
  std::vector<double> log_prob_old;
  std::vector<double> value_old;
  std::vector<double> bootstrap;     // V(s_T) per env
  std::vector<double> advantage;
  std::vector<double> returns;

  std::size_t size() const { return n_envs * horizon; }
  void allocate(std::size_t n_envs, std::size_t horizon, std::size_t obs_dim);

  /// GAE over every env column, returns = advantage + value_old, then
  /// advantages normalized to zero mean and unit std over the whole buffer.
  void finalize(double gamma, double lambda);

  /// (indices.size(), obs_dim) observation block.
  NArray gather_obs(std::span<const std::size_t> indices) const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Backward recursion over one trajectory:
///   delta_t = r_t + gamma (1 - done_t) V_{t+1} - V_t, V_T = bootstrap_value
///   A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const char> dones, double bootstrap_value, double gamma,
                      double lambda);

/// (x - mean) / (std + 1e-8) in place; population std.
void normalize_advantages(std::span<double> adv);

/// Runs `agent` for config.horizon steps in every env of `pool`, sampling
/// actions from `rng`. Truncated episodes store V(final obs) so GAE can
/// bootstrap across the cap.
RolloutBuffer collect_rollout(const nets::Agent& agent, envgen::EnvPool& pool,
                              std::size_t horizon, Rng& rng);

/// Log-probabilities (B, |A|) and values (B) without building gradients.
struct Evaluation {
  NArray log_probs;
  std::vector<double> values;
};
Evaluation evaluate(const nets::Agent& agent, const NArray& obs);

struct Minibatch {
  std::vector<std::size_t> action;
  std::vector<double> log_prob_old;
  std::vector<double> advantage;
  std::vector<double> returns;
};
Minibatch slice(const RolloutBuffer& buffer, std::span<const std::size_t> indices);

struct PpoLoss {
  Var total;       // L_RL
  Var policy;      // -mean(min(ratio A, clip(ratio) A))
  Var value;       // mean((V - R)^2)
  Var entropy;     // mean entropy
  Var log_probs;   // (B, |A|) of the current policy
  double clip_fraction = 0.0;
  double approx_kl = 0.0;  // mean(log_prob_old - log_prob_new)
};

/// Clipped surrogate from new log-probabilities of the taken actions (B).
/// Throws NonFiniteError naming the first index whose ratio is not finite.
Var clipped_surrogate(Var log_prob_new, const std::vector<double>& log_prob_old,
                      const std::vector<double>& advantage, double clip_eps,
                      double* clip_fraction = nullptr);

/// L_RL = policy + c1 value - c2 entropy, given the agent's representation
/// of the minibatch observations (so callers can share it with other terms).
PpoLoss ppo_loss(Tape& tape, const nets::Agent& agent, Var representation,
                 const Minibatch& batch, const PpoConfig& config);

/// Convenience overload that encodes `obs` itself.
PpoLoss ppo_loss(Tape& tape, const nets::Agent& agent, const NArray& obs, const Minibatch& batch,
                 const PpoConfig& config);

struct AdamMoments {
  NArray m;
  NArray v;
  std::uint64_t step = 0;
};

/// Moments keyed by parameter name. Each parameter keeps its own step count,
/// so parameters that sit out an update keep their bias correction intact.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, AdamMoments> moments;
};

/// Updates every trainable parameter in `params` that has an entry in
/// `grads`; non-trainable ones and ones absent from `grads` are skipped
/// without touching their moments. Shape mismatches throw ShapeError.
void adam_step(std::span<Parameter* const> params, const GradientMap& grads, AdamState& state,
               double lr);

struct UpdateStats {
  double loss = 0.0;        // mean L_RL over minibatches
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  std::size_t minibatch_steps = 0;
};

/// Standalone PPO: update_epochs passes over a finalized buffer, each split
/// into `minibatches` shuffled chunks drawn from `rng`, one Adam step per
/// chunk on every parameter of `agent`.
UpdateStats ppo_update(nets::Agent& agent, const RolloutBuffer& buffer, const PpoConfig& config,
                       AdamState& adam, Rng& rng);

/// Random minibatch partition of 0..n-1 into `count` near-equal chunks.
std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t count,
                                                        Rng& rng);

/// Entropy of each row of a (B, |A|) log-probability array.
std::vector<double> row_entropy(const NArray& log_probs);

}  // namespace advp::rl
