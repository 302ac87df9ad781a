#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "advp/autodiff/tape.hpp"
#include "advp/common/random.hpp"

namespace advp::nets {

enum class Activation { tanh, relu, identity };

/// Fully connected stack: sizes = {in, hidden..., out}. The hidden activation
/// follows every layer but the last; the output activation follows the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, std::vector<std::size_t> sizes, Activation hidden, Activation output);

  /// Orthogonal init scaled by `hidden_gain` (all but the last layer) and
  /// `output_gain` (last layer); biases zero.
  void init_orthogonal(Rng& rng, double hidden_gain, double output_gain);

  /// x has shape (batch, in_dim). frozen=true routes gradients through the
  /// layers without producing parameter gradients.
  Var forward(Tape& tape, Var x, bool frozen = false) const;

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t in_dim() const { return sizes_.front(); }
  std::size_t out_dim() const { return sizes_.back(); }
  std::size_t layers() const { return weights_.size(); }

  Parameter& weight(std::size_t layer) { return weights_.at(layer); }
  Parameter& bias(std::size_t layer) { return biases_.at(layer); }
  const Parameter& weight(std::size_t layer) const { return weights_.at(layer); }
  const Parameter& bias(std::size_t layer) const { return biases_.at(layer); }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void set_trainable(bool trainable);

 private:
  std::vector<std::size_t> sizes_;
  Activation hidden_ = Activation::tanh;
  Activation output_ = Activation::identity;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

struct NetConfig {
  std::size_t obs_dim = 0;
  std::size_t n_actions = 4;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::size_t head_hidden = 64;
  double policy_output_gain = 0.01;
};

/// Encoder, policy head and value head of one agent. The value head reads the
/// agent's own representation only.
class Agent {
 public:
  Agent() = default;
  /// id is 1 or 2; parameter names are prefixed "agent<id>.".
  Agent(int id, const NetConfig& config, Rng& rng);

  int id() const { return id_; }
  const NetConfig& config() const { return config_; }
  std::size_t repr_dim() const { return encoder.out_dim(); }
  std::size_t n_actions() const { return policy.out_dim(); }

  /// Layer sizes of encoder, policy head and value head, concatenated with
  /// a 0 separator. Equal signatures mean homogeneous agents.
  std::vector<std::size_t> architecture() const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Mlp encoder;
  Mlp policy;
  Mlp value;

 private:
  int id_ = 0;
  NetConfig config_;
};

/// (batch, obs_dim) -> (batch, repr_dim).
Var encode(Tape& tape, const Agent& agent, Var obs, bool frozen = false);

/// (batch, repr_dim) -> (batch, |A|) row-normalized log-probabilities.
Var action_dist(Tape& tape, const Agent& agent, Var representation, bool frozen = false);

/// (batch, repr_dim) -> (batch) state values.
Var value_estimate(Tape& tape, const Agent& agent, Var representation, bool frozen = false);

struct ActionSample {
  std::size_t action = 0;
  double log_prob = 0.0;
};

/// Inverse-CDF draw from one row of log-probabilities using one uniform draw;
/// the first index whose cumulative mass exceeds the draw wins.
ActionSample sample_action(std::span<const double> log_probs, Rng& rng);

/// Lowest-index argmax of a log-probability row.
std::size_t greedy_action(std::span<const double> log_probs);

/// Detached copy for importance ratios: every parameter non-trainable.
Agent snapshot_old_policy(const Agent& agent);

/// Copies parameter values from `src` into `dst`, matching by position.
void copy_parameters(const Mlp& src, Mlp& dst);

}  // namespace advp::nets
