#include "advp/nets/agent.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advp::nets {
namespace {

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::tanh:
      return advp::tanh(x);
    case Activation::relu:
      return advp::relu(x);
    case Activation::identity:
      return x;
  }
  return x;
}

// rows x cols matrix with orthonormal rows or columns (whichever is shorter).
Eigen::MatrixXd orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool tall = rows >= cols;
  const Eigen::Index r = static_cast<Eigen::Index>(tall ? rows : cols);
  const Eigen::Index c = static_cast<Eigen::Index>(tall ? cols : rows);
  Eigen::MatrixXd g(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd rmat = qr.matrixQR().topLeftCorner(c, c);
  for (Eigen::Index j = 0; j < c; ++j)
    if (rmat(j, j) < 0) q.col(j) *= -1.0;
  if (tall) return q;
  return q.transpose();
}

}  // namespace

Mlp::Mlp(std::string prefix, std::vector<std::size_t> sizes, Activation hidden,
         Activation output)
    : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
  for (std::size_t s : sizes_)
    if (s == 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.push_back({prefix + "." + std::to_string(l) + ".weight",
                        NArray(Shape{sizes_[l], sizes_[l + 1]}), true});
    biases_.push_back({prefix + "." + std::to_string(l) + ".bias", NArray(Shape{sizes_[l + 1]}),
                       true});
  }
}

void Mlp::init_orthogonal(Rng& rng, double hidden_gain, double output_gain) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double gain = l + 1 == weights_.size() ? output_gain : hidden_gain;
    const std::size_t rows = sizes_[l], cols = sizes_[l + 1];
    const Eigen::MatrixXd q = orthogonal(rows, cols, rng);
    NArray& w = weights_[l].value;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        w[i * cols + j] = gain * q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    biases_[l].value.fill(0.0);
  }
}

Var Mlp::forward(Tape& tape, Var x, bool frozen) const {
  if (x.value().rank() != 2 || x.value().dim(1) != in_dim())
    throw ShapeError("Mlp " + (weights_.empty() ? std::string() : weights_[0].name) +
                     ": expected input (batch, " + std::to_string(in_dim()) + "), got " +
                     shape_string(x.value().shape()));
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add(matmul(h, tape.param(weights_[l], frozen)), tape.param(biases_[l], frozen));
    h = activate(h, l + 1 == weights_.size() ? output_ : hidden_);
  }
  return h;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

void Mlp::set_trainable(bool trainable) {
  for (Parameter* p : parameters()) p->trainable = trainable;
}

Agent::Agent(int id, const NetConfig& config, Rng& rng) : id_(id), config_(config) {
  if (id != 1 && id != 2) throw std::invalid_argument("Agent: id must be 1 or 2");
  if (config.obs_dim == 0 || config.n_actions < 2 || config.head_hidden == 0)
    throw std::invalid_argument("Agent: invalid network sizes");
  const std::string prefix = "agent" + std::to_string(id);

  std::vector<std::size_t> enc{config.obs_dim};
  enc.insert(enc.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
  if (enc.size() < 2) throw std::invalid_argument("Agent: encoder needs at least one layer");
  encoder = Mlp(prefix + ".encoder", enc, Activation::tanh, Activation::tanh);
  const std::size_t repr = enc.back();
  policy = Mlp(prefix + ".policy", {repr, config.head_hidden, config.n_actions}, Activation::tanh,
               Activation::identity);
  value = Mlp(prefix + ".value", {repr, config.head_hidden, 1}, Activation::tanh,
              Activation::identity);

  encoder.init_orthogonal(rng, 1.0, 1.0);
  policy.init_orthogonal(rng, 1.0, config.policy_output_gain);
  value.init_orthogonal(rng, 1.0, 1.0);
}

std::vector<std::size_t> Agent::architecture() const {
  std::vector<std::size_t> sig = encoder.sizes();
  sig.push_back(0);
  sig.insert(sig.end(), policy.sizes().begin(), policy.sizes().end());
  sig.push_back(0);
  sig.insert(sig.end(), value.sizes().begin(), value.sizes().end());
  return sig;
}

std::vector<Parameter*> Agent::parameters() {
  std::vector<Parameter*> out = encoder.parameters();
  for (Parameter* p : policy.parameters()) out.push_back(p);
  for (Parameter* p : value.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> Agent::parameters() const {
  std::vector<const Parameter*> out = encoder.parameters();
  for (const Parameter* p : policy.parameters()) out.push_back(p);
  for (const Parameter* p : value.parameters()) out.push_back(p);
  return out;
}

Var encode(Tape& tape, const Agent& agent, Var obs, bool frozen) {
  return agent.encoder.forward(tape, obs, frozen);
}

Var action_dist(Tape& tape, const Agent& agent, Var representation, bool frozen) {
  return log_softmax(agent.policy.forward(tape, representation, frozen), 1);
}

Var value_estimate(Tape& tape, const Agent& agent, Var representation, bool frozen) {
  // (batch, 1) -> (batch)
  return sum(agent.value.forward(tape, representation, frozen), 1);
}

ActionSample sample_action(std::span<const double> log_probs, Rng& rng) {
  if (log_probs.empty()) throw std::invalid_argument("sample_action: empty distribution");
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t a = 0; a < log_probs.size(); ++a) {
    const double p = std::exp(log_probs[a]);
    if (p > 0.0) last_positive = a;
    cumulative += p;
    if (u < cumulative) return {a, log_probs[a]};
  }
  return {last_positive, log_probs[last_positive]};
}

std::size_t greedy_action(std::span<const double> log_probs) {
  if (log_probs.empty()) throw std::invalid_argument("greedy_action: empty distribution");
  return static_cast<std::size_t>(std::max_element(log_probs.begin(), log_probs.end()) -
                                  log_probs.begin());
}

Agent snapshot_old_policy(const Agent& agent) {
  Agent copy = agent;
  for (Parameter* p : copy.parameters()) p->trainable = false;
  return copy;
}

void copy_parameters(const Mlp& src, Mlp& dst) {
  if (src.sizes() != dst.sizes()) throw ShapeError("copy_parameters: architecture mismatch");
  auto from = src.parameters();
  auto to = dst.parameters();
  for (std::size_t i = 0; i < from.size(); ++i) to[i]->value = from[i]->value;
}

}  // namespace advp::nets
