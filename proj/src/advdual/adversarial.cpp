#include "advp/advdual/adversarial.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>

namespace advp::adv {

double kl_categorical(const NArray& p_log, const NArray& q_log) {
  if (p_log.shape() != q_log.shape() || p_log.rank() != 2)
    throw ShapeError("kl_categorical: " + shape_string(p_log.shape()) + " vs " +
                     shape_string(q_log.shape()));
  const std::size_t rows = p_log.dim(0), cols = p_log.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = p_log.at(r, c);
      row += std::exp(p) * (p - q_log.at(r, c));
    }
    total += row;
  }
  return total / static_cast<double>(rows);
}

Var kl_categorical(Var p_log, Var q_log) {
  if (p_log.shape() != q_log.shape() || p_log.value().rank() != 2)
    throw ShapeError("kl_categorical: " + shape_string(p_log.shape()) + " vs " +
                     shape_string(q_log.shape()));
  return mean(sum(mul(exp(p_log), sub(p_log, q_log)), 1));
}

void require_homogeneous(const nets::Agent& a, const nets::Agent& b) {
  if (a.architecture() != b.architecture())
    throw std::invalid_argument("agents " + std::to_string(a.id()) + " and " +
                                std::to_string(b.id()) + " differ in architecture");
}

Var d_other(Tape& tape, const nets::Agent& attacker, const nets::Agent& victim, Var obs) {
  require_homogeneous(attacker, victim);
  Var clean = nets::action_dist(tape, victim, nets::encode(tape, victim, obs), true);
  Var attacked = nets::action_dist(tape, victim, nets::encode(tape, attacker, obs), true);
  return kl_categorical(clean, attacked);
}

Var d_own(Tape& tape, const nets::Agent& defender, const nets::Agent& opponent, Var obs) {
  require_homogeneous(defender, opponent);
  Var clean = nets::action_dist(tape, defender, nets::encode(tape, defender, obs));
  Var perturbed = nets::action_dist(tape, defender, nets::encode(tape, opponent, obs));
  return kl_categorical(clean, perturbed);
}

AgentPair::AgentPair(const nets::NetConfig& config, Rng& init1, Rng& init2)
    : agent1(1, config, init1), agent2(2, config, init2) {}

nets::Agent& AgentPair::get(int id) {
  if (id == 1) return agent1;
  if (id == 2) return agent2;
  throw std::invalid_argument("agent id must be 1 or 2, got " + std::to_string(id));
}

const nets::Agent& AgentPair::get(int id) const {
  return const_cast<AgentPair*>(this)->get(id);
}

namespace {

double norm(const NArray& g) {
  double s = 0.0;
  for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

void add_group_norms(const GradientMap& grads, int self, GradNorms& out) {
  const std::string own = "agent" + std::to_string(self) + ".";
  double sq[6] = {0, 0, 0, 0, 0, 0};
  for (const auto& [name, g] : grads) {
    const bool mine = name.rfind(own, 0) == 0;
    const std::string rest = name.substr(own.size());
    int group = rest.rfind("encoder.", 0) == 0 ? 0 : rest.rfind("policy.", 0) == 0 ? 1 : 2;
    if (!mine) group += 3;
    const double n = norm(g);
    sq[group] += n * n;
  }
  out.encoder_self += std::sqrt(sq[0]);
  out.policy_self += std::sqrt(sq[1]);
  out.value_self += std::sqrt(sq[2]);
  out.encoder_other += std::sqrt(sq[3]);
  out.policy_other += std::sqrt(sq[4]);
  out.value_other += std::sqrt(sq[5]);
}

// d_own and d_other values for the alpha == 0 path, off the training graph.
std::pair<double, double> kl_diagnostics(const nets::Agent& self, const nets::Agent& other,
                                         const NArray& obs) {
  Tape tape;
  Var x = tape.constant(obs);
  Var ri = nets::encode(tape, self, x, true);
  Var rj = nets::encode(tape, other, x, true);
  const double own = kl_categorical(nets::action_dist(tape, self, ri, true).value(),
                                    nets::action_dist(tape, self, rj, true).value());
  const double oth = kl_categorical(nets::action_dist(tape, other, rj, true).value(),
                                    nets::action_dist(tape, other, ri, true).value());
  return {own, oth};
}

}  // namespace

TotalLoss total_loss(Tape& tape, const nets::Agent& self, const nets::Agent& other, Var obs,
                     const rl::Minibatch& batch, const AdvConfig& config) {
  TotalLoss out;
  Var repr_i = nets::encode(tape, self, obs);
  out.rl = rl::ppo_loss(tape, self, repr_i, batch, config.ppo);
  out.total = out.rl.total;
  if (config.alpha != 0.0) {
    Var repr_j = nets::encode(tape, other, obs);
    out.d_own = kl_categorical(out.rl.log_probs, nets::action_dist(tape, self, repr_j));
    out.d_other = kl_categorical(nets::action_dist(tape, other, repr_j, true),
                                 nets::action_dist(tape, other, repr_i, true));
    out.total = add(out.total, scale(sub(out.d_own, out.d_other), config.alpha));
  }
  return out;
}

AdvLossReport adversarial_update(AgentPair& pair, int active, const rl::RolloutBuffer& buffer,
                                 const AdvConfig& config, Rng& rng) {
  nets::Agent& self = pair.get(active);
  const nets::Agent& other = pair.get(3 - active);
  require_homogeneous(self, other);
  if (!std::isfinite(config.alpha)) throw std::invalid_argument("adv.alpha must be finite");

  std::vector<Parameter*> params = self.parameters();
  for (Parameter* p : pair.get(3 - active).encoder.parameters()) params.push_back(p);

  AdvLossReport report;
  report.alpha = config.alpha;
  const rl::PpoConfig& ppo = config.ppo;
  for (std::size_t epoch = 0; epoch < ppo.update_epochs; ++epoch) {
    const auto batches = rl::minibatch_indices(buffer.size(), ppo.minibatches, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const NArray obs_batch = buffer.gather_obs(idx);
      const rl::Minibatch mb = rl::slice(buffer, idx);
      Tape tape;
      GradientMap grads;
      rl::PpoLoss loss;
      double own = 0.0, oth = 0.0, total = 0.0;
      try {
        const TotalLoss tl = total_loss(tape, self, other, tape.constant(obs_batch), mb, config);
        loss = tl.rl;
        if (config.alpha != 0.0) {
          own = tl.d_own.value().item();
          oth = tl.d_other.value().item();
        } else {
          std::tie(own, oth) = kl_diagnostics(self, other, obs_batch);
        }
        Var objective = tl.total;
        total = objective.value().item();
        grads = tape.backward(objective);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("adversarial_update: agent " + std::to_string(active) + ", epoch " +
                             std::to_string(epoch) + ", minibatch " + std::to_string(b) + ": " +
                             e.what());
      }
      add_group_norms(grads, active, report.grad_norms);
      rl::adam_step(params, grads, pair.adam, ppo.learning_rate);

      report.d_own += own;
      report.d_other += oth;
      report.l_rl += loss.total.value().item();
      report.total += total;
      report.entropy += loss.entropy.value().item();
      report.clip_fraction += loss.clip_fraction;
      report.approx_kl += loss.approx_kl;
      ++report.minibatch_steps;
    }
  }
  const double n = static_cast<double>(report.minibatch_steps);
  for (double* v : {&report.d_own, &report.d_other, &report.l_rl, &report.total, &report.entropy,
                    &report.clip_fraction, &report.approx_kl, &report.grad_norms.encoder_self,
                    &report.grad_norms.policy_self, &report.grad_norms.value_self,
                    &report.grad_norms.encoder_other, &report.grad_norms.policy_other,
                    &report.grad_norms.value_other})
    *v /= n;
  report.l_kl = report.d_own - report.d_other;
  return report;
}

std::uint64_t init_seed(std::uint64_t agent_seed) { return hash_seed(agent_seed, 0); }
std::uint64_t train_seed(std::uint64_t agent_seed) { return hash_seed(agent_seed, 1); }
std::uint64_t env_seed(std::uint64_t agent_seed) { return hash_seed(agent_seed, 2); }

namespace {

AgentPair make_pair(const nets::NetConfig& net, const DualConfig& config) {
  Rng r1(init_seed(config.seed_agent1));
  Rng r2(init_seed(config.seed_agent2));
  return AgentPair(net, r1, r2);
}

}  // namespace

DualTrainer::DualTrainer(const envgen::GridFamily& family, const nets::NetConfig& net,
                         DualConfig config)
    : config_(std::move(config)), pair_(make_pair(net, config_)) {
  config_.adv.ppo.validate();
  if (config_.first_agent != 1 && config_.first_agent != 2)
    throw std::invalid_argument("adv.first_agent must be 1 or 2");
  if (net.obs_dim != family.obs_dim())
    throw std::invalid_argument("network obs_dim " + std::to_string(net.obs_dim) +
                                " does not match the environment's " +
                                std::to_string(family.obs_dim()));
  const rl::PpoConfig& ppo = config_.adv.ppo;
  for (std::uint64_t seed : {config_.seed_agent1, config_.seed_agent2}) {
    pools_.emplace_back(family, envgen::Split::train, ppo.n_envs, env_seed(seed));
    rngs_.emplace_back(train_seed(seed));
  }
}

std::size_t DualTrainer::steps_per_iteration() const {
  return 2 * config_.adv.ppo.n_envs * config_.adv.ppo.horizon;
}

envgen::EnvPool& DualTrainer::pool(int id) {
  if (id != 1 && id != 2) throw std::invalid_argument("agent id must be 1 or 2");
  return pools_[static_cast<std::size_t>(id - 1)];
}

Rng& DualTrainer::rng(int id) {
  if (id != 1 && id != 2) throw std::invalid_argument("agent id must be 1 or 2");
  return rngs_[static_cast<std::size_t>(id - 1)];
}

const envgen::EnvPool& DualTrainer::pool(int id) const {
  return const_cast<DualTrainer*>(this)->pool(id);
}

const Rng& DualTrainer::rng(int id) const { return const_cast<DualTrainer*>(this)->rng(id); }

UpdateRecord DualTrainer::update_agent(int id) {
  const rl::PpoConfig& ppo = config_.adv.ppo;
  envgen::EnvPool& p = pool(id);
  Rng& r = rng(id);
  rl::RolloutBuffer buffer = rl::collect_rollout(pair_.get(id), p, ppo.horizon, r);
  buffer.finalize(ppo.gamma, ppo.lambda);
  UpdateRecord rec;
  rec.agent = id;
  const std::vector<double> returns = p.take_finished_returns();
  rec.rollout_episodes = returns.size();
  for (double x : returns) rec.rollout_return += x;
  if (!returns.empty()) rec.rollout_return /= static_cast<double>(returns.size());
  rec.loss = adversarial_update(pair_, id, buffer, config_.adv, r);
  steps_ += buffer.size();
  rec.step = steps_;
  return rec;
}

std::vector<UpdateRecord> DualTrainer::iterate() {
  std::vector<UpdateRecord> out;
  const int first = config_.first_agent;
  for (int id : {first, 3 - first}) {
    if (finished()) break;
    out.push_back(update_agent(id));
  }
  return out;
}

std::vector<UpdateRecord> DualTrainer::run() {
  std::vector<UpdateRecord> stream;
  while (!finished())
    for (UpdateRecord& r : iterate()) stream.push_back(std::move(r));
  return stream;
}

}  // namespace advp::adv
