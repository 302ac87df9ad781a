#include "advp/rlcore/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "advp/simd/kernels.hpp"

namespace advp::rl {

void PpoConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ppo." + what); };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) fail("lambda must lie in (0, 1]");
  if (!(clip_eps > 0.0)) fail("clip_eps must be positive");
  if (!(value_coef >= 0.0)) fail("value_coef must be non-negative");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef must be non-negative");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (update_epochs == 0) fail("update_epochs must be positive");
  if (minibatches == 0) fail("minibatches must be positive");
  if (horizon == 0) fail("horizon must be positive");
  if (n_envs == 0) fail("n_envs must be positive");
  if (minibatches > horizon * n_envs) fail("minibatches exceeds the rollout size");
}

void RolloutBuffer::allocate(std::size_t envs, std::size_t steps, std::size_t dim) {
  n_envs = envs;
  horizon = steps;
  obs_dim = dim;
  const std::size_t n = envs * steps;
  obs.assign(n * dim, 0.0);
  level.assign(n, 0);
  semantic_id.assign(n, 0);
  action.assign(n, 0);
  reward.assign(n, 0.0);
  done.assign(n, 0);
  truncation_value.assign(n, 0.0);
  log_prob_old.assign(n, 0.0);
  value_old.assign(n, 0.0);
  bootstrap.assign(envs, 0.0);
  advantage.assign(n, 0.0);
  returns.assign(n, 0.0);
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const char> dones, double bootstrap_value, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw std::invalid_argument("compute_gae: rewards, values and dones differ in length");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * live * next_value - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return out;
}

void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double denom = std::sqrt(var / n) + 1e-8;
  for (double& a : adv) a = (a - mean) / denom;
}

void RolloutBuffer::finalize(double gamma, double lambda) {
  std::vector<double> r(horizon), v(horizon);
  std::vector<char> d(horizon);
  for (std::size_t e = 0; e < n_envs; ++e) {
    for (std::size_t t = 0; t < horizon; ++t) {
      const std::size_t i = t * n_envs + e;
      // A capped episode continues in value: fold gamma * V(final obs) into
      // the reward and cut the recursion like a terminal step.
      r[t] = reward[i] + gamma * truncation_value[i];
      v[t] = value_old[i];
      d[t] = done[i];
    }
    const GaeResult g = compute_gae(r, v, d, bootstrap[e], gamma, lambda);
    for (std::size_t t = 0; t < horizon; ++t) {
      const std::size_t i = t * n_envs + e;
      advantage[i] = g.advantages[t];
      returns[i] = g.returns[t];
    }
  }
  for (double a : advantage)
    if (!std::isfinite(a)) throw NonFiniteError("RolloutBuffer: non-finite advantage");
  normalize_advantages(advantage);
}

NArray RolloutBuffer::gather_obs(std::span<const std::size_t> indices) const {
  NArray out(Shape{indices.size(), obs_dim});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const double* src = obs.data() + indices[k] * obs_dim;
    std::copy(src, src + obs_dim, out.data() + k * obs_dim);
  }
  return out;
}

Evaluation evaluate(const nets::Agent& agent, const NArray& obs) {
  Tape tape;
  Var x = tape.constant(obs);
  Var repr = nets::encode(tape, agent, x, true);
  Evaluation out;
  out.log_probs = nets::action_dist(tape, agent, repr, true).value();
  const NArray& v = nets::value_estimate(tape, agent, repr, true).value();
  out.values.assign(v.values().begin(), v.values().end());
  return out;
}

RolloutBuffer collect_rollout(const nets::Agent& agent, envgen::EnvPool& pool,
                              std::size_t horizon, Rng& rng) {
  RolloutBuffer buf;
  const std::size_t E = pool.size(), D = pool.obs_dim();
  buf.allocate(E, horizon, D);
  for (std::size_t t = 0; t < horizon; ++t) {
    const NArray obs = pool.observe();
    const Evaluation ev = evaluate(agent, obs);
    const std::size_t A = ev.log_probs.dim(1);
    std::vector<std::size_t> truncated;
    std::vector<std::vector<double>> final_obs;
    for (std::size_t e = 0; e < E; ++e) {
      const std::size_t i = t * E + e;
      std::copy(obs.data() + e * D, obs.data() + (e + 1) * D, buf.obs.data() + i * D);
      const auto row = ev.log_probs.values().subspan(e * A, A);
      const nets::ActionSample a = nets::sample_action(row, rng);
      auto tr = pool.step(e, a.action);
      buf.level[i] = tr.level;
      buf.semantic_id[i] = tr.semantic_id;
      buf.action[i] = a.action;
      buf.reward[i] = tr.result.reward;
      buf.done[i] = tr.result.done ? 1 : 0;
      buf.log_prob_old[i] = a.log_prob;
      buf.value_old[i] = ev.values[e];
      if (tr.result.truncated) {
        truncated.push_back(i);
        final_obs.push_back(std::move(tr.final_obs));
      }
    }
    if (!truncated.empty()) {
      NArray fo(Shape{truncated.size(), D});
      for (std::size_t k = 0; k < truncated.size(); ++k)
        std::copy(final_obs[k].begin(), final_obs[k].end(), fo.data() + k * D);
      const Evaluation fv = evaluate(agent, fo);
      for (std::size_t k = 0; k < truncated.size(); ++k)
        buf.truncation_value[truncated[k]] = fv.values[k];
    }
  }
  const Evaluation last = evaluate(agent, pool.observe());
  for (std::size_t e = 0; e < E; ++e) buf.bootstrap[e] = last.values[e];
  return buf;
}

Minibatch slice(const RolloutBuffer& buffer, std::span<const std::size_t> indices) {
  Minibatch mb;
  for (std::size_t i : indices) {
    mb.action.push_back(buffer.action.at(i));
    mb.log_prob_old.push_back(buffer.log_prob_old[i]);
    mb.advantage.push_back(buffer.advantage[i]);
    mb.returns.push_back(buffer.returns[i]);
  }
  return mb;
}

Var clipped_surrogate(Var log_prob_new, const std::vector<double>& log_prob_old,
                      const std::vector<double>& advantage, double clip_eps,
                      double* clip_fraction) {
  const NArray& lp = log_prob_new.value();
  const std::size_t n = lp.size();
  if (lp.rank() != 1 || log_prob_old.size() != n || advantage.size() != n)
    throw ShapeError("clipped_surrogate: log_prob_new " + shape_string(lp.shape()) + " vs " +
                     std::to_string(log_prob_old.size()) + " old log-probs and " +
                     std::to_string(advantage.size()) + " advantages");
  std::size_t clipped = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double ratio = std::exp(lp[k] - log_prob_old[k]);
    if (!std::isfinite(ratio))
      throw NonFiniteError("ppo_loss: non-finite probability ratio at minibatch index " +
                           std::to_string(k));
    if (std::abs(ratio - 1.0) > clip_eps) ++clipped;
  }
  if (clip_fraction) *clip_fraction = n ? static_cast<double>(clipped) / static_cast<double>(n) : 0;
  Tape& tape = log_prob_new.tape();
  Var ratio = exp(sub(log_prob_new, tape.constant(NArray::vector(log_prob_old))));
  Var adv = tape.constant(NArray::vector(advantage));
  Var unclipped = mul(ratio, adv);
  Var clipped_term = mul(clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv);
  return scale(mean(minimum(unclipped, clipped_term)), -1.0);
}

PpoLoss ppo_loss(Tape& tape, const nets::Agent& agent, Var representation,
                 const Minibatch& batch, const PpoConfig& config) {
  PpoLoss out;
  Var logp = nets::action_dist(tape, agent, representation);
  out.log_probs = logp;
  Var lp_new = gather(logp, batch.action);
  out.policy = clipped_surrogate(lp_new, batch.log_prob_old, batch.advantage, config.clip_eps,
                                 &out.clip_fraction);
  double kl = 0.0;
  for (std::size_t k = 0; k < batch.log_prob_old.size(); ++k)
    kl += batch.log_prob_old[k] - lp_new.value()[k];
  out.approx_kl = batch.log_prob_old.empty() ? 0.0 : kl / static_cast<double>(batch.log_prob_old.size());

  Var v = nets::value_estimate(tape, agent, representation);
  out.value = mean(square(sub(v, tape.constant(NArray::vector(batch.returns)))));
  out.entropy = scale(mean(sum(mul(exp(logp), logp), 1)), -1.0);
  out.total = add(add(out.policy, scale(out.value, config.value_coef)),
                  scale(out.entropy, -config.entropy_coef));
  return out;
}

PpoLoss ppo_loss(Tape& tape, const nets::Agent& agent, const NArray& obs, const Minibatch& batch,
                 const PpoConfig& config) {
  Var repr = nets::encode(tape, agent, tape.constant(obs));
  return ppo_loss(tape, agent, repr, batch, config);
}

void adam_step(std::span<Parameter* const> params, const GradientMap& grads, AdamState& state,
               double lr) {
  const simd::KernelTable& k = simd::active();
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto g = grads.find(p->name);
    if (g == grads.end()) continue;
    if (g->second.shape() != p->value.shape())
      throw ShapeError("adam_step: gradient " + shape_string(g->second.shape()) +
                       " does not match parameter " + p->name + " " +
                       shape_string(p->value.shape()));
    AdamMoments& mom = state.moments[p->name];
    if (mom.step == 0 && mom.m.size() == 0) {
      mom.m = NArray(p->value.shape());
      mom.v = NArray(p->value.shape());
    }
    if (mom.m.shape() != p->value.shape())
      throw ShapeError("adam_step: moments " + shape_string(mom.m.shape()) +
                       " do not match parameter " + p->name + " " +
                       shape_string(p->value.shape()));
    ++mom.step;
    const double t = static_cast<double>(mom.step);
    const simd::AdamCoeffs c{lr,
                             state.beta1,
                             state.beta2,
                             state.eps,
                             1.0 - std::pow(state.beta1, t),
                             1.0 - std::pow(state.beta2, t)};
    k.adam_update(p->value.data(), mom.m.data(), mom.v.data(), g->second.data(), p->value.size(),
                  c);
  }
}

UpdateStats ppo_update(nets::Agent& agent, const RolloutBuffer& buffer, const PpoConfig& config,
                       AdamState& adam, Rng& rng) {
  UpdateStats stats;
  const std::vector<Parameter*> params = agent.parameters();
  for (std::size_t epoch = 0; epoch < config.update_epochs; ++epoch) {
    for (const auto& idx : minibatch_indices(buffer.size(), config.minibatches, rng)) {
      Tape tape;
      const PpoLoss loss = ppo_loss(tape, agent, buffer.gather_obs(idx), slice(buffer, idx), config);
      const GradientMap grads = tape.backward(loss.total);
      adam_step(params, grads, adam, config.learning_rate);
      stats.loss += loss.total.value().item();
      stats.entropy += loss.entropy.value().item();
      stats.clip_fraction += loss.clip_fraction;
      stats.approx_kl += loss.approx_kl;
      ++stats.minibatch_steps;
    }
  }
  const double n = static_cast<double>(stats.minibatch_steps);
  stats.loss /= n;
  stats.entropy /= n;
  stats.clip_fraction /= n;
  stats.approx_kl /= n;
  return stats;
}

std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t count,
                                                        Rng& rng) {
  if (count == 0 || count > n) throw std::invalid_argument("minibatch_indices: bad count");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(count);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t lo = b * n / count, hi = (b + 1) * n / count;
    out[b].assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                  order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return out;
}

std::vector<double> row_entropy(const NArray& log_probs) {
  const std::size_t B = log_probs.dim(0), A = log_probs.dim(1);
  std::vector<double> out(B, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t a = 0; a < A; ++a) {
      const double lp = log_probs.at(b, a);
      out[b] -= std::exp(lp) * lp;
    }
  return out;
}

}  // namespace advp::rl
