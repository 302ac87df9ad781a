#include <doctest.h>

#include <array>
#include <cmath>

#include "advp/advdual/adversarial.hpp"

using namespace advp;
using adv::AgentPair;

namespace {

envgen::GridFamilyConfig small_family() {
  envgen::GridFamilyConfig cfg;
  cfg.grid = envgen::GridSpec{5, 5, 0.1, 1};
  cfg.rules.horizon = 12;
  cfg.universe_size = 100;
  cfg.train_count = 10;
  return cfg;
}

nets::NetConfig net_for(std::size_t obs_dim) {
  nets::NetConfig c;
  c.obs_dim = obs_dim;
  c.encoder_hidden = {8};
  c.head_hidden = 8;
  c.policy_output_gain = 1.0;
  return c;
}

NArray random_obs(std::size_t rows, std::size_t cols, Rng& rng) {
  NArray a(Shape{rows, cols});
  for (double& v : a.values()) v = uniform01(rng);
  return a;
}

std::vector<double> random_log_dist(std::size_t n, Rng& rng) {
  std::vector<double> p(n);
  double z = 0.0;
  for (double& x : p) z += (x = uniform01(rng) + 1e-3);
  for (double& x : p) x = std::log(x / z);
  return p;
}

void set_scalar_agent(nets::Agent& a, double w, double b, double pa, double pc, double u0,
                      double u1, double d0, double d1) {
  a.encoder.weight(0).value = NArray::matrix(1, 1, {w});
  a.encoder.bias(0).value = NArray::vector({b});
  a.policy.weight(0).value = NArray::matrix(1, 1, {pa});
  a.policy.bias(0).value = NArray::vector({pc});
  a.policy.weight(1).value = NArray::matrix(1, 2, {u0, u1});
  a.policy.bias(1).value = NArray::vector({d0, d1});
}

struct ScalarAgent {
  double w, b, pa, pc, u0, u1, d0, d1;
  double encode(double x) const { return std::tanh(w * x + b); }
  std::array<double, 2> logp(double z) const {
    const double h = std::tanh(pa * z + pc);
    const double l0 = u0 * h + d0, l1 = u1 * h + d1;
    const double m = std::max(l0, l1);
    const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
    return {l0 - lse, l1 - lse};
  }
};

double kl2(const std::array<double, 2>& p, const std::array<double, 2>& q) {
  return std::exp(p[0]) * (p[0] - q[0]) + std::exp(p[1]) * (p[1] - q[1]);
}

rl::RolloutBuffer make_buffer(const nets::Agent& agent, const envgen::GridFamily& fam,
                              std::uint64_t seed) {
  envgen::EnvPool pool(fam, envgen::Split::train, 2, seed);
  Rng rng(seed);
  rl::RolloutBuffer b = rl::collect_rollout(agent, pool, 16, rng);
  b.finalize(0.99, 0.95);
  return b;
}

bool same_values(const nets::Mlp& a, const nets::Mlp& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!bitwise_equal(pa[i]->value, pb[i]->value)) return false;
  return true;
}

}  // namespace

TEST_CASE("categorical KL") {
  const NArray p = NArray::matrix(1, 2, {std::log(0.75), std::log(0.25)});
  const NArray q = NArray::matrix(1, 2, {std::log(0.5), std::log(0.5)});
  CHECK(adv::kl_categorical(p, q) ==
        doctest::Approx(0.75 * std::log(1.5) + 0.25 * std::log(0.5)).epsilon(1e-15));
  CHECK(adv::kl_categorical(p, q) == doctest::Approx(0.13081).epsilon(1e-4));
  CHECK(adv::kl_categorical(p, p) == 0.0);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_log_dist(5, rng), b = random_log_dist(5, rng);
    CHECK(adv::kl_categorical(NArray::matrix(1, 5, a), NArray::matrix(1, 5, b)) >= 0.0);
  }
  Tape t;
  CHECK(adv::kl_categorical(t.constant(p), t.constant(q)).value().item() ==
        adv::kl_categorical(p, q));
  CHECK_THROWS_AS(adv::kl_categorical(p, NArray::matrix(1, 3, {0, 0, 0})), ShapeError);
}

TEST_CASE("cross-encoder divergences") {
  Rng init(2);
  AgentPair pair(net_for(6), init, init);
  const NArray obs = random_obs(7, 6, init);

  SUBCASE("identical encoders give zero for any heads") {
    nets::copy_parameters(pair.agent1.encoder, pair.agent2.encoder);
    Tape t;
    Var x = t.constant(obs);
    CHECK(adv::d_own(t, pair.agent1, pair.agent2, x).value().item() == 0.0);
    CHECK(adv::d_other(t, pair.agent1, pair.agent2, x).value().item() == 0.0);
  }
  SUBCASE("a constant defender head gives zero d_own") {
    for (Parameter* p : pair.agent1.policy.parameters()) p->value.fill(0.0);
    Tape t;
    CHECK(adv::d_own(t, pair.agent1, pair.agent2, t.constant(obs)).value().item() == 0.0);
  }
  SUBCASE("d_other reaches both encoders and never the victim head") {
    Tape t;
    Var d = adv::d_other(t, pair.agent1, pair.agent2, t.constant(obs));
    CHECK(d.value().item() > 0.0);
    const GradientMap g = t.backward(d);
    for (const Parameter* p : pair.agent2.policy.parameters()) {
      CAPTURE(p->name);
      if (g.count(p->name))
        for (double v : g.at(p->name).values()) CHECK(v == 0.0);
    }
    double enc1 = 0.0, enc2 = 0.0;
    for (const Parameter* p : pair.agent1.encoder.parameters())
      for (double v : g.at(p->name).values()) enc1 += std::abs(v);
    for (const Parameter* p : pair.agent2.encoder.parameters())
      for (double v : g.at(p->name).values()) enc2 += std::abs(v);
    CHECK(enc1 > 0.0);
    CHECK(enc2 > 0.0);
  }
  SUBCASE("mismatched architectures are rejected") {
    nets::NetConfig other = net_for(6);
    other.head_hidden = 5;
    nets::Agent odd(2, other, init);
    Tape t;
    CHECK_THROWS_AS(adv::d_own(t, pair.agent1, odd, t.constant(obs)), std::invalid_argument);
    CHECK_THROWS_AS(adv::d_other(t, pair.agent1, odd, t.constant(obs)), std::invalid_argument);
  }
}

TEST_CASE("one-sample two-action instance matches a hand composition") {
  nets::NetConfig c;
  c.obs_dim = 1;
  c.n_actions = 2;
  c.encoder_hidden = {1};
  c.head_hidden = 1;
  Rng init(3);
  AgentPair pair(c, init, init);
  const ScalarAgent i{0.8, 0.1, 1.5, -0.2, 1.0, -0.5, 0.3, 0.0};
  const ScalarAgent j{-0.6, 0.4, 0.7, 0.1, -1.2, 0.9, 0.0, 0.2};
  set_scalar_agent(pair.agent1, i.w, i.b, i.pa, i.pc, i.u0, i.u1, i.d0, i.d1);
  set_scalar_agent(pair.agent2, j.w, j.b, j.pa, j.pc, j.u0, j.u1, j.d0, j.d1);
  const double x = 0.5;
  const double zi = i.encode(x), zj = j.encode(x);
  const double own = kl2(i.logp(zi), i.logp(zj));
  const double other = kl2(j.logp(zj), j.logp(zi));
  Tape t;
  Var obs = t.constant(NArray::matrix(1, 1, {x}));
  CHECK(adv::d_own(t, pair.agent1, pair.agent2, obs).value().item() ==
        doctest::Approx(own).epsilon(1e-14));
  CHECK(adv::d_other(t, pair.agent1, pair.agent2, obs).value().item() ==
        doctest::Approx(other).epsilon(1e-14));
  CHECK(own > 0.0);
  CHECK(other > 0.0);
}

TEST_CASE("total loss freezes the opponent's heads") {
  const envgen::GridFamily fam(small_family());
  Rng i1(4), i2(5);
  AgentPair pair(net_for(fam.obs_dim()), i1, i2);
  const rl::RolloutBuffer buf = make_buffer(pair.agent1, fam, 6);
  std::vector<std::size_t> idx(buf.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  adv::AdvConfig cfg;
  Tape t;
  const adv::TotalLoss tl = adv::total_loss(t, pair.agent1, pair.agent2,
                                            t.constant(buf.gather_obs(idx)), rl::slice(buf, idx),
                                            cfg);
  CHECK(std::isfinite(tl.total.value().item()));
  CHECK(tl.total.value().item() ==
        doctest::Approx(tl.rl.total.value().item() + tl.d_own.value().item() -
                        tl.d_other.value().item())
            .epsilon(1e-14));
  const GradientMap g = t.backward(tl.total);
  for (const nets::Mlp* m : {&pair.agent2.policy, &pair.agent2.value})
    for (const Parameter* p : m->parameters())
      if (g.count(p->name))
        for (double v : g.at(p->name).values()) CHECK(v == 0.0);
  for (const Parameter* p : pair.agent2.encoder.parameters()) CHECK(g.count(p->name) == 1);
}

TEST_CASE("adversarial_update") {
  const envgen::GridFamily fam(small_family());
  adv::AdvConfig cfg;
  cfg.ppo.minibatches = 4;
  cfg.ppo.learning_rate = 1e-2;

  SUBCASE("alpha = 0 reduces to plain PPO and leaves the opponent alone") {
    cfg.alpha = 0.0;
    Rng i1(4), i2(5);
    AgentPair pair(net_for(fam.obs_dim()), i1, i2);
    nets::Agent solo = pair.agent1;
    const AgentPair before = pair;
    const rl::RolloutBuffer buf = make_buffer(pair.agent1, fam, 6);
    Rng r1(9), r2(9);
    const adv::AdvLossReport rep = adv::adversarial_update(pair, 1, buf, cfg, r1);
    rl::AdamState adam;
    rl::ppo_update(solo, buf, cfg.ppo, adam, r2);
    const auto a = pair.agent1.parameters(), b = solo.parameters();
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(bitwise_equal(a[k]->value, b[k]->value));
    CHECK(same_values(pair.agent2.encoder, before.agent2.encoder));
    CHECK(rep.d_own >= 0.0);
    CHECK(rep.d_other >= 0.0);
    CHECK(rep.total == doctest::Approx(rep.l_rl).epsilon(1e-14));
  }
  SUBCASE("alpha = 1 moves the opponent's encoder only") {
    Rng i1(4), i2(5);
    AgentPair pair(net_for(fam.obs_dim()), i1, i2);
    const AgentPair before = pair;
    const rl::RolloutBuffer buf = make_buffer(pair.agent1, fam, 6);
    Rng r(9);
    const adv::AdvLossReport rep = adv::adversarial_update(pair, 1, buf, cfg, r);
    CHECK(same_values(pair.agent2.policy, before.agent2.policy));
    CHECK(same_values(pair.agent2.value, before.agent2.value));
    CHECK_FALSE(same_values(pair.agent2.encoder, before.agent2.encoder));
    CHECK_FALSE(same_values(pair.agent1.encoder, before.agent1.encoder));
    CHECK(rep.grad_norms.policy_other == 0.0);
    CHECK(rep.grad_norms.value_other == 0.0);
    CHECK(rep.grad_norms.encoder_other > 0.0);
    CHECK(rep.minibatch_steps == 12);
    CHECK(rep.l_kl == doctest::Approx(rep.d_own - rep.d_other).epsilon(1e-14));
    CHECK(std::isfinite(rep.total));
  }
}

TEST_CASE("dual trainer accounting, replay and symmetry") {
  const envgen::GridFamily fam(small_family());
  auto make = [&](std::uint64_t s1, std::uint64_t s2, int first, std::size_t total) {
    adv::DualConfig cfg;
    cfg.adv.ppo.n_envs = 2;
    cfg.adv.ppo.horizon = 4;
    cfg.adv.ppo.minibatches = 2;
    cfg.seed_agent1 = s1;
    cfg.seed_agent2 = s2;
    cfg.first_agent = first;
    cfg.total_steps = total;
    return adv::DualTrainer(fam, net_for(fam.obs_dim()), cfg);
  };

  SUBCASE("2 n_envs horizon steps is one outer iteration") {
    adv::DualTrainer tr = make(3, 4, 1, 16);
    CHECK(tr.steps_per_iteration() == 16);
    const auto stream = tr.run();
    REQUIRE(stream.size() == 2);
    CHECK(stream[0].agent == 1);
    CHECK(stream[1].agent == 2);
    CHECK(stream[1].step == 16);
  }
  SUBCASE("stream length is total_steps / (n_envs horizon)") {
    adv::DualTrainer tr = make(3, 4, 1, 80);
    CHECK(tr.run().size() == 10);
  }
  SUBCASE("a rerun reproduces every report exactly") {
    adv::DualTrainer a = make(3, 3, 1, 16), b = make(3, 3, 1, 16);
    const auto sa = a.run(), sb = b.run();
    for (std::size_t k = 0; k < sa.size(); ++k) {
      CHECK(sa[k].loss.d_own == sb[k].loss.d_own);
      CHECK(sa[k].loss.d_other == sb[k].loss.d_other);
      CHECK(sa[k].loss.total == sb[k].loss.total);
      CHECK(sa[k].loss.l_rl == sb[k].loss.l_rl);
    }
  }
  SUBCASE("swapping seeds and update order swaps the streams") {
    adv::DualTrainer a = make(11, 12, 1, 48), b = make(12, 11, 2, 48);
    const auto sa = a.run(), sb = b.run();
    REQUIRE(sa.size() == sb.size());
    for (std::size_t k = 0; k < sa.size(); ++k) {
      CHECK(sa[k].agent == 3 - sb[k].agent);
      CHECK(sa[k].loss.total == sb[k].loss.total);
      CHECK(sa[k].loss.d_own == sb[k].loss.d_own);
      CHECK(sa[k].loss.d_other == sb[k].loss.d_other);
      CHECK(sa[k].rollout_return == sb[k].rollout_return);
    }
    const auto pa = a.pair().agent1.parameters(), pb = b.pair().agent2.parameters();
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(bitwise_equal(pa[k]->value, pb[k]->value));
  }
  SUBCASE("agent ids other than 1 and 2 are rejected") {
    adv::DualTrainer tr = make(1, 2, 1, 16);
    CHECK_THROWS_AS(tr.pool(3), std::invalid_argument);
    CHECK_THROWS_AS(tr.pair().get(0), std::invalid_argument);
  }
}
