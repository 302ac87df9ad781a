#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "advp/nets/agent.hpp"
#include "advp/rlcore/ppo.hpp"

using namespace advp;
using nets::Agent;
using nets::NetConfig;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.obs_dim = 5;
  c.n_actions = 3;
  c.encoder_hidden = {6, 4};
  c.head_hidden = 8;
  return c;
}

NArray random_obs(std::size_t rows, std::size_t cols, Rng& rng) {
  NArray a(Shape{rows, cols});
  for (double& v : a.values()) v = 2.0 * uniform01(rng) - 1.0;
  return a;
}

NArray log_probs(const Agent& a, const NArray& obs) {
  Tape t;
  return nets::action_dist(t, a, nets::encode(t, a, t.constant(obs))).value();
}

}  // namespace

TEST_CASE("zero weights give a zero representation") {
  Rng rng(1);
  Agent a(1, small_config(), rng);
  for (Parameter* p : a.encoder.parameters()) p->value.fill(0.0);
  Tape t;
  const NArray r = nets::encode(t, a, t.constant(random_obs(3, 5, rng))).value();
  for (double v : r.values()) CHECK(v == 0.0);
}

TEST_CASE("an identity layer without activation passes the input through") {
  nets::Mlp layer("id", {3, 3}, nets::Activation::identity, nets::Activation::identity);
  for (std::size_t i = 0; i < 3; ++i) layer.weight(0).value[i * 3 + i] = 1.0;
  Tape t;
  const NArray x = NArray::matrix(2, 3, {0.5, -1, 2, 3, 0, -0.25});
  CHECK(layer.forward(t, t.constant(x)).value() == x);
}

TEST_CASE("seed 7 representation and policy match the stored golden values") {
  Rng rng(7);
  Agent a(1, small_config(), rng);
  Tape t;
  Var r = nets::encode(t, a, t.constant(NArray::matrix(1, 5, {0.1, -0.2, 0.3, 0.4, -0.5})));
  const double repr[] = {0x1.942d11e334197p-2, -0x1.cf72fa6a1c21p-2, -0x1.06b8579b8a311p-2,
                         -0x1.cb003020fb4e3p-9};
  const double lp[] = {-0x1.198392813a80dp+0, -0x1.18c6b45b8f241p+0, -0x1.1971daa665f76p+0};
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.value()[i] == doctest::Approx(repr[i]).epsilon(1e-12));
  const NArray p = nets::action_dist(t, a, r).value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(lp[i]).epsilon(1e-12));
}

TEST_CASE("a zero-weight policy head is uniform") {
  Rng rng(2);
  Agent a(1, small_config(), rng);
  for (Parameter* p : a.policy.parameters()) p->value.fill(0.0);
  const NArray lp = log_probs(a, random_obs(4, 5, rng));
  for (double v : lp.values()) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));
}

TEST_CASE("logits [ln 3, 0] give probabilities [0.75, 0.25]") {
  NetConfig c = small_config();
  c.n_actions = 2;
  Rng rng(3);
  Agent a(1, c, rng);
  a.policy.weight(1).value.fill(0.0);
  a.policy.bias(1).value = NArray::vector({std::log(3.0), 0.0});
  const NArray lp = log_probs(a, random_obs(2, 5, rng));
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(std::exp(lp.at(r, 0)) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(std::exp(lp.at(r, 1)) == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("every distribution row sums to one") {
  Rng rng(4);
  NetConfig c = small_config();
  c.policy_output_gain = 3.0;
  Agent a(1, c, rng);
  const NArray lp = log_probs(a, random_obs(50, 5, rng));
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += std::exp(lp.at(r, k));
    CHECK(std::abs(s - 1.0) < 1e-10);
  }
}

TEST_CASE("sample_action") {
  const double ninf = -std::numeric_limits<double>::infinity();
  Rng rng(5);
  SUBCASE("a deterministic row always yields its action") {
    const std::vector<double> row = {0.0, ninf, ninf};
    for (int i = 0; i < 1000; ++i) {
      const auto s = nets::sample_action(row, rng);
      CHECK(s.action == 0);
      CHECK(s.log_prob == 0.0);
    }
  }
  SUBCASE("uniform frequencies are within 0.01 of 1/4") {
    const std::vector<double> row(4, -std::log(4.0));
    std::vector<std::size_t> counts(4, 0);
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) ++counts[nets::sample_action(row, rng).action];
    for (std::size_t c : counts) CHECK(std::abs(static_cast<double>(c) / n - 0.25) < 0.01);
  }
  SUBCASE("same seed, same draw; log-prob matches the row") {
    const std::vector<double> row = {std::log(0.2), std::log(0.5), std::log(0.3)};
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) {
      const auto x = nets::sample_action(row, a), y = nets::sample_action(row, b);
      CHECK(x.action == y.action);
      CHECK(x.log_prob == row[x.action]);
    }
  }
}

TEST_CASE("greedy_action breaks ties toward the lowest index") {
  CHECK(nets::greedy_action(std::vector<double>{-1.0, -0.5, -0.5}) == 1);
  CHECK(nets::greedy_action(std::vector<double>{-0.7, -0.7}) == 0);
}

TEST_CASE("snapshot_old_policy is detached") {
  Rng rng(6);
  Agent live(1, small_config(), rng);
  const NArray obs = random_obs(6, 5, rng);
  const Agent old = nets::snapshot_old_policy(live);
  for (const Parameter* p : old.parameters()) CHECK_FALSE(p->trainable);
  const NArray before = log_probs(old, obs);
  CHECK(bitwise_equal(before, log_probs(live, obs)));  // ratio = 1 everywhere

  SUBCASE("zeroing the live policy leaves the snapshot unchanged") {
    for (Parameter* p : live.policy.parameters()) p->value.fill(0.0);
    CHECK(bitwise_equal(log_probs(old, obs), before));
  }
  SUBCASE("one optimizer step separates live and snapshot parameters") {
    Tape t;
    Var lp = nets::action_dist(t, live, nets::encode(t, live, t.constant(obs)));
    const GradientMap g = t.backward(mean(gather(lp, {0, 1, 2, 0, 1, 2})));
    rl::AdamState adam;
    auto params = live.parameters();
    rl::adam_step(params, g, adam, 1e-2);
    auto a = live.parameters();
    auto b = old.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
      CAPTURE(a[i]->name);
      const bool has_grad = g.count(a[i]->name) > 0;
      if (has_grad) CHECK_FALSE(bitwise_equal(a[i]->value, b[i]->value));
    }
  }
}

TEST_CASE("two agents are homogeneous and never share storage") {
  Rng r1(1), r2(2);
  Agent a(1, small_config(), r1), b(2, small_config(), r2);
  CHECK(a.architecture() == b.architecture());
  std::set<const void*> storage;
  std::set<std::string> names;
  for (const Agent* ag : {&a, &b})
    for (const Parameter* p : ag->parameters()) {
      CHECK(storage.insert(p->value.data()).second);
      CHECK(names.insert(p->name).second);
    }
}

TEST_CASE("encode and action_dist are pure") {
  Rng rng(8);
  Agent a(1, small_config(), rng);
  const NArray obs = random_obs(5, 5, rng);
  CHECK(bitwise_equal(log_probs(a, obs), log_probs(a, obs)));
}

TEST_CASE("observation dimension mismatches are rejected") {
  Rng rng(9);
  Agent a(1, small_config(), rng);
  Tape t;
  CHECK_THROWS_AS(nets::encode(t, a, t.constant(NArray(Shape{2, 4}))), ShapeError);
}
