#include "advp/harness/suites.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "advp/advdual/adversarial.hpp"
#include "advp/envgen/tabular.hpp"
#include "advp/harness/text.hpp"
#include "advp/theory/bounds.hpp"

namespace advp::harness {

namespace {

double symmetric(Rng& rng, double scale) { return (2.0 * uniform01(rng) - 1.0) * scale; }

std::size_t pick(std::size_t lo, std::size_t hi, Rng& rng) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

NArray random_array(Shape shape, Rng& rng, double scale) {
  NArray a(std::move(shape));
  for (double& v : a.values()) v = symmetric(rng, scale);
  return a;
}

// One step of a random graph, recorded so the builder can replay it.
struct Step {
  int op = 0;
  std::size_t param = 0;  // index into the parameter store, when used
};

struct GraphStore {
  std::deque<Parameter> params;
  NArray input;
  std::vector<Step> steps;
  int reduce = 0;
  std::vector<std::size_t> gather_idx;
};

}  // namespace

RandomGraph random_graph(Rng& rng) {
  auto store = std::make_shared<GraphStore>();
  const std::size_t rows = pick(2, 4, rng), in = pick(2, 4, rng);
  std::size_t cols = pick(2, 4, rng);
  store->input = random_array({rows, in}, rng, 1.0);
  auto add_param = [&](Shape shape) {
    store->params.push_back(
        {"g." + std::to_string(store->params.size()), random_array(std::move(shape), rng, 0.7)});
    return store->params.size() - 1;
  };
  const std::size_t w0 = add_param({in, cols});
  std::string desc = "matmul";
  const std::size_t n_ops = pick(2, 6, rng);
  for (std::size_t k = 0; k < n_ops; ++k) {
    Step s;
    s.op = static_cast<int>(rng() % 9);
    switch (s.op) {
      case 1: s.param = add_param({cols}); break;
      case 2:
      case 6: s.param = add_param({rows, cols}); break;
      case 3: {
        const std::size_t next = pick(2, 4, rng);
        s.param = add_param({cols, next});
        cols = next;
        break;
      }
      case 8: s.param = add_param({in, cols}); break;
      default: break;
    }
    static const char* names[] = {"tanh", "add_row", "mul", "matmul", "exp",
                                  "square", "sub", "log_softmax", "skip"};
    desc += std::string(" ") + names[s.op];
    store->steps.push_back(s);
  }
  store->reduce = static_cast<int>(rng() % 5);
  for (std::size_t r = 0; r < rows; ++r) store->gather_idx.push_back(rng() % cols);
  static const char* reducers[] = {"mean", "sum", "gather", "row_sum", "col_sum"};
  desc += std::string(" -> ") + reducers[store->reduce];

  RandomGraph g;
  g.description = desc;
  for (Parameter& p : store->params) g.params.push_back(&p);
  GraphStore* st = store.get();
  g.build = [st, w0](Tape& tape) {
    Var x = tape.constant(st->input);
    Var cur = matmul(x, tape.param(st->params[w0]));
    for (const Step& s : st->steps) {
      switch (s.op) {
        case 0: cur = tanh(cur); break;
        case 1: cur = add(cur, tape.param(st->params[s.param])); break;
        case 2: cur = mul(cur, tape.param(st->params[s.param])); break;
        case 3: cur = matmul(cur, tape.param(st->params[s.param])); break;
        case 4: cur = exp(scale(cur, 0.3)); break;
        case 5: cur = square(scale(cur, 0.5)); break;
        case 6: cur = sub(cur, tape.param(st->params[s.param])); break;
        case 7: cur = log_softmax(cur, 1); break;
        case 8: cur = add(cur, tanh(matmul(x, tape.param(st->params[s.param])))); break;
      }
    }
    switch (st->reduce) {
      case 0: return mean(cur);
      case 1: return scale(sum(cur), 0.1);
      case 2: return mean(gather(log_softmax(cur, 1), st->gather_idx));
      case 3: return mean(sum(cur, 1));
      default: return mean(sum(cur, 0));
    }
  };
  g.owner = std::move(store);
  return g;
}

namespace {

struct LossStore {
  adv::AgentPair pair;
  NArray obs;
  rl::Minibatch batch;
  adv::AdvConfig config;
};

}  // namespace

RandomGraph total_loss_graph(Rng& rng, double alpha) {
  nets::NetConfig net;
  net.obs_dim = 6;
  net.n_actions = 3;
  net.encoder_hidden = {5};
  net.head_hidden = 4;
  // Larger than the training default so the policy term is not negligible.
  net.policy_output_gain = 1.0;
  Rng r1(rng()), r2(rng());
  auto store = std::make_shared<LossStore>(LossStore{adv::AgentPair(net, r1, r2), {}, {}, {}});
  store->config.alpha = alpha;
  constexpr std::size_t kBatch = 6;
  store->obs = random_array({kBatch, net.obs_dim}, rng, 1.0);
  const NArray lp = rl::evaluate(store->pair.agent1, store->obs).log_probs;
  for (std::size_t i = 0; i < kBatch; ++i) {
    const std::size_t a = rng() % net.n_actions;
    store->batch.action.push_back(a);
    // Ratios stay within [0.95, 1.05], away from the clip kinks.
    store->batch.log_prob_old.push_back(lp.at(i, a) + symmetric(rng, 0.05));
    store->batch.advantage.push_back(symmetric(rng, 1.0));
    store->batch.returns.push_back(symmetric(rng, 1.0));
  }
  RandomGraph g;
  g.description = "adversarial total loss (alpha " + std::to_string(alpha) + ")";
  for (Parameter* p : store->pair.agent1.parameters()) g.params.push_back(p);
  for (Parameter* p : store->pair.agent2.encoder.parameters()) g.params.push_back(p);
  LossStore* st = store.get();
  g.build = [st](Tape& tape) {
    return adv::total_loss(tape, st->pair.agent1, st->pair.agent2, tape.constant(st->obs),
                           st->batch, st->config)
        .total;
  };
  g.owner = std::move(store);
  return g;
}

GradcheckSuiteResult run_gradcheck_suite(std::size_t n_graphs, std::uint64_t seed) {
  GradcheckSuiteResult out;
  for (std::size_t i = 0; i < n_graphs; ++i) {
    Rng rng(hash_seed(seed, i));
    RandomGraph g = i == 0 ? total_loss_graph(rng) : random_graph(rng);
    const GradCheckResult r = grad_check(g.build, g.params);
    ++out.graphs;
    if (r.max_relative_error >= out.max_relative_error) {
      out.max_relative_error = r.max_relative_error;
      out.worst = "graph " + std::to_string(i) + " (" + g.description + "), " +
                  r.worst_parameter + "[" + std::to_string(r.worst_index) + "]";
    }
  }
  return out;
}

TheorySuiteResult run_theory_suite(std::size_t instances, std::size_t cpi_families,
                                   std::size_t cpi_iters, std::uint64_t seed) {
  using namespace theory;
  TheorySuiteResult out;
  out.theorem1_min_slack = INFINITY;
  out.theorem4_min_slack = INFINITY;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(hash_seed(seed, i));
    const std::size_t n_mdps = 1 + i % 4, n_states = 2 + i % 5, n_actions = 2 + i % 2;
    const std::size_t train = 1 + (i / 4) % n_mdps;
    const double gamma = i % 2 ? 0.99 : 0.9;
    const bool shared = i % 3 != 0;

    // Theorems 1 and 2 on a family of the given gamma (shared or not).
    const TabularFamily loose = envgen::make_tabular_family(hash_seed(seed, i, 1), n_mdps, n_states,
                                                            n_actions, gamma, shared, train);
    const TabularMDP& mdp = loose.members.front();
    const PolicyTable pi = PolicyTable::random(n_states, n_actions, rng);
    const PolicyTable pt = PolicyTable::random(n_states, n_actions, rng);
    const PerfDiffReport pd = check_perf_diff(mdp, pi, pt);
    out.perf_diff_max_error = std::max(out.perf_diff_max_error, pd.abs_error);
    BoundReport t2;
    t2.name = "theorem2";
    t2.lhs = pd.lhs;
    t2.rhs = pd.rhs;
    t2.slack = -pd.abs_error;
    out.reports.emplace_back(i, t2);

    double mass = 0.0;
    for (double v : exact_eval(mdp, pi).rho) mass += v;
    out.rho_mass_max_error =
        std::max(out.rho_mass_max_error, std::abs(mass - 1.0 / (1.0 - mdp.gamma)));
    double train_mass = 0.0, full_mass = 0.0;
    for (std::size_t m : loose.levels.train_indices()) {
      train_mass += loose.levels.p_train(m);
      full_mass += loose.levels.p_full(m);
    }
    out.train_mass_max_error = std::max({out.train_mass_max_error, std::abs(train_mass - 1.0),
                                         std::abs(full_mass - loose.levels.m_coeff())});

    FamilyPolicy fp, fq;
    for (std::size_t m = 0; m < n_mdps; ++m) {
      fp.push_back(PolicyTable::random(n_states, n_actions, rng));
      fq.push_back(PolicyTable::random(n_states, n_actions, rng));
    }
    const BoundReport t1 = check_theorem1(loose, fp);
    out.theorem1_min_slack = std::min(out.theorem1_min_slack, t1.slack);
    out.reports.emplace_back(i, t1);

    // Theorem 4 and Lemma 1 on a shared-semantics family with gamma 0.9.
    const TabularFamily fam = envgen::make_tabular_family(hash_seed(seed, i, 2), n_mdps, n_states,
                                                          n_actions, 0.9, true, train);
    const BoundReport t4 = check_theorem4(fam, fp, fq);
    out.theorem4_min_slack = std::min(out.theorem4_min_slack, t4.slack);
    out.reports.emplace_back(i, t4);
    out.reports.emplace_back(i, check_lemma1(fam, fp, fq));
    ++out.instances;
  }
  for (std::size_t f = 0; f < cpi_families; ++f) {
    Rng rng(hash_seed(seed, 1000 + f));
    const TabularFamily fam = envgen::make_tabular_family(hash_seed(seed, 1000 + f, 1), 4, 5, 3,
                                                          0.9, true, 3);
    const FamilyPolicy pi0 = lift_semantic(fam, PolicyTable::random(5, 3, rng));
    ++out.cpi_families;
    try {
      const IterationResult res = conservative_iteration(fam, pi0, cpi_iters);
      bool ok = true;
      for (std::size_t k = 1; k < res.eta_trace.size(); ++k)
        ok = ok && res.eta_trace[k] >= res.eta_trace[k - 1] - 1e-9;
      if (ok) ++out.cpi_monotone;
    } catch (const std::logic_error&) {
    }
  }
  return out;
}

std::string bound_reports_csv(const TheorySuiteResult& result) {
  std::string out = "instance,name,lhs,rhs,slack,r_max,A_max,C,D1,D2,D3,M_pi\n";
  for (const auto& [i, r] : result.reports) {
    out += std::to_string(i) + "," + r.name;
    for (double v : {r.lhs, r.rhs, r.slack, r.r_max, r.A_max, r.C, r.D1, r.D2, r.D3, r.M_pi})
      out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

}  // namespace advp::harness
