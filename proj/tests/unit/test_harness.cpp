#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "advp/harness/config.hpp"
#include "advp/harness/experiment.hpp"
#include "advp/harness/plots.hpp"
#include "advp/harness/suites.hpp"
#include "advp/theory/bounds.hpp"

using namespace advp;
using namespace advp::harness;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("advp_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny_config(const std::string& dir) {
  RunConfig c;
  c.env.grid = envgen::GridSpec{5, 5, 0.1, 1};
  c.env.rules.horizon = 12;
  c.env.universe_size = 50;
  c.env.train_count = 5;
  c.ppo.n_envs = 2;
  c.ppo.horizon = 8;
  c.ppo.minibatches = 2;
  c.encoder_hidden = {8};
  c.head_hidden = 8;
  c.total_steps = 64;
  c.eval_interval = 32;
  c.eval_episodes = 4;
  c.probe_states = 3;
  c.probe_pairs = 2;
  c.output_dir = dir;
  return c;
}

nets::Agent make_agent(std::size_t obs_dim, std::uint64_t seed, double gain = 0.01) {
  nets::NetConfig c;
  c.obs_dim = obs_dim;
  c.encoder_hidden = {8};
  c.head_hidden = 8;
  c.policy_output_gain = gain;
  Rng rng(seed);
  return nets::Agent(1, c, rng);
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse_config(
      "# a comment\n"
      "experiment.mode = baseline\n"
      "ppo.gamma = 0.99   # trailing comment\n"
      "net.encoder_hidden = 32,16\n"
      "adv.alpha = 0.5\n"
      "adv.alpha = 2\n");
  CHECK(c.mode == Mode::baseline);
  CHECK(c.ppo.gamma == 0.99);
  CHECK(c.encoder_hidden == std::vector<std::size_t>{32, 16});
  CHECK(c.alpha == 2.0);
  CHECK(c.effective_alpha() == 0.0);
  CHECK(parse_config(to_text(c)).alpha == 2.0);
  CHECK(to_text(parse_config(to_text(c))) == to_text(c));

  CHECK_THROWS_AS(parse_config("ppo.gama = 0.9\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("ppo.gamma = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just some words\n"), ConfigError);
  try {
    parse_config("ppo.gamma = 0.9\nbogus.key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
  }

  RunConfig bad;
  bad.ppo.clip_eps = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.env.train_count = bad.env.universe_size + 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.checkpoint_version = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(RunConfig{}.validate());

  RunConfig a, b;
  b.total_steps = 123;
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.alpha = 0.25;
  CHECK(config_hash(a) != config_hash(b));

  ::setenv("ADVP_OUTPUT_DIR", "/tmp/override", 1);
  apply_environment(a);
  ::unsetenv("ADVP_OUTPUT_DIR");
  CHECK(a.output_dir == "/tmp/override");
  CHECK(RunConfig{}.agent_seed(1) != RunConfig{}.agent_seed(2));
}

TEST_CASE("metric CSV format") {
  MetricRow r;
  r.step = 2048;
  r.agent = 2;
  r.split = envgen::Split::full;
  r.mean_return = 1.25;
  r.std_return = 0.1;
  r.l_kl = -3e-5;
  const std::string text = metric_preamble() + format_row(r);
  const auto rows = parse_metrics(text);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0] == r);
  CHECK(parse_metrics("").empty());
  CHECK(text.rfind(kMetricSchema, 0) == 0);
  CHECK(metric_columns().size() == 12);

  auto line_of = [](const std::string& t) {
    try {
      parse_metrics(t);
    } catch (const CsvError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  const std::string header = metric_preamble();
  CHECK(line_of("# schema=other/9\n") == 1);
  CHECK(line_of(std::string(kMetricSchema) + "\nstep,agent\n") == 2);
  CHECK(line_of(header + format_row(r) + "1,2,full\n") == 4);
  CHECK(line_of(header + "10,1,train,x,0,0,0,0,0,0,0,0\n") == 3);
  CHECK(line_of(header + "10,3,train,0,0,0,0,0,0,0,0,0\n") == 3);
  CHECK(line_of(header + "10,1,test,0,0,0,0,0,0,0,0,0\n") == 3);
  MetricRow earlier = r;
  earlier.step = 1024;
  CHECK(line_of(header + format_row(r) + format_row(earlier)) == 4);
  earlier.agent = 1;
  CHECK(line_of(header + format_row(r) + format_row(earlier)) == 0);
}

TEST_CASE("checkpoint encoding") {
  Checkpoint ck;
  ck.config_hash = 0x0123456789abcdefULL;
  ck.put("w", NArray::matrix(2, 2, {0.1, -2.5, 1e-300, 3.0}));
  ck.put_words("rng", {0u, 1u, 0xffffffffu, 0x80000001u});
  ck.put_u64("steps", 0xfedcba9876543210ULL);
  ck.put_text("meta", "a = 1\nb = two\n");

  SUBCASE("version 2 round-trips exactly") {
    const Checkpoint back = decode_checkpoint(encode_checkpoint(ck));
    CHECK(back.version == 2);
    CHECK(back.config_hash == ck.config_hash);
    CHECK(bitwise_equal(back.get_array("w"), ck.get_array("w")));
    CHECK(back.get_words("rng") == ck.get_words("rng"));
    CHECK(back.get_u64("steps") == 0xfedcba9876543210ULL);
    CHECK(back.get_text("meta") == "a = 1\nb = two\n");
    CHECK(encode_checkpoint(back) == encode_checkpoint(ck));
  }
  SUBCASE("version 1 rounds arrays to f32 and keeps integers exact") {
    ck.version = 1;
    const Checkpoint back = decode_checkpoint(encode_checkpoint(ck));
    CHECK(back.version == 1);
    const NArray w = back.get_array("w");
    CHECK(w[0] == static_cast<double>(0.1f));
    CHECK(w[1] == -2.5);
    CHECK(back.get_words("rng") == ck.get_words("rng"));
    CHECK(back.get_u64("steps") == 0xfedcba9876543210ULL);
    CHECK(back.get_text("meta") == ck.get_text("meta"));
  }
  SUBCASE("corrupt data is diagnosed") {
    const std::string good = encode_checkpoint(ck);
    auto message = [](const std::string& bytes) {
      try {
        decode_checkpoint(bytes);
      } catch (const CheckpointError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    std::string bad = good;
    bad[0] = 'X';
    CHECK(message(bad).find("magic") != std::string::npos);
    bad = good;
    bad[4] = 9;
    CHECK(message(bad).find("version 9") != std::string::npos);
    const std::string cut = message(good.substr(0, good.size() - 3));
    CHECK(cut.find("version 2") != std::string::npos);
    CHECK(cut.find("offset") != std::string::npos);
    CHECK_FALSE(message(good + "x").empty());
    CHECK_FALSE(message("").empty());
    CHECK_THROWS_AS(ck.get("missing"), CheckpointError);
  }
  SUBCASE("files are written atomically and load errors name the path") {
    TempDir dir("ckpt");
    save_checkpoint(dir / "a.advp", ck);
    CHECK(encode_checkpoint(load_checkpoint(dir / "a.advp")) == encode_checkpoint(ck));
    CHECK_FALSE(fs::exists(dir / "a.advp.tmp"));
    std::ofstream(dir / "junk.advp") << "ADVP";
    try {
      load_checkpoint(dir / "junk.advp");
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("junk.advp") != std::string::npos);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.advp"), CheckpointError);
  }
}

TEST_CASE("training runs") {
  TempDir dir("train");
  SUBCASE("one iteration writes one row per agent per split") {
    RunConfig c = tiny_config(dir / "one");
    c.total_steps = 32;
    const TrainResult r = run_train(c);
    const auto rows = read_metrics(r.metrics_path);
    CHECK(rows.size() == 4);
    for (const MetricRow& row : rows) CHECK(row.step == 32);
    CHECK(fs::exists(r.checkpoint_path));
    CHECK(fs::exists(dir / "one/config.txt"));
  }
  SUBCASE("two runs write identical files") {
    const TrainResult a = run_train(tiny_config(dir / "a"));
    const TrainResult b = run_train(tiny_config(dir / "b"));
    CHECK(slurp(a.metrics_path) == slurp(b.metrics_path));
    CHECK(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
    CHECK(read_metrics(a.metrics_path).size() == 8);
  }
  SUBCASE("baseline equals adversarial with alpha 0") {
    RunConfig base = tiny_config(dir / "base");
    base.mode = Mode::baseline;
    RunConfig zero = tiny_config(dir / "zero");
    zero.alpha = 0.0;
    const auto ra = read_metrics(run_train(base).metrics_path);
    const auto rb = read_metrics(run_train(zero).metrics_path);
    REQUIRE(ra.size() == rb.size());
    for (std::size_t k = 0; k < ra.size(); ++k) {
      CHECK(ra[k].mean_return == rb[k].mean_return);
      CHECK(ra[k].l_rl == rb[k].l_rl);
    }
  }
  SUBCASE("resuming from a mid-run checkpoint reproduces the uninterrupted run") {
    RunConfig full = tiny_config(dir / "full");
    full.checkpoint_interval = 32;
    const TrainResult ref = run_train(full);
    RunConfig part = tiny_config(dir / "part");
    part.checkpoint_interval = 32;
    part.total_steps = 32;
    run_train(part);
    part.total_steps = 64;
    TrainOptions opt;
    opt.resume = checkpoint_path(part.output_dir, 32);
    const TrainResult res = run_train(part, opt);
    CHECK(slurp(res.metrics_path) == slurp(ref.metrics_path));
    CHECK(slurp(res.checkpoint_path) == slurp(ref.checkpoint_path));
  }
  SUBCASE("a checkpoint from another configuration is refused") {
    RunConfig c = tiny_config(dir / "c");
    c.total_steps = 32;
    const TrainResult r = run_train(c);
    RunConfig other = c;
    other.alpha = 0.5;
    Session s(other);
    CHECK_THROWS_AS(s.restore(load_checkpoint(r.checkpoint_path)), ConfigError);
    Rng rng(1);
    const auto ev = run_eval(r.checkpoint_path, envgen::Split::full, 3, rng);
    CHECK(ev[0].episodes == 3);
    CHECK_THROWS_AS(run_eval(r.checkpoint_path, envgen::Split::full, 0, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("evaluation") {
  SUBCASE("a single deterministic level has zero spread") {
    envgen::GridFamilyConfig cfg;
    cfg.universe_size = 1;
    cfg.train_count = 1;
    const envgen::GridFamily fam(cfg);
    const nets::Agent agent = make_agent(fam.obs_dim(), 3, 1.0);
    Rng rng(4);
    const EvalSummary s = evaluate_policy(agent, fam, envgen::Split::full, 20, rng);
    CHECK(s.std == 0.0);
    CHECK(s.episodes == 20);
    CHECK_THROWS_AS(evaluate_policy(agent, fam, envgen::Split::full, 0, rng),
                    std::invalid_argument);
  }
  SUBCASE("greedy returns agree with exact evaluation of the embedded MDPs") {
    envgen::GridFamilyConfig cfg;
    cfg.grid = envgen::GridSpec{5, 5, 0.2, 2};
    cfg.semantic_variation = false;
    cfg.universe_size = 10;
    cfg.train_count = 2;
    cfg.rules.horizon = 400;
    const envgen::GridFamily fam(cfg);
    const nets::Agent agent = make_agent(fam.obs_dim(), 5, 1.0);
    const double gamma = 0.9;
    const auto layout = fam.layout(0);
    const std::size_t cells = layout->size(), absorb = cells;

    double zeta = 0.0;
    for (std::size_t m = 0; m < 10; ++m) {
      envgen::TabularMDP mdp;
      mdp.n_states = cells + 1;
      mdp.n_actions = envgen::kNumActions;
      mdp.gamma = gamma;
      mdp.P.assign(mdp.n_states * mdp.n_actions * mdp.n_states, 0.0);
      mdp.r.assign(mdp.n_states * mdp.n_actions, 0.0);
      mdp.rho0.assign(mdp.n_states, 0.0);
      mdp.rho0[layout->start] = 1.0;
      theory::PolicyTable pi = theory::PolicyTable::uniform(mdp.n_states, mdp.n_actions);
      for (std::size_t s = 0; s <= cells; ++s) {
        const bool live = s < cells && layout->at(s) != envgen::Cell::goal &&
                          layout->at(s) != envgen::Cell::obstacle;
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
          std::size_t to = absorb;
          double reward = 0.0;
          if (live) {
            to = envgen::move_target(*layout, s, a);
            switch (layout->at(to)) {
              case envgen::Cell::goal: reward = cfg.rules.goal_reward, to = absorb; break;
              case envgen::Cell::hazard: reward = cfg.rules.hazard_reward; break;
              default: reward = cfg.rules.step_reward;
            }
          }
          mdp.P[(s * mdp.n_actions + a) * mdp.n_states + to] = 1.0;
          mdp.r[s * mdp.n_actions + a] = reward;
        }
        if (live) {
          const NArray obs = envgen::render({layout, s, 0}, m, cfg.render);
          const rl::Evaluation e = rl::evaluate(
              agent, NArray::matrix(1, obs.size(), {obs.values().begin(), obs.values().end()}));
          const std::size_t g = nets::greedy_action(std::span<const double>(
              e.log_probs.values().data(), mdp.n_actions));
          for (std::size_t a = 0; a < mdp.n_actions; ++a) pi.p(s, a) = a == g ? 1.0 : 0.0;
        }
      }
      zeta += theory::exact_eval(mdp, pi).eta / 10.0;
    }
    Rng rng(6);
    const EvalSummary s = evaluate_policy(agent, fam, envgen::Split::full, 10000, rng, gamma);
    const double se = s.std / std::sqrt(10000.0);
    CHECK(std::abs(s.mean - zeta) <= 3.0 * se + 1e-9);
  }
}

TEST_CASE("robustness probe") {
  envgen::GridFamilyConfig cfg;
  cfg.semantic_variation = false;
  cfg.universe_size = 100;
  cfg.train_count = 20;
  Rng rng(7);
  SUBCASE("no noise channels gives exactly zero") {
    cfg.render.noise_channels = 0;
    const envgen::GridFamily fam(cfg);
    const ProbeResult p =
        robustness_probe(make_agent(fam.obs_dim(), 1, 1.0), fam, envgen::Split::full, 10, 5, rng);
    CHECK(p.mean == 0.0);
    CHECK(p.max == 0.0);
    CHECK(p.triples == 50);
  }
  SUBCASE("an untrained policy is nearly invariant") {
    const envgen::GridFamily fam(cfg);
    const ProbeResult p =
        robustness_probe(make_agent(fam.obs_dim(), 2), fam, envgen::Split::train, 20, 10, rng);
    CHECK(p.mean < 1e-3);
    CHECK(p.triples == 200);
  }
  SUBCASE("a policy reading one noise channel matches the hand KL") {
    cfg.train_count = 2;
    const envgen::GridFamily fam(cfg);
    nets::NetConfig nc;
    nc.obs_dim = fam.obs_dim();
    nc.encoder_hidden = {1};
    nc.head_hidden = 1;
    Rng init(3);
    nets::Agent agent(1, nc, init);
    const std::size_t noise0 = envgen::kSemanticChannels * 49;
    agent.encoder.weight(0).value.fill(0.0);
    agent.encoder.weight(0).value[noise0] = 2.0;
    agent.encoder.bias(0).value.fill(0.0);
    agent.policy.weight(0).value.fill(3.0);
    agent.policy.bias(0).value.fill(0.0);
    agent.policy.weight(1).value = NArray::matrix(1, 4, {2.0, 0.0, 0.0, -1.0});
    agent.policy.bias(1).value.fill(0.0);
    auto logp = [&](std::size_t m) {
      const double h = std::tanh(3.0 * std::tanh(2.0 * envgen::noise_value(m, 0, cfg.render)));
      const double l[4] = {2.0 * h, 0.0, 0.0, -h};
      double z = 0.0;
      for (double v : l) z += std::exp(v);
      std::array<double, 4> out;
      for (int k = 0; k < 4; ++k) out[k] = l[k] - std::log(z);
      return out;
    };
    auto kl = [](const std::array<double, 4>& p, const std::array<double, 4>& q) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += std::exp(p[k]) * (p[k] - q[k]);
      return s;
    };
    const double k01 = kl(logp(0), logp(1)), k10 = kl(logp(1), logp(0));
    const ProbeResult p = robustness_probe(agent, fam, envgen::Split::train, 10, 10, rng);
    CHECK(k01 > 1e-4);
    CHECK(p.max == doctest::Approx(std::max(k01, k10)).epsilon(1e-12));
    CHECK(p.mean >= std::min(k01, k10) - 1e-15);
    CHECK(p.mean <= std::max(k01, k10) + 1e-15);
  }
  SUBCASE("families with layout variation or a single level are rejected") {
    cfg.semantic_variation = true;
    const envgen::GridFamily varied(cfg);
    CHECK_THROWS_AS(robustness_probe(make_agent(varied.obs_dim(), 1), varied,
                                     envgen::Split::full, 5, 5, rng),
                    std::invalid_argument);
    cfg.semantic_variation = false;
    cfg.train_count = 1;
    const envgen::GridFamily one(cfg);
    CHECK_THROWS_AS(robustness_probe(make_agent(one.obs_dim(), 1), one, envgen::Split::train, 5,
                                     5, rng),
                    std::invalid_argument);
    CHECK_FALSE(probe_family_config(RunConfig{}.env).semantic_variation);
  }
}

TEST_CASE("plots") {
  TempDir dir("plots");
  SUBCASE("an empty CSV gives axes only") {
    const auto files = emit_plots({{"empty", parse_metrics("")}}, dir / "empty");
    CHECK(files.size() == 3);
    for (const std::string& f : files) {
      const std::string svg = slurp(f);
      CHECK(svg.find("<svg") != std::string::npos);
      CHECK(svg.find("<line") != std::string::npos);
      CHECK(svg.find("<polyline") == std::string::npos);
      CHECK(svg.find("<circle") == std::string::npos);
    }
  }
  SUBCASE("a single row is a single point") {
    MetricRow r;
    r.step = 100;
    r.mean_return = 2.0;
    const std::string svg = line_chart_svg("t", "x", "y", {{"one", {{100.0, 2.0}}}});
    CHECK(svg.find("<circle") != std::string::npos);
    CHECK(svg.find("<polyline") == std::string::npos);
    const auto files = emit_plots({{"one", {r}}}, dir / "single");
    CHECK(slurp(files[0]).find("<circle") != std::string::npos);
  }
  SUBCASE("the golden fixture renders byte for byte") {
    const auto rows = read_metrics(std::string(ADVP_FIXTURE_DIR) + "/metrics_small.csv");
    const auto files = emit_plots({{"fixture", rows}}, dir / "golden");
    for (const std::string& f : files) {
      CAPTURE(f);
      const std::string name = fs::path(f).filename().string();
      CHECK(slurp(f) == slurp(std::string(ADVP_FIXTURE_DIR) + "/golden_" + name));
    }
    CHECK(emit_plots({{"fixture", rows}}, dir / "again").size() == files.size());
    CHECK(slurp(dir / "again/returns.svg") == slurp(dir / "golden/returns.svg"));
  }
}

TEST_CASE("verification suites") {
  const GradcheckSuiteResult g = run_gradcheck_suite(10, 5);
  CHECK(g.graphs == 10);
  CHECK(g.max_relative_error < 1e-4);
  const TheorySuiteResult t = run_theory_suite(12, 3, 5, 6);
  CHECK(t.perf_diff_max_error < 1e-9);
  CHECK(t.rho_mass_max_error < 1e-9);
  CHECK(t.theorem1_min_slack >= -1e-9);
  CHECK(t.theorem4_min_slack >= -1e-9);
  CHECK(t.cpi_monotone == t.cpi_families);
  const std::string csv = bound_reports_csv(t);
  CHECK(csv.find("theorem4") != std::string::npos);
}
