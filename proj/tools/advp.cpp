// advp: train, evaluate and inspect dual-agent adversarial PPO runs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "advp/harness/checkpoint.hpp"
#include "advp/harness/config.hpp"
#include "advp/harness/experiment.hpp"
#include "advp/harness/metrics.hpp"
#include "advp/harness/plots.hpp"
#include "advp/harness/suites.hpp"
#include "advp/harness/text.hpp"

namespace {

using namespace advp;
using namespace advp::harness;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct TrainArgs {
  std::string config_path;
  std::string resume;
  std::map<std::string, std::string> overrides;
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string split = "full";
  std::size_t episodes = 200;
  std::uint64_t seed = 0;
  double discount = 1.0;
};

struct ProbeArgs {
  std::string checkpoint;
  std::string split = "full";
  std::size_t states = 50;
  std::size_t pairs = 10;
  std::uint64_t seed = 0;
};

struct TheoryArgs {
  std::size_t instances = 200;
  std::size_t families = 25;
  std::size_t iters = 20;
  std::uint64_t seed = 0;
  std::string csv;
};

struct PlotArgs {
  std::vector<std::string> csvs;
  std::vector<std::string> labels;
  std::string out = "plots";
};

struct GradArgs {
  std::size_t graphs = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
};

RunConfig resolve_train_config(const TrainArgs& a) {
  RunConfig cfg;
  if (!a.config_path.empty())
    cfg = load_config(a.config_path);
  else if (!a.resume.empty())
    cfg = parse_config(load_checkpoint(a.resume).get_text("meta.config"));
  for (const auto& [k, v] : a.overrides) set_key(cfg, k, v);
  apply_environment(cfg);
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = resolve_train_config(a);
  TrainOptions opts;
  opts.resume = a.resume;
  if (!a.quiet) opts.log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  const TrainResult r = run_train(cfg, opts);
  std::cout << "steps " << r.steps << "\nmetrics " << r.metrics_path << "\ncheckpoint "
            << r.checkpoint_path << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  Rng rng(a.seed);
  const auto res = run_eval(a.checkpoint, envgen::parse_split(a.split), a.episodes, rng,
                            a.discount);
  for (int id : {1, 2})
    std::cout << "agent" << id << " mean " << format_double(res[id - 1].mean) << " std "
              << format_double(res[id - 1].std) << " episodes " << res[id - 1].episodes << "\n";
  return kOk;
}

int cmd_probe(const ProbeArgs& a) {
  Rng rng(a.seed);
  const auto res = run_probe(a.checkpoint, envgen::parse_split(a.split), a.states, a.pairs, rng);
  for (int id : {1, 2})
    std::cout << "agent" << id << " mean_kl " << format_double(res[id - 1].mean) << " max_kl "
              << format_double(res[id - 1].max) << " triples " << res[id - 1].triples << "\n";
  return kOk;
}

int cmd_theory(const TheoryArgs& a) {
  const TheorySuiteResult r = run_theory_suite(a.instances, a.families, a.iters, a.seed);
  if (!a.csv.empty()) {
    std::ofstream out(a.csv, std::ios::binary | std::ios::trunc);
    out << bound_reports_csv(r);
    if (!out) throw std::runtime_error("write failed on '" + a.csv + "'");
  }
  const bool ok = r.perf_diff_max_error < 1e-9 && r.rho_mass_max_error < 1e-9 &&
                  r.train_mass_max_error < 1e-12 && r.theorem1_min_slack >= -1e-9 &&
                  r.theorem4_min_slack >= -1e-9 && r.cpi_monotone == r.cpi_families;
  std::cout << "instances " << r.instances << "\n"
            << "perf_diff_max_error " << format_double(r.perf_diff_max_error) << "\n"
            << "rho_mass_max_error " << format_double(r.rho_mass_max_error) << "\n"
            << "train_mass_max_error " << format_double(r.train_mass_max_error) << "\n"
            << "theorem1_min_slack " << format_double(r.theorem1_min_slack) << "\n"
            << "theorem4_min_slack " << format_double(r.theorem4_min_slack) << "\n"
            << "cpi_monotone " << r.cpi_monotone << "/" << r.cpi_families << "\n"
            << (ok ? "ok" : "FAILED") << "\n";
  return ok ? kOk : kRuntime;
}

int cmd_plot(const PlotArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.csvs.size())
    throw ConfigError("--label must be given once per CSV file");
  std::vector<PlotInput> runs;
  for (std::size_t i = 0; i < a.csvs.size(); ++i) {
    std::string label = a.labels.empty()
                            ? std::filesystem::path(a.csvs[i]).parent_path().filename().string()
                            : a.labels[i];
    if (label.empty()) label = "run" + std::to_string(i + 1);
    try {
      runs.push_back({label, read_metrics(a.csvs[i])});
    } catch (const CsvError& e) {
      throw CsvError(e.line(), a.csvs[i] + ": " + e.what());
    }
  }
  for (const std::string& p : emit_plots(runs, a.out)) std::cout << p << "\n";
  return kOk;
}

int cmd_gradcheck(const GradArgs& a) {
  const GradcheckSuiteResult r = run_gradcheck_suite(a.graphs, a.seed);
  const bool ok = r.max_relative_error < a.tolerance;
  std::cout << "graphs " << r.graphs << "\nmax_relative_error "
            << format_double(r.max_relative_error) << "\nworst " << r.worst << "\n"
            << (ok ? "ok" : "FAILED") << "\n";
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-agent adversarial PPO on procedural gridworlds"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a pair of agents");
  t->add_option("--config", train.config_path, "Config file (key = value lines)");
  t->add_option("--resume", train.resume, "Continue from a checkpoint");
  t->add_flag("--quiet", train.quiet, "No progress output");
  for (const std::string& key : known_keys())
    t->add_option_function<std::string>(
        "--" + key, [&train, key](const std::string& v) { train.overrides[key] = v; },
        "Override " + key)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--split", eval.split, "train or full")->capture_default_str();
  e->add_option("--episodes", eval.episodes)->capture_default_str();
  e->add_option("--seed", eval.seed)->capture_default_str();
  e->add_option("--discount", eval.discount, "Per-step discount of reported returns")
      ->capture_default_str();

  ProbeArgs probe;
  auto* p = app.add_subcommand("probe", "Policy KL across level renderings of fixed states");
  p->add_option("--checkpoint", probe.checkpoint)->required();
  p->add_option("--split", probe.split)->capture_default_str();
  p->add_option("--states", probe.states)->capture_default_str();
  p->add_option("--pairs", probe.pairs)->capture_default_str();
  p->add_option("--seed", probe.seed)->capture_default_str();

  TheoryArgs theory;
  auto* th = app.add_subcommand("theory-check", "Check the tabular bounds on random families");
  th->add_option("--instances", theory.instances)->capture_default_str();
  th->add_option("--families", theory.families)->capture_default_str();
  th->add_option("--iters", theory.iters)->capture_default_str();
  th->add_option("--seed", theory.seed)->capture_default_str();
  th->add_option("--csv", theory.csv, "Write one bound report row per check and instance");

  PlotArgs plot;
  auto* pl = app.add_subcommand("plot", "SVG charts from metrics CSV files");
  pl->add_option("csv", plot.csvs, "metrics.csv files")->required();
  pl->add_option("--label", plot.labels, "Series label per file");
  pl->add_option("--out", plot.out)->capture_default_str();

  GradArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference checks of the autodiff engine");
  g->add_option("--graphs", grad.graphs)->capture_default_str();
  g->add_option("--seed", grad.seed)->capture_default_str();
  g->add_option("--tolerance", grad.tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kValidation;
  }

  try {
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*p) return cmd_probe(probe);
    if (*th) return cmd_theory(theory);
    if (*pl) return cmd_plot(plot);
    if (*g) return cmd_gradcheck(grad);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kValidation;
  } catch (const CsvError& err) {
    std::cerr << "invalid metrics file: " << err.what() << "\n";
    return kValidation;
  } catch (const CheckpointError& err) {
    std::cerr << "checkpoint error: " << err.what() << "\n";
    return kRuntime;
  } catch (const std::invalid_argument& err) {
    std::cerr << "invalid argument: " << err.what() << "\n";
    return kValidation;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
