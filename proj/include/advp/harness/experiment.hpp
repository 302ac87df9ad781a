#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "advp/advdual/adversarial.hpp"
#include "advp/envgen/gridworld.hpp"
#include "advp/harness/checkpoint.hpp"
#include "advp/harness/config.hpp"
#include "advp/harness/metrics.hpp"

namespace advp::harness {

struct EvalSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over episodes
  std::size_t episodes = 0;
};

/// Greedy (lowest-index argmax) episodes on levels drawn from `split` with
/// `rng`, run in batches. Returns are discounted by `discount` per step.
/// Rejects n_episodes == 0.
EvalSummary evaluate_policy(const nets::Agent& agent, const envgen::GridFamily& family,
                            envgen::Split split, std::size_t n_episodes, Rng& rng,
                            double discount = 1.0);

struct ProbeResult {
  double mean = 0.0;
  double max = 0.0;
  std::size_t triples = 0;
};

/// Mean and max of KL(pi(.|render(u, m)) || pi(.|render(u, m'))) over
/// n_states semantic states u, each paired with n_pairs level pairs m != m'
/// drawn from `split`. u is a random non-obstacle, non-goal agent cell on the
/// family's fixed layout. Rejects families whose layout varies with m, since
/// u could then not be held fixed across levels.
ProbeResult robustness_probe(const nets::Agent& agent, const envgen::GridFamily& family,
                             envgen::Split split, std::size_t n_states, std::size_t n_pairs,
                             Rng& rng);

/// Bookkeeping that lives outside the trainer but must survive a resume.
struct Progress {
  std::size_t next_eval = 0;
  bool eval_scheduled = false;  // whether the eval at the current step was scheduled
  std::array<adv::AdvLossReport, 2> last_loss{};
};

/// The run's family with layout variation switched off: same rendering,
/// rules and level split, one fixed layout.
envgen::GridFamilyConfig probe_family_config(const envgen::GridFamilyConfig& env);

/// Everything a run needs in memory. Not movable: the trainer's env pools
/// point into `family`.
class Session {
 public:
  explicit Session(RunConfig config);
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  RunConfig config;
  envgen::GridFamily family;
  envgen::GridFamily probe_family;
  adv::DualTrainer trainer;
  Progress progress;

  Checkpoint checkpoint() const;
  /// Rejects a checkpoint whose config hash differs from this session's.
  void restore(const Checkpoint& ckpt);
  /// Parameters only (evaluation of a saved run).
  void restore_parameters(const Checkpoint& ckpt);
};

/// Rebuilds the session stored in a checkpoint from its embedded config.
std::unique_ptr<Session> open_checkpoint(const Checkpoint& ckpt, bool full_state = false);

struct TrainOptions {
  std::string resume;  // checkpoint path; empty for a fresh run
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  std::string metrics_path;
  std::string checkpoint_path;
  std::size_t steps = 0;
  std::vector<MetricRow> rows;  // rows written by this invocation
};

/// Trains to total_steps under output_dir: metrics.csv, config.txt and
/// checkpoints/. Evaluates both agents on both splits whenever the step count
/// crosses a multiple of eval_interval and once at the end; the final
/// checkpoint is always written. A non-finite loss writes
/// checkpoints/nonfinite.advp and rethrows.
TrainResult run_train(const RunConfig& config, const TrainOptions& options = {});

/// Per-agent evaluation of a saved run.
std::array<EvalSummary, 2> run_eval(const std::string& checkpoint_path, envgen::Split split,
                                    std::size_t n_episodes, Rng& rng, double discount = 1.0);
std::array<ProbeResult, 2> run_probe(const std::string& checkpoint_path, envgen::Split split,
                                     std::size_t n_states, std::size_t n_pairs, Rng& rng);

/// Seeds of the evaluation and probe streams for one metric row.
std::uint64_t eval_seed(std::uint64_t agent_seed, std::size_t step, envgen::Split split);
std::uint64_t probe_seed(std::uint64_t agent_seed, std::size_t step, envgen::Split split);

std::string checkpoint_path(const std::string& output_dir, std::size_t step);
std::string final_checkpoint_path(const std::string& output_dir);

}  // namespace advp::harness
