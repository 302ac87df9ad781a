#pragma once

// Procedural gridworld whose observations separate task semantics from
// level-specific rendering: obs = render(u, m). Semantic channels are one-hot
// maps of agent, goal, obstacles and hazards and depend on u only; the noise
// channels hold per-level constants and depend on m only.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "advp/autodiff/narray.hpp"
#include "advp/common/random.hpp"
#include "advp/envgen/level_family.hpp"

namespace advp::envgen {

enum class Cell : std::uint8_t { empty, obstacle, goal, hazard };

inline constexpr std::size_t kSemanticChannels = 4;  // agent, goal, obstacle, hazard
inline constexpr std::size_t kNumActions = 4;        // up, down, left, right

struct Layout {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Cell> cells;
  std::size_t start = 0;
  std::size_t goal = 0;

  std::size_t size() const { return height * width; }
  Cell at(std::size_t cell) const { return cells[cell]; }
};

/// Parses rows of '.', '#', 'G', 'R' (hazard) and 'S' (start, empty cell).
Layout parse_layout(const std::vector<std::string>& rows);

/// True when the goal is reachable from the start avoiding obstacles.
bool goal_reachable(const Layout& layout);

struct GridSpec {
  std::size_t height = 7;
  std::size_t width = 7;
  double obstacle_density = 0.1;
  std::size_t hazards = 1;
};

/// Deterministic in (seed, spec); retries until the goal is reachable.
Layout generate_layout(std::uint64_t seed, const GridSpec& spec);

/// The semantic state u.
struct SemanticState {
  std::shared_ptr<const Layout> layout;
  std::size_t agent = 0;
  std::size_t t = 0;
};

struct RenderSpec {
  std::size_t noise_channels = 3;
  std::uint64_t palette_seed = 0x5eed0fa11e77eULL;
};

std::size_t observation_dim(std::size_t height, std::size_t width, std::size_t noise_channels);

/// Constant value in [0, 1) of noise channel `channel` for level m.
double noise_value(std::size_t level, std::size_t channel, const RenderSpec& spec);

/// Channel-major (C, H, W) flattened observation.
void render_into(const SemanticState& u, std::size_t level, const RenderSpec& spec,
                 std::span<double> out);
NArray render(const SemanticState& u, std::size_t level, const RenderSpec& spec);

/// True for indices that belong to the noise channels of an observation.
bool is_noise_index(std::size_t index, std::size_t height, std::size_t width);

struct GridRules {
  double goal_reward = 10.0;
  double step_reward = -0.01;
  double hazard_reward = -1.0;
  std::size_t horizon = 64;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  bool terminal = false;   // goal reached
  bool truncated = false;  // horizon cap hit without reaching the goal
};

class GridEnv {
 public:
  GridEnv(std::shared_ptr<const Layout> layout, std::size_t level, RenderSpec render,
          GridRules rules);

  /// Agent back to the start cell, t = 0.
  void reset();
  /// Moving into an obstacle or off the grid leaves the agent in place. The
  /// goal pays goal_reward and terminates; landing on a hazard pays
  /// hazard_reward; anything else pays step_reward. Throws after done.
  StepResult step(std::size_t action);

  void observe(std::span<double> out) const;
  NArray observe() const;

  bool done() const { return done_; }
  std::size_t level() const { return level_; }
  const SemanticState& state() const { return state_; }
  const GridRules& rules() const { return rules_; }
  const RenderSpec& render_spec() const { return render_; }
  std::size_t obs_dim() const;

  /// Restores a mid-episode state (checkpoint resume).
  void restore(std::size_t agent, std::size_t t, bool done);

 private:
  SemanticState state_;
  std::size_t level_;
  RenderSpec render_;
  GridRules rules_;
  bool done_ = false;
};

/// Cell reached from `cell` by `action` under the no-op-into-walls rule.
std::size_t move_target(const Layout& layout, std::size_t cell, std::size_t action);

enum class MazeVariant { penalized, neutral };

/// The fixed maze with a red zone: -1 per red-zone step (penalized) or 0
/// (neutral). Both variants share layout and goal reward.
GridEnv make_maze(MazeVariant variant, std::size_t noise_channels = 0);
Layout maze_layout();

/// Levels of a procedural family: layout and noise both derive from m.
struct GridFamilyConfig {
  GridSpec grid;
  RenderSpec render;
  GridRules rules;
  bool semantic_variation = true;
  std::uint64_t semantic_seed = 0x1a7011ULL;
  std::size_t universe_size = 10000;
  std::size_t train_count = 500;
};

class GridFamily {
 public:
  explicit GridFamily(GridFamilyConfig config);

  const GridFamilyConfig& config() const { return config_; }
  const LevelFamily& levels() const { return levels_; }
  std::size_t obs_dim() const;

  std::uint64_t layout_seed(std::size_t level) const;
  std::shared_ptr<const Layout> layout(std::size_t level) const;
  GridEnv make_env(std::size_t level) const;

 private:
  GridFamilyConfig config_;
  LevelFamily levels_;
};

/// Independently owned envs with one RNG stream each (seed mixed with the
/// instance id). Finished episodes restart on a freshly sampled level.
class EnvPool {
 public:
  EnvPool(const GridFamily& family, Split split, std::size_t n_envs, std::uint64_t seed);

  std::size_t size() const { return envs_.size(); }
  std::size_t obs_dim() const { return family_->obs_dim(); }
  const GridEnv& env(std::size_t i) const { return envs_.at(i); }

  /// (n_envs, obs_dim) observation batch, row i = env i.
  NArray observe() const;

  struct Transition {
    StepResult result;
    std::size_t level = 0;
    std::size_t semantic_id = 0;    // agent cell before the step
    double episode_return = 0.0;    // valid when result.done
    std::vector<double> final_obs;  // observation at truncation, before the reset
  };

  /// Steps env i; on done, records the finished episode and resets env i.
  Transition step(std::size_t i, std::size_t action);

  /// Completed-episode returns since the last call.
  std::vector<double> take_finished_returns();

  struct Snapshot {
    std::vector<std::size_t> level, agent, t;
    std::vector<double> running_return;
    std::vector<std::vector<std::uint32_t>> rng;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  void reset_env(std::size_t i);

  const GridFamily* family_;
  Split split_;
  std::vector<GridEnv> envs_;
  std::vector<Rng> rngs_;
  std::vector<double> running_return_;
  std::vector<double> finished_;
};

}  // namespace advp::envgen
