#include "advp/envgen/gridworld.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace advp::envgen {

Layout parse_layout(const std::vector<std::string>& rows) {
  if (rows.empty() || rows[0].empty()) throw std::invalid_argument("parse_layout: empty layout");
  Layout layout;
  layout.height = rows.size();
  layout.width = rows[0].size();
  layout.cells.assign(layout.size(), Cell::empty);
  bool has_start = false, has_goal = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != layout.width) throw std::invalid_argument("parse_layout: ragged rows");
    for (std::size_t c = 0; c < layout.width; ++c) {
      const std::size_t cell = r * layout.width + c;
      switch (rows[r][c]) {
        case '.':
          break;
        case '#':
          layout.cells[cell] = Cell::obstacle;
          break;
        case 'R':
          layout.cells[cell] = Cell::hazard;
          break;
        case 'G':
          if (has_goal) throw std::invalid_argument("parse_layout: more than one goal");
          layout.cells[cell] = Cell::goal;
          layout.goal = cell;
          has_goal = true;
          break;
        case 'S':
          if (has_start) throw std::invalid_argument("parse_layout: more than one start");
          layout.start = cell;
          has_start = true;
          break;
        default:
          throw std::invalid_argument(std::string("parse_layout: unknown cell '") + rows[r][c] +
                                      "'");
      }
    }
  }
  if (!has_start || !has_goal) throw std::invalid_argument("parse_layout: need S and G");
  return layout;
}

std::size_t move_target(const Layout& layout, std::size_t cell, std::size_t action) {
  const std::size_t r = cell / layout.width, c = cell % layout.width;
  std::size_t target = cell;
  switch (action) {
    case 0:
      if (r > 0) target = cell - layout.width;
      break;
    case 1:
      if (r + 1 < layout.height) target = cell + layout.width;
      break;
    case 2:
      if (c > 0) target = cell - 1;
      break;
    case 3:
      if (c + 1 < layout.width) target = cell + 1;
      break;
    default:
      throw std::invalid_argument("action " + std::to_string(action) + " out of range [0, 4)");
  }
  return layout.cells[target] == Cell::obstacle ? cell : target;
}

bool goal_reachable(const Layout& layout) {
  if (layout.cells[layout.start] == Cell::obstacle) return false;
  std::vector<char> seen(layout.size(), 0);
  std::queue<std::size_t> frontier;
  frontier.push(layout.start);
  seen[layout.start] = 1;
  while (!frontier.empty()) {
    const std::size_t cell = frontier.front();
    frontier.pop();
    if (cell == layout.goal) return true;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const std::size_t next = move_target(layout, cell, a);
      if (!seen[next]) {
        seen[next] = 1;
        frontier.push(next);
      }
    }
  }
  return false;
}

Layout generate_layout(std::uint64_t seed, const GridSpec& spec) {
  const std::size_t n = spec.height * spec.width;
  const std::size_t obstacles =
      static_cast<std::size_t>(spec.obstacle_density * static_cast<double>(n));
  if (spec.height == 0 || spec.width == 0 || obstacles + spec.hazards + 2 > n)
    throw std::invalid_argument("generate_layout: grid too small for its contents");
  Rng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    Layout layout;
    layout.height = spec.height;
    layout.width = spec.width;
    layout.cells.assign(n, Cell::empty);
    layout.goal = order[0];
    layout.start = order[1];
    layout.cells[layout.goal] = Cell::goal;
    std::size_t k = 2;
    for (std::size_t h = 0; h < spec.hazards; ++h) layout.cells[order[k++]] = Cell::hazard;
    for (std::size_t o = 0; o < obstacles; ++o) layout.cells[order[k++]] = Cell::obstacle;
    if (goal_reachable(layout)) return layout;
  }
  throw std::runtime_error("generate_layout: no reachable layout after 1000 attempts");
}

std::size_t observation_dim(std::size_t height, std::size_t width, std::size_t noise_channels) {
  return (kSemanticChannels + noise_channels) * height * width;
}

double noise_value(std::size_t level, std::size_t channel, const RenderSpec& spec) {
  return unit_interval(hash_seed(spec.palette_seed, level, channel));
}

bool is_noise_index(std::size_t index, std::size_t height, std::size_t width) {
  return index >= kSemanticChannels * height * width;
}

void render_into(const SemanticState& u, std::size_t level, const RenderSpec& spec,
                 std::span<double> out) {
  const Layout& layout = *u.layout;
  const std::size_t plane = layout.size();
  if (out.size() != observation_dim(layout.height, layout.width, spec.noise_channels))
    throw ShapeError("render: output buffer has " + std::to_string(out.size()) +
                     " entries, expected " +
                     std::to_string(observation_dim(layout.height, layout.width,
                                                    spec.noise_channels)));
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(kSemanticChannels * plane),
            0.0);
  out[u.agent] = 1.0;
  for (std::size_t cell = 0; cell < plane; ++cell) {
    switch (layout.cells[cell]) {
      case Cell::goal:
        out[plane + cell] = 1.0;
        break;
      case Cell::obstacle:
        out[2 * plane + cell] = 1.0;
        break;
      case Cell::hazard:
        out[3 * plane + cell] = 1.0;
        break;
      case Cell::empty:
        break;
    }
  }
  for (std::size_t ch = 0; ch < spec.noise_channels; ++ch) {
    const double v = noise_value(level, ch, spec);
    auto first = out.begin() + static_cast<std::ptrdiff_t>((kSemanticChannels + ch) * plane);
    std::fill(first, first + static_cast<std::ptrdiff_t>(plane), v);
  }
}

NArray render(const SemanticState& u, std::size_t level, const RenderSpec& spec) {
  NArray obs(Shape{observation_dim(u.layout->height, u.layout->width, spec.noise_channels)});
  render_into(u, level, spec, obs.values());
  return obs;
}

GridEnv::GridEnv(std::shared_ptr<const Layout> layout, std::size_t level, RenderSpec render,
                 GridRules rules)
    : level_(level), render_(render), rules_(rules) {
  if (!layout) throw std::invalid_argument("GridEnv: null layout");
  if (rules.horizon == 0) throw std::invalid_argument("GridEnv: horizon must be positive");
  state_.layout = std::move(layout);
  reset();
}

void GridEnv::reset() {
  state_.agent = state_.layout->start;
  state_.t = 0;
  done_ = false;
}

StepResult GridEnv::step(std::size_t action) {
  if (done_) throw std::logic_error("GridEnv::step called on a finished episode");
  const Layout& layout = *state_.layout;
  state_.agent = move_target(layout, state_.agent, action);
  ++state_.t;
  StepResult out;
  switch (layout.cells[state_.agent]) {
    case Cell::goal:
      out.reward = rules_.goal_reward;
      out.terminal = true;
      break;
    case Cell::hazard:
      out.reward = rules_.hazard_reward;
      break;
    default:
      out.reward = rules_.step_reward;
      break;
  }
  if (!out.terminal && state_.t >= rules_.horizon) out.truncated = true;
  out.done = out.terminal || out.truncated;
  done_ = out.done;
  return out;
}

void GridEnv::observe(std::span<double> out) const { render_into(state_, level_, render_, out); }

NArray GridEnv::observe() const { return render(state_, level_, render_); }

std::size_t GridEnv::obs_dim() const {
  return observation_dim(state_.layout->height, state_.layout->width, render_.noise_channels);
}

void GridEnv::restore(std::size_t agent, std::size_t t, bool done) {
  const Layout& layout = *state_.layout;
  if (agent >= layout.size() || layout.cells[agent] == Cell::obstacle || t > rules_.horizon)
    throw std::invalid_argument("GridEnv::restore: invalid state");
  state_.agent = agent;
  state_.t = t;
  done_ = done;
}

Layout maze_layout() {
  return parse_layout({
      "S..#...",
      ".#.#.#.",
      ".#RRR#.",
      ".#.#...",
      ".#.#.##",
      "...#...",
      "##...#G",
  });
}

GridEnv make_maze(MazeVariant variant, std::size_t noise_channels) {
  GridRules rules;
  rules.hazard_reward = variant == MazeVariant::penalized ? -1.0 : 0.0;
  RenderSpec render;
  render.noise_channels = noise_channels;
  return GridEnv(std::make_shared<const Layout>(maze_layout()), 0, render, rules);
}

GridFamily::GridFamily(GridFamilyConfig config)
    : config_(std::move(config)),
      levels_(LevelFamily::first_n(config_.universe_size, config_.train_count)) {}

std::size_t GridFamily::obs_dim() const {
  return observation_dim(config_.grid.height, config_.grid.width, config_.render.noise_channels);
}

std::uint64_t GridFamily::layout_seed(std::size_t level) const {
  return config_.semantic_variation ? hash_seed(config_.semantic_seed, level)
                                    : config_.semantic_seed;
}

std::shared_ptr<const Layout> GridFamily::layout(std::size_t level) const {
  if (level >= config_.universe_size)
    throw std::out_of_range("GridFamily: level " + std::to_string(level) + " outside universe");
  return std::make_shared<const Layout>(generate_layout(layout_seed(level), config_.grid));
}

GridEnv GridFamily::make_env(std::size_t level) const {
  return GridEnv(layout(level), level, config_.render, config_.rules);
}

EnvPool::EnvPool(const GridFamily& family, Split split, std::size_t n_envs, std::uint64_t seed)
    : family_(&family), split_(split) {
  if (n_envs == 0) throw std::invalid_argument("EnvPool: need at least one env");
  rngs_.reserve(n_envs);
  envs_.reserve(n_envs);
  for (std::size_t i = 0; i < n_envs; ++i) {
    rngs_.emplace_back(hash_seed(seed, i));
    envs_.push_back(family.make_env(sample_level(family.levels(), split_, rngs_[i])));
  }
  running_return_.assign(n_envs, 0.0);
}

void EnvPool::reset_env(std::size_t i) {
  envs_[i] = family_->make_env(sample_level(family_->levels(), split_, rngs_[i]));
  running_return_[i] = 0.0;
}

NArray EnvPool::observe() const {
  const std::size_t d = obs_dim();
  NArray obs(Shape{envs_.size(), d});
  for (std::size_t i = 0; i < envs_.size(); ++i)
    envs_[i].observe(obs.values().subspan(i * d, d));
  return obs;
}

EnvPool::Transition EnvPool::step(std::size_t i, std::size_t action) {
  GridEnv& env = envs_.at(i);
  Transition tr;
  tr.level = env.level();
  tr.semantic_id = env.state().agent;
  tr.result = env.step(action);
  running_return_[i] += tr.result.reward;
  if (tr.result.done) {
    tr.episode_return = running_return_[i];
    finished_.push_back(running_return_[i]);
    if (tr.result.truncated) {
      tr.final_obs.resize(env.obs_dim());
      env.observe(tr.final_obs);
    }
    reset_env(i);
  }
  return tr;
}

std::vector<double> EnvPool::take_finished_returns() {
  std::vector<double> out;
  out.swap(finished_);
  return out;
}

EnvPool::Snapshot EnvPool::snapshot() const {
  Snapshot s;
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    s.level.push_back(envs_[i].level());
    s.agent.push_back(envs_[i].state().agent);
    s.t.push_back(envs_[i].state().t);
    s.rng.push_back(save_rng(rngs_[i]));
  }
  s.running_return = running_return_;
  return s;
}

void EnvPool::restore(const Snapshot& s) {
  const std::size_t n = envs_.size();
  if (s.level.size() != n || s.agent.size() != n || s.t.size() != n || s.rng.size() != n ||
      s.running_return.size() != n)
    throw std::invalid_argument("EnvPool::restore: snapshot size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    envs_[i] = family_->make_env(s.level[i]);
    envs_[i].restore(s.agent[i], s.t[i], false);
    rngs_[i] = load_rng(s.rng[i]);
  }
  running_return_ = s.running_return;
  finished_.clear();
}

}  // namespace advp::envgen
