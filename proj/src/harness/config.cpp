#include "advp/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "advp/harness/text.hpp"

namespace advp::harness {
namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define SIZE_KEY(key, field)                                                                 \
  Key {                                                                                      \
    key, [](const RunConfig& c) { return std::to_string(c.field); },                         \
        [](RunConfig& c, const std::string& v) { c.field = parse_size(key, v); }             \
  }
#define U64_KEY(key, field)                                                                  \
  Key {                                                                                      \
    key, [](const RunConfig& c) { return std::to_string(c.field); },                         \
        [](RunConfig& c, const std::string& v) { c.field = parse_u64(key, v); }              \
  }
#define DOUBLE_KEY(key, field)                                                               \
  Key {                                                                                      \
    key, [](const RunConfig& c) { return format_double(c.field); },                          \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(key, v); }           \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"experiment.name", [](const RunConfig& c) { return c.name; },
       [](RunConfig& c, const std::string& v) { c.name = v; }},
      {"experiment.mode",
       [](const RunConfig& c) {
         return std::string(c.mode == Mode::baseline ? "baseline" : "adversarial");
       },
       [](RunConfig& c, const std::string& v) {
         if (v == "baseline")
           c.mode = Mode::baseline;
         else if (v == "adversarial")
           c.mode = Mode::adversarial;
         else
           throw ConfigError("experiment.mode: expected baseline or adversarial, got '" + v + "'");
       }},
      U64_KEY("seed.global", seed_global),
      U64_KEY("seed.agent1", seed_agent1),
      U64_KEY("seed.agent2", seed_agent2),
      SIZE_KEY("env.height", env.grid.height),
      SIZE_KEY("env.width", env.grid.width),
      DOUBLE_KEY("env.obstacle_density", env.grid.obstacle_density),
      SIZE_KEY("env.hazards", env.grid.hazards),
      SIZE_KEY("env.universe_size", env.universe_size),
      SIZE_KEY("env.train_count", env.train_count),
      SIZE_KEY("env.noise_channels", env.render.noise_channels),
      U64_KEY("env.palette_seed", env.render.palette_seed),
      {"env.semantic_variation",
       [](const RunConfig& c) { return std::string(c.env.semantic_variation ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) {
         c.env.semantic_variation = parse_bool("env.semantic_variation", v);
       }},
      U64_KEY("env.semantic_seed", env.semantic_seed),
      SIZE_KEY("env.horizon", env.rules.horizon),
      DOUBLE_KEY("env.goal_reward", env.rules.goal_reward),
      DOUBLE_KEY("env.step_reward", env.rules.step_reward),
      DOUBLE_KEY("env.hazard_reward", env.rules.hazard_reward),
      DOUBLE_KEY("ppo.gamma", ppo.gamma),
      DOUBLE_KEY("ppo.lambda", ppo.lambda),
      DOUBLE_KEY("ppo.clip_eps", ppo.clip_eps),
      DOUBLE_KEY("ppo.value_coef", ppo.value_coef),
      DOUBLE_KEY("ppo.entropy_coef", ppo.entropy_coef),
      DOUBLE_KEY("ppo.learning_rate", ppo.learning_rate),
      SIZE_KEY("ppo.update_epochs", ppo.update_epochs),
      SIZE_KEY("ppo.minibatches", ppo.minibatches),
      SIZE_KEY("ppo.horizon", ppo.horizon),
      SIZE_KEY("ppo.n_envs", ppo.n_envs),
      DOUBLE_KEY("adv.alpha", alpha),
      {"adv.first_agent", [](const RunConfig& c) { return std::to_string(c.first_agent); },
       [](RunConfig& c, const std::string& v) {
         c.first_agent = static_cast<int>(parse_u64("adv.first_agent", v));
       }},
      {"net.encoder_hidden", [](const RunConfig& c) { return join_sizes(c.encoder_hidden); },
       [](RunConfig& c, const std::string& v) {
         c.encoder_hidden = parse_sizes("net.encoder_hidden", v);
       }},
      SIZE_KEY("net.head_hidden", head_hidden),
      SIZE_KEY("train.total_steps", total_steps),
      SIZE_KEY("train.eval_interval", eval_interval),
      SIZE_KEY("train.eval_episodes", eval_episodes),
      SIZE_KEY("train.checkpoint_interval", checkpoint_interval),
      SIZE_KEY("train.probe_states", probe_states),
      SIZE_KEY("train.probe_pairs", probe_pairs),
      {"train.checkpoint_version",
       [](const RunConfig& c) { return std::to_string(c.checkpoint_version); },
       [](RunConfig& c, const std::string& v) {
         c.checkpoint_version = static_cast<std::uint32_t>(parse_u64("train.checkpoint_version", v));
       }},
      {"output.dir", [](const RunConfig& c) { return c.output_dir; },
       [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

#undef SIZE_KEY
#undef U64_KEY
#undef DOUBLE_KEY

const Key* find_key(const std::string& name) {
  for (const Key& k : keys())
    if (name == k.name) return &k;
  return nullptr;
}

}  // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

std::uint64_t RunConfig::agent_seed(int id) const {
  if (id == 1) return seed_agent1 ? seed_agent1 : hash_seed(seed_global, 1);
  if (id == 2) return seed_agent2 ? seed_agent2 : hash_seed(seed_global, 2);
  throw std::invalid_argument("agent id must be 1 or 2");
}

double RunConfig::effective_alpha() const { return mode == Mode::baseline ? 0.0 : alpha; }

nets::NetConfig RunConfig::net_config() const {
  nets::NetConfig net;
  net.obs_dim = envgen::observation_dim(env.grid.height, env.grid.width, env.render.noise_channels);
  net.n_actions = envgen::kNumActions;
  net.encoder_hidden = encoder_hidden;
  net.head_hidden = head_hidden;
  return net;
}

adv::DualConfig RunConfig::dual_config() const {
  adv::DualConfig d;
  d.adv.ppo = ppo;
  d.adv.alpha = effective_alpha();
  d.seed_agent1 = agent_seed(1);
  d.seed_agent2 = agent_seed(2);
  d.first_agent = first_agent;
  d.total_steps = total_steps;
  return d;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (name.empty()) fail("experiment.name must not be empty");
  if (env.grid.height < 2 || env.grid.width < 2) fail("env.height and env.width must be >= 2");
  if (!(env.grid.obstacle_density >= 0.0 && env.grid.obstacle_density < 1.0))
    fail("env.obstacle_density must lie in [0, 1)");
  const std::size_t cells = env.grid.height * env.grid.width;
  if (static_cast<std::size_t>(env.grid.obstacle_density * static_cast<double>(cells)) +
          env.grid.hazards + 2 >
      cells)
    fail("env: obstacles and hazards do not fit on the grid");
  if (env.universe_size == 0) fail("env.universe_size must be positive");
  if (env.train_count == 0 || env.train_count > env.universe_size)
    fail("env.train_count must lie in [1, env.universe_size]");
  if (env.rules.horizon == 0) fail("env.horizon must be positive");
  for (double r : {env.rules.goal_reward, env.rules.step_reward, env.rules.hazard_reward})
    if (!std::isfinite(r)) fail("env rewards must be finite");
  try {
    ppo.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (!std::isfinite(alpha) || alpha < 0.0) fail("adv.alpha must be finite and non-negative");
  if (first_agent != 1 && first_agent != 2) fail("adv.first_agent must be 1 or 2");
  for (std::size_t h : encoder_hidden)
    if (h == 0) fail("net.encoder_hidden entries must be positive");
  if (head_hidden == 0) fail("net.head_hidden must be positive");
  if (total_steps == 0) fail("train.total_steps must be positive");
  if (eval_interval == 0) fail("train.eval_interval must be positive");
  if (eval_episodes == 0) fail("train.eval_episodes must be positive");
  if (checkpoint_version != 1 && checkpoint_version != 2)
    fail("train.checkpoint_version must be 1 or 2");
  if (output_dir.empty()) fail("output.dir must not be empty");
}

std::vector<std::pair<std::string, std::string>> to_entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Key& k : keys()) out.emplace_back(k.name, k.get(config));
  return out;
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : to_entries(config)) out += k + " = " + v + "\n";
  return out;
}

void set_key(RunConfig& config, const std::string& key, const std::string& value) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  k->set(config, value);
}

bool is_known_key(const std::string& key) { return find_key(key) != nullptr; }

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.emplace_back(k.name);
  return out;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    try {
      set_key(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::uint64_t config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : to_entries(config)) {
    if (k == "train.total_steps" || k == "output.dir") continue;
    for (char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void apply_environment(RunConfig& config) {
  if (const char* dir = std::getenv("ADVP_OUTPUT_DIR"); dir && *dir) config.output_dir = dir;
}

}  // namespace advp::harness
