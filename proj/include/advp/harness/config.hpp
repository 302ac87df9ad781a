#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "advp/advdual/adversarial.hpp"
#include "advp/envgen/gridworld.hpp"
#include "advp/nets/agent.hpp"
#include "advp/rlcore/ppo.hpp"

namespace advp::harness {

/// Raised for malformed or out-of-range configuration; maps to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { baseline, adversarial };

struct RunConfig {
  std::string name = "run";
  Mode mode = Mode::adversarial;

  std::uint64_t seed_global = 1;
  std::uint64_t seed_agent1 = 0;  // 0: derived from seed_global
  std::uint64_t seed_agent2 = 0;

  envgen::GridFamilyConfig env;
  rl::PpoConfig ppo;
  double alpha = 1.0;
  int first_agent = 1;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::size_t head_hidden = 64;

  std::size_t total_steps = 2'000'000;
  std::size_t eval_interval = 50'000;
  std::size_t eval_episodes = 200;
  std::size_t checkpoint_interval = 0;  // 0: final checkpoint only
  std::size_t probe_states = 50;
  std::size_t probe_pairs = 10;
  std::uint32_t checkpoint_version = 2;

  std::string output_dir = "runs/run";

  static RunConfig defaults();

  std::uint64_t agent_seed(int id) const;
  /// alpha actually used for training (0 in baseline mode).
  double effective_alpha() const;
  nets::NetConfig net_config() const;
  adv::DualConfig dual_config() const;

  /// Throws ConfigError naming the first invalid key.
  void validate() const;
};

/// Every recognised key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> to_entries(const RunConfig& config);
std::string to_text(const RunConfig& config);

/// Sets one dotted key; rejects unknown keys and unparsable values.
void set_key(RunConfig& config, const std::string& key, const std::string& value);
bool is_known_key(const std::string& key);
std::vector<std::string> known_keys();

/// Parses `key = value` lines; '#' starts a comment. Later lines win.
RunConfig parse_config(const std::string& text, RunConfig base = RunConfig::defaults());
RunConfig load_config(const std::string& path);

/// FNV-1a over the canonical text minus keys that may change across a resume
/// (train.total_steps, output.dir).
std::uint64_t config_hash(const RunConfig& config);

/// ADVP_OUTPUT_DIR, when set, replaces output.dir.
void apply_environment(RunConfig& config);

}  // namespace advp::harness
