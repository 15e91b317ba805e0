#pragma once

// Experiment configuration.
//
// Files are YAML mappings; nested mappings are flattened into dotted keys
// ("reward.beta"). The same dotted keys are accepted as command-line
// overrides. Loading proceeds as: read `task`, apply that task's defaults,
// apply every file key, apply overrides, validate. Unknown keys and values
// out of range are rejected with a ConfigError naming the key.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "masd/envs.hpp"
#include "masd/skills.hpp"

namespace masd {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct SkillConfig {
  SkillKind kind = SkillKind::kDiscrete;
  std::size_t k_max = 30;
  std::size_t initial_k = 3;
  std::size_t dim = 2;
};

struct RewardConfig {
  double beta = 0.5;
  Aggregation aggregation = Aggregation::kMean;
  DiscLoss loss = DiscLoss::kCrossEntropy;
  bool recompute_at_train = false;
};

struct CurriculumConfig {
  bool enabled = true;
  double threshold = -0.18;
  std::size_t window = 10;
};

struct TrainConfig {
  std::size_t episodes = 10000;
  double gamma = 0.95;
  double tau = 0.01;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double disc_lr = 3e-4;
  std::size_t batch_size = 256;
  std::size_t disc_batch_size = 256;
  std::size_t replay_capacity = 100000;
  std::size_t disc_capacity = 100000;
  std::size_t warmup = 1000;
  std::size_t updates_per_episode = 4;
  std::size_t disc_updates_per_round = 1;
  double noise_start = 0.3;
  double noise_end = 0.05;
  std::size_t noise_decay_episodes = 5000;
  std::size_t hidden = 64;
  std::size_t disc_hidden = 64;
  double grad_clip = 0.5;
  double extrinsic_coef = 0.0;
  std::size_t eval_interval = 10;
  std::size_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
};

enum class XorPolicyKind { kRelaxed, kTabular };

struct XorConfig {
  XorPolicyKind policy = XorPolicyKind::kRelaxed;
  bool joint_observation = true;
  double temperature_start = 2.0;
  double temperature_end = 1.0;
  double tabular_lr = 0.5;
};

struct EnvConfig {
  std::size_t episode_length = 25;
  std::size_t num_agents = 3;
  double hit_reward = 10.0;
  double aux_coef = 0.1;
  bool include_auxiliary = true;
  bool shared_hit_reward = true;
};

struct EvalConfig {
  std::size_t perturbations = 100;
  std::uint64_t init_seed = 20200101;
};

struct FinetuneConfig {
  std::string checkpoint;
  std::size_t episodes = 2000;
  std::size_t selection_episodes = 5;
  std::size_t final_window = 100;
  bool load_critics = false;
};

struct ExperimentConfig {
  Task task = Task::kSpread;
  SkillConfig skills;
  RewardConfig reward;
  CurriculumConfig curriculum;
  TrainConfig train;
  XorConfig xor_game;
  EnvConfig env;
  EvalConfig eval;
  FinetuneConfig finetune;
  std::string output_dir = "masd_out";

  /// Defaults for `task`, as used when a file names only the task.
  static ExperimentConfig defaults_for(Task task);

  /// Throws ConfigError naming the first offending key.
  void validate() const;

  SkillSpace skill_space() const;
  PseudoRewardConfig pseudo_reward() const;
  ParticleConfig particle() const;

  /// Sets one dotted key from its textual value.
  void set(const std::string& key, const std::string& value);
  /// All keys with their current textual values, in registry order.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parses "key=value".
std::pair<std::string, std::string> parse_override(const std::string& text);

ExperimentConfig load_config(const std::string& path, const Overrides& overrides = {});
ExperimentConfig config_from_string(const std::string& yaml_text, const Overrides& overrides = {});

/// Resolved configuration as YAML text; reloading it yields the same config.
std::string dump_config(const ExperimentConfig& config);

}  // namespace masd
