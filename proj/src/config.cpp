#include "masd/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace masd {
namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(key, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
  if (text == "false" || text == "no" || text == "off" || text == "0") return false;
  throw ConfigError(key, "expected a boolean, got '" + text + "'");
}

template <class E>
E parse_enum(const std::string& key, const std::string& text,
             std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, value] : names) {
    if (text == name) return value;
  }
  std::string allowed;
  for (const auto& [name, value] : names) allowed += std::string(allowed.empty() ? "" : "|") + name;
  throw ConfigError(key, "expected one of " + allowed + ", got '" + text + "'");
}

const std::initializer_list<std::pair<const char*, SkillKind>> kSkillKinds = {
    {"discrete", SkillKind::kDiscrete}, {"continuous", SkillKind::kContinuous}};
const std::initializer_list<std::pair<const char*, Aggregation>> kAggregations = {
    {"mean", Aggregation::kMean}, {"min", Aggregation::kMin}, {"max", Aggregation::kMax}};
const std::initializer_list<std::pair<const char*, DiscLoss>> kLosses = {
    {"ce", DiscLoss::kCrossEntropy}, {"l1", DiscLoss::kL1}, {"l2", DiscLoss::kL2}};
const std::initializer_list<std::pair<const char*, XorPolicyKind>> kXorPolicies = {
    {"relaxed", XorPolicyKind::kRelaxed}, {"tabular", XorPolicyKind::kTabular}};
const std::initializer_list<std::pair<const char*, Task>> kTasks = {
    {"xor", Task::kXor},
    {"spread", Task::kSpread},
    {"rendezvous", Task::kRendezvous},
    {"tag", Task::kTag}};

struct Entry {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class Field>
Entry real(std::string key, Field field) {
  return {key,
          [key, field](ExperimentConfig& c, const std::string& v) { field(c) = parse_double(key, v); },
          [field](const ExperimentConfig& c) {
            return format_double(field(c));
          }};
}

template <class Field>
Entry count(std::string key, Field field) {
  return {key,
          [key, field](ExperimentConfig& c, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(parse_u64(key, v));
          },
          [field](const ExperimentConfig& c) {
            return std::to_string(field(c));
          }};
}

template <class Field>
Entry flag(std::string key, Field field) {
  return {key,
          [key, field](ExperimentConfig& c, const std::string& v) { field(c) = parse_bool(key, v); },
          [field](const ExperimentConfig& c) {
            return std::string(field(c) ? "true" : "false");
          }};
}

template <class E, class Field>
Entry choice(std::string key, Field field, std::initializer_list<std::pair<const char*, E>> names) {
  std::vector<std::pair<const char*, E>> table(names);
  return {key,
          [key, field, table](ExperimentConfig& c, const std::string& v) {
            for (const auto& [name, value] : table) {
              if (v == name) {
                field(c) = value;
                return;
              }
            }
            std::string allowed;
            for (const auto& [name, value] : table) allowed += std::string(allowed.empty() ? "" : "|") + name;
            throw ConfigError(key, "expected one of " + allowed + ", got '" + v + "'");
          },
          [field, table](const ExperimentConfig& c) {
            for (const auto& [name, value] : table) {
              if (value == field(c)) return std::string(name);
            }
            return std::string("?");
          }};
}

#define MASD_FIELD(path) [](auto& c) -> auto& { return c.path; }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      choice("task", MASD_FIELD(task), kTasks),
      {"output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
       [](const ExperimentConfig& c) { return c.output_dir; }},
      choice("skills.kind", MASD_FIELD(skills.kind), kSkillKinds),
      count("skills.k_max", MASD_FIELD(skills.k_max)),
      count("skills.initial_k", MASD_FIELD(skills.initial_k)),
      count("skills.dim", MASD_FIELD(skills.dim)),
      real("reward.beta", MASD_FIELD(reward.beta)),
      choice("reward.aggregation", MASD_FIELD(reward.aggregation), kAggregations),
      choice("reward.loss", MASD_FIELD(reward.loss), kLosses),
      flag("reward.recompute_at_train", MASD_FIELD(reward.recompute_at_train)),
      flag("curriculum.enabled", MASD_FIELD(curriculum.enabled)),
      real("curriculum.threshold", MASD_FIELD(curriculum.threshold)),
      count("curriculum.window", MASD_FIELD(curriculum.window)),
      count("train.episodes", MASD_FIELD(train.episodes)),
      real("train.gamma", MASD_FIELD(train.gamma)),
      real("train.tau", MASD_FIELD(train.tau)),
      real("train.actor_lr", MASD_FIELD(train.actor_lr)),
      real("train.critic_lr", MASD_FIELD(train.critic_lr)),
      real("train.disc_lr", MASD_FIELD(train.disc_lr)),
      count("train.batch_size", MASD_FIELD(train.batch_size)),
      count("train.disc_batch_size", MASD_FIELD(train.disc_batch_size)),
      count("train.replay_capacity", MASD_FIELD(train.replay_capacity)),
      count("train.disc_capacity", MASD_FIELD(train.disc_capacity)),
      count("train.warmup", MASD_FIELD(train.warmup)),
      count("train.updates_per_episode", MASD_FIELD(train.updates_per_episode)),
      count("train.disc_updates_per_round", MASD_FIELD(train.disc_updates_per_round)),
      real("train.noise_start", MASD_FIELD(train.noise_start)),
      real("train.noise_end", MASD_FIELD(train.noise_end)),
      count("train.noise_decay_episodes", MASD_FIELD(train.noise_decay_episodes)),
      count("train.hidden", MASD_FIELD(train.hidden)),
      count("train.disc_hidden", MASD_FIELD(train.disc_hidden)),
      real("train.grad_clip", MASD_FIELD(train.grad_clip)),
      real("train.extrinsic_coef", MASD_FIELD(train.extrinsic_coef)),
      count("train.eval_interval", MASD_FIELD(train.eval_interval)),
      count("train.checkpoint_interval", MASD_FIELD(train.checkpoint_interval)),
      choice("xor.policy", MASD_FIELD(xor_game.policy), kXorPolicies),
      flag("xor.joint_observation", MASD_FIELD(xor_game.joint_observation)),
      real("xor.temperature_start", MASD_FIELD(xor_game.temperature_start)),
      real("xor.temperature_end", MASD_FIELD(xor_game.temperature_end)),
      real("xor.tabular_lr", MASD_FIELD(xor_game.tabular_lr)),
      count("env.episode_length", MASD_FIELD(env.episode_length)),
      count("env.num_agents", MASD_FIELD(env.num_agents)),
      real("env.hit_reward", MASD_FIELD(env.hit_reward)),
      real("env.aux_coef", MASD_FIELD(env.aux_coef)),
      flag("env.include_auxiliary", MASD_FIELD(env.include_auxiliary)),
      flag("env.shared_hit_reward", MASD_FIELD(env.shared_hit_reward)),
      count("eval.perturbations", MASD_FIELD(eval.perturbations)),
      count("eval.init_seed", MASD_FIELD(eval.init_seed)),
      {"finetune.checkpoint",
       [](ExperimentConfig& c, const std::string& v) { c.finetune.checkpoint = v; },
       [](const ExperimentConfig& c) { return c.finetune.checkpoint; }},
      count("finetune.episodes", MASD_FIELD(finetune.episodes)),
      count("finetune.selection_episodes", MASD_FIELD(finetune.selection_episodes)),
      count("finetune.final_window", MASD_FIELD(finetune.final_window)),
      flag("finetune.load_critics", MASD_FIELD(finetune.load_critics)),
  };
  return entries;
}

#undef MASD_FIELD

const Entry& find_entry(const std::string& key) {
  for (const auto& e : registry()) {
    if (e.key == key) return e;
  }
  throw ConfigError(key, "unknown configuration key");
}

void flatten(const YAML::Node& node, const std::string& prefix,
             std::vector<std::pair<std::string, std::string>>& out) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const auto name = kv.first.as<std::string>();
      flatten(kv.second, prefix.empty() ? name : prefix + "." + name, out);
    }
  } else if (node.IsScalar()) {
    out.emplace_back(prefix, node.as<std::string>());
  } else if (node.IsNull()) {
    if (!prefix.empty()) throw ConfigError(prefix, "missing value");
  } else {
    throw ConfigError(prefix, "sequences are not supported");
  }
}

ExperimentConfig build(const std::vector<std::pair<std::string, std::string>>& file_entries,
                       const Overrides& overrides) {
  std::string task_name = "spread";
  for (const auto& [k, v] : file_entries) {
    if (k == "task") task_name = v;
  }
  for (const auto& [k, v] : overrides) {
    if (k == "task") task_name = v;
  }
  const Task task = parse_enum<Task>("task", task_name, kTasks);
  ExperimentConfig config = ExperimentConfig::defaults_for(task);
  for (const auto& [k, v] : file_entries) config.set(k, v);
  for (const auto& [k, v] : overrides) config.set(k, v);
  config.validate();
  return config;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults_for(Task task) {
  ExperimentConfig c;
  c.task = task;
  switch (task) {
    case Task::kXor:
      c.skills = {SkillKind::kDiscrete, 2, 2, 2};
      c.reward.beta = 1.5;
      c.reward.aggregation = Aggregation::kMin;
      c.reward.recompute_at_train = true;
      c.curriculum.enabled = false;
      c.env.num_agents = 2;
      c.env.episode_length = 1;
      c.train.episodes = 12000;
      c.train.batch_size = 64;
      c.train.disc_batch_size = 64;
      c.train.replay_capacity = 1000;
      c.train.disc_capacity = 1000;
      c.train.warmup = 64;
      c.train.updates_per_episode = 2;
      c.train.noise_decay_episodes = 4000;
      c.train.hidden = 32;
      c.train.disc_hidden = 16;
      c.train.actor_lr = 3e-3;
      c.train.critic_lr = 3e-3;
      c.train.disc_lr = 1e-2;
      c.train.disc_updates_per_round = 2;
      c.train.eval_interval = 50;
      break;
    case Task::kSpread:
      c.reward.beta = 0.5;
      break;
    case Task::kRendezvous:
      c.reward.beta = 1.0;
      c.train.extrinsic_coef = 1.0;
      break;
    case Task::kTag:
      c.reward.beta = 0.5;
      c.env.episode_length = 25;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (skills.kind == SkillKind::kDiscrete) {
    require(skills.k_max >= 1, "skills.k_max", "must be at least 1");
    require(skills.initial_k >= 1 && skills.initial_k <= skills.k_max, "skills.initial_k",
            "must lie in [1, skills.k_max]");
    require(reward.loss == DiscLoss::kCrossEntropy, "reward.loss",
            "discrete skills require the ce loss");
  } else {
    require(skills.dim >= 1, "skills.dim", "must be at least 1");
    require(reward.loss != DiscLoss::kCrossEntropy, "reward.loss",
            "continuous skills require the l1 or l2 loss");
    require(!curriculum.enabled, "curriculum.enabled",
            "the curriculum applies to discrete skills only");
  }
  require(reward.beta >= 0.0, "reward.beta", "must be >= 0");
  require(curriculum.window >= 1, "curriculum.window", "must be at least 1");
  require(train.gamma > 0.0 && train.gamma < 1.0, "train.gamma", "must lie in (0, 1)");
  require(train.tau > 0.0 && train.tau <= 1.0, "train.tau", "must lie in (0, 1]");
  require(train.actor_lr > 0.0, "train.actor_lr", "must be positive");
  require(train.critic_lr > 0.0, "train.critic_lr", "must be positive");
  require(train.disc_lr > 0.0, "train.disc_lr", "must be positive");
  require(train.batch_size >= 1, "train.batch_size", "must be at least 1");
  require(train.disc_batch_size >= 1, "train.disc_batch_size", "must be at least 1");
  require(train.replay_capacity >= 1, "train.replay_capacity", "must be at least 1");
  require(train.disc_capacity >= 1, "train.disc_capacity", "must be at least 1");
  require(train.noise_start >= 0.0, "train.noise_start", "must be >= 0");
  require(train.noise_end >= 0.0, "train.noise_end", "must be >= 0");
  require(train.hidden >= 1, "train.hidden", "must be at least 1");
  require(train.disc_hidden >= 1, "train.disc_hidden", "must be at least 1");
  require(train.grad_clip >= 0.0, "train.grad_clip", "must be >= 0");
  require(train.eval_interval >= 1, "train.eval_interval", "must be at least 1");
  require(train.checkpoint_interval % train.eval_interval == 0, "train.checkpoint_interval",
          "must be a multiple of train.eval_interval");
  require(xor_game.temperature_start > 0.0, "xor.temperature_start", "must be positive");
  require(xor_game.temperature_end > 0.0, "xor.temperature_end", "must be positive");
  require(xor_game.tabular_lr > 0.0, "xor.tabular_lr", "must be positive");
  require(env.episode_length >= 1, "env.episode_length", "must be at least 1");
  require(env.num_agents >= 1, "env.num_agents", "must be at least 1");
  require(env.hit_reward >= 0.0, "env.hit_reward", "must be >= 0");
  require(env.aux_coef >= 0.0, "env.aux_coef", "must be >= 0");
  if (task == Task::kXor) {
    require(env.num_agents == 2, "env.num_agents", "the xor game has exactly two agents");
    require(env.episode_length == 1, "env.episode_length", "the xor game lasts one step");
    require(skills.kind == SkillKind::kDiscrete, "skills.kind", "the xor game uses discrete skills");
  }
  require(finetune.selection_episodes >= 1, "finetune.selection_episodes", "must be at least 1");
  require(finetune.final_window >= 1, "finetune.final_window", "must be at least 1");
}

SkillSpace ExperimentConfig::skill_space() const {
  if (skills.kind == SkillKind::kDiscrete) {
    return SkillSpace::discrete(skills.k_max, skills.initial_k);
  }
  return SkillSpace::continuous(skills.dim);
}

PseudoRewardConfig ExperimentConfig::pseudo_reward() const {
  return {reward.beta, reward.aggregation};
}

ParticleConfig ExperimentConfig::particle() const {
  ParticleConfig p = ParticleConfig::for_task(task);
  p.num_agents = env.num_agents;
  p.episode_length = env.episode_length;
  p.hit_reward = env.hit_reward;
  p.aux_coef = env.aux_coef;
  p.include_auxiliary = env.include_auxiliary;
  p.shared_hit_reward = env.shared_hit_reward;
  return p;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  find_entry(key).set(*this, value);
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : registry()) out.emplace_back(e.key, e.get(*this));
  return out;
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(text, "override must look like key=value");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

ExperimentConfig config_from_string(const std::string& yaml_text, const Overrides& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("parse error: ") + e.what());
  }
  std::vector<std::pair<std::string, std::string>> file_entries;
  if (!root.IsNull()) {
    if (!root.IsMap()) throw ConfigError("", "configuration must be a mapping");
    flatten(root, "", file_entries);
  }
  return build(file_entries, overrides);
}

ExperimentConfig load_config(const std::string& path, const Overrides& overrides) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("", "cannot open configuration file " + path);
  } catch (const YAML::Exception& e) {
    throw ConfigError("", path + ": parse error: " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> file_entries;
  if (!root.IsNull()) {
    if (!root.IsMap()) throw ConfigError("", path + ": configuration must be a mapping");
    flatten(root, "", file_entries);
  }
  return build(file_entries, overrides);
}

std::string dump_config(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, value] : config.entries()) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      out << key << ": \"" << value << "\"\n";
      continue;
    }
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out << sec << ":\n";
      section = sec;
    }
    out << "  " << key.substr(dot + 1) << ": \"" << value << "\"\n";
  }
  return out.str();
}

}  // namespace masd
