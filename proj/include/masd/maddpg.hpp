#pragma once

// Skill-conditioned MADDPG: decentralized actors over (own observation,
// skill), centralized critics over (all observations, all actions, skill),
// the two replay memories, and the training loop that interleaves
// collection, actor-critic updates and discriminator updates.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "masd/analysis.hpp"
#include "masd/config.hpp"
#include "masd/envs.hpp"
#include "masd/io.hpp"
#include "masd/numerics.hpp"
#include "masd/skills.hpp"

namespace masd {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Replay memories

/// Fixed-width ring of rows with FIFO eviction.
class RowRing {
 public:
  RowRing(std::size_t width, std::size_t capacity);

  void push(std::span<const double> row);
  std::size_t size() const { return count_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t width() const { return width_; }
  /// Row by age: 0 is the oldest stored row.
  std::span<const double> oldest(std::size_t age) const;
  RealMatrix gather(std::span<const std::size_t> slots) const;
  std::vector<std::size_t> sample_slots(std::size_t n, Rng& rng) const;

  /// Physical storage (size() rows) and the next overwrite slot; restoring
  /// both reproduces later sampling exactly.
  const std::vector<double>& raw() const { return data_; }
  std::size_t head() const { return head_; }
  /// Throws std::invalid_argument for a ragged or oversized buffer.
  void assign_raw(std::vector<double> data, std::size_t head);

 private:
  std::size_t width_;
  std::size_t capacity_;
  std::size_t count_ = 0;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<double> data_;
};

struct Transition {
  RealMatrix obs;       // N x obs_dim
  RealMatrix actions;   // N x action_dim (relaxed actions for binary heads)
  std::vector<double> skill_encoding;
  int skill_label = -1;
  std::vector<double> rewards;    // N, pseudo + weighted extrinsic
  std::vector<double> extrinsic;  // N
  RealMatrix next_obs;
  bool done = false;
};

struct RlBatch {
  RealMatrix obs;       // B x N*obs_dim
  RealMatrix actions;   // B x N*action_dim
  RealMatrix skill_encoding;
  std::vector<int> labels;
  RealMatrix rewards;   // B x N
  RealMatrix extrinsic; // B x N
  RealMatrix next_obs;
  Eigen::VectorXd done;
};

class ReplayRl {
 public:
  ReplayRl(std::size_t num_agents, std::size_t obs_dim, std::size_t action_dim,
           std::size_t enc_dim, std::size_t capacity);
  void push(const Transition& t);
  RlBatch sample(std::size_t n, Rng& rng) const;
  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return ring_.capacity(); }
  RowRing& ring() { return ring_; }
  const RowRing& ring() const { return ring_; }
  /// Decodes the record of the given age (0 = oldest).
  Transition at(std::size_t age) const;

 private:
  RlBatch decode(const RealMatrix& rows) const;
  std::size_t n_, obs_, act_, enc_;
  RowRing ring_;
};

struct DiscBatch {
  RealMatrix features;  // B x N*feature_dim
  SkillTargets targets;
};

class ReplayDisc {
 public:
  ReplayDisc(std::size_t joint_feature_dim, std::size_t enc_dim, std::size_t capacity);
  void push(std::span<const double> joint_features, std::span<const double> skill_encoding,
            int label);
  DiscBatch sample(std::size_t n, const SkillSpace& space, Rng& rng) const;
  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return ring_.capacity(); }
  RowRing& ring() { return ring_; }
  const RowRing& ring() const { return ring_; }

 private:
  std::size_t feat_, enc_;
  RowRing ring_;
};

// ---------------------------------------------------------------------------
// Actors and critics

struct AgentNets {
  MlpParams actor;
  MlpParams actor_target;
  MlpParams critic;
  MlpParams critic_target;
  AdamState actor_opt;
  AdamState critic_opt;
};

struct Team {
  EnvSpec spec;
  std::size_t enc_dim = 0;
  std::vector<AgentNets> agents;

  std::size_t actor_input_dim() const { return spec.obs_dim + enc_dim; }
  std::size_t critic_input_dim() const {
    return spec.num_agents * (spec.obs_dim + spec.action_dim) + enc_dim;
  }
};

/// Actors: [obs + skill] -> hidden x2 (relu) -> action (tanh, or a logit
/// for binary heads). Critics: [all obs + all actions + skill] -> hidden x2
/// (relu) -> Q. Targets start equal to the online networks.
Team make_team(const EnvSpec& spec, std::size_t enc_dim, const TrainConfig& config, Rng& rng);

struct ActResult {
  std::vector<double> relaxed;     // what the critic sees
  std::vector<double> env_action;  // what the environment receives
};

/// Decentralized action for one agent from its own observation and the
/// skill encoding only. Continuous heads add N(0, exploration^2) noise and
/// clamp to [-1, 1]; binary heads sample Bernoulli(sigmoid(logit /
/// exploration)) and report that probability as the relaxed action.
/// Throws std::invalid_argument if the observation width is wrong.
ActResult act(const MlpParams& actor, const EnvSpec& spec, std::span<const double> obs,
              std::span<const double> skill_encoding, double exploration, Rng& rng);

/// Deterministic policy output for a batch of actor inputs; fills `cache`
/// (of the underlying network) when non-null.
RealMatrix policy_output(const MlpParams& actor, ActionKind kind, const RealMatrix& input,
                         MlpCache* cache = nullptr);

RealMatrix actor_inputs(const Team& team, std::size_t agent, const RealMatrix& joint_obs,
                        const RealMatrix& skill_encoding);
RealMatrix critic_inputs(const RealMatrix& joint_obs, const RealMatrix& joint_actions,
                         const RealMatrix& skill_encoding);

/// Mean squared TD error of agent `i`'s critic against
/// y = r + gamma (1 - done) Q_target(x', target actions, z), and the
/// gradient with respect to the critic parameters.
struct CriticLoss {
  double loss = 0.0;
  ParamTensors grads;
};
CriticLoss critic_loss(const Team& team, std::size_t agent, const RlBatch& batch,
                       const RealMatrix& target_actions, double gamma);

/// Target-actor actions for the next observations, B x N*action_dim.
RealMatrix target_actions(const Team& team, const RlBatch& batch);

/// One Adam step per critic; returns the mean TD loss over agents.
double critic_update(Team& team, const RlBatch& batch, const TrainConfig& config);

/// -mean Q_i(x, u_{-i}, pi_i(x_i, z), z) and its gradient with respect to
/// agent i's actor parameters (other actions come from the batch).
struct ActorLoss {
  double loss = 0.0;
  ParamTensors grads;
};
ActorLoss actor_loss(const Team& team, std::size_t agent, const RlBatch& batch);

/// One Adam step on agent i's actor only.
double actor_update(Team& team, std::size_t agent, const RlBatch& batch, const TrainConfig& config);

void soft_update_targets(Team& team, double tau);

// ---------------------------------------------------------------------------
// Training loop

struct TrainerOptions {
  /// Pseudo reward from the discriminators; off for supervised finetuning.
  bool intrinsic = true;
  /// Skill used for every episode instead of sampling from the prior.
  std::optional<SkillCode> fixed_skill;
};

struct EpisodeRecord {
  SkillCode skill;
  std::vector<double> pseudo_rewards;  // per step
  std::vector<double> global_lps;      // per step
  std::vector<std::vector<double>> local_lps;  // per step, N each
  std::vector<std::vector<Vec2>> positions;    // particle tasks: per agent, T + 1
  double extrinsic_return = 0.0;               // summed over steps and agents
};

struct Rollout {
  TrajectoryRecord trajectory;
  double extrinsic_return = 0.0;
};

class StateBinder;

class Trainer {
 public:
  Trainer(ExperimentConfig config, std::uint64_t seed, TrainerOptions options = {});

  /// Collects one episode with the current policies and appends it to both
  /// replay memories.
  EpisodeRecord run_episode();

  /// One actor-critic round plus the configured discriminator updates.
  /// No-op until the RL replay holds `warmup` transitions.
  void update_round();

  /// Trains until `total_episodes` episodes have completed, emitting a
  /// metrics record every eval interval. `on_checkpoint` runs every
  /// checkpoint interval. Throws TrainingError on non-finite values.
  void train_until(std::size_t total_episodes, MetricsWriter* metrics = nullptr,
                   const std::function<void(const Trainer&)>& on_checkpoint = {});

  /// Noise-free evaluation episode from `init` (or a random placement) on a
  /// private environment; particle tasks only.
  Rollout rollout(const SkillCode& skill, const std::optional<Snapshot>& init, Rng& rng) const;

  /// Policy probabilities for the XOR game (relaxed or tabular policy).
  XorPolicyTable xor_policy_table() const;

  Checkpoint to_checkpoint() const;
  /// Restores the complete training state. Validates every array first and
  /// throws CheckpointError without modifying anything on mismatch.
  void restore(const Checkpoint& checkpoint);
  /// Loads actors (and optionally critics) plus the skill space only.
  void load_policies(const Checkpoint& checkpoint, bool include_critics);

  const ExperimentConfig& config() const { return config_; }
  const Team& team() const { return team_; }
  Team& team() { return team_; }
  const DiscriminatorSet& discriminators() const { return disc_; }
  const SkillSpace& skill_space() const { return space_; }
  SkillSpace& skill_space() { return space_; }
  const ReplayRl& replay_rl() const { return replay_rl_; }
  const ReplayDisc& replay_disc() const { return replay_disc_; }
  const EnvSpec& env_spec() const { return env_->spec(); }
  std::size_t episode() const { return episode_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t update_rounds() const { return update_rounds_; }

  /// Exploration scale (noise std, or temperature for binary heads).
  double exploration() const;

 private:
  struct Accumulator {
    std::size_t episodes = 0;
    std::size_t steps = 0;
    double global_lp = 0.0;
    std::vector<double> local_lp;
    double pseudo = 0.0;
    double extrinsic = 0.0;
    std::size_t rounds = 0;
    double td_loss = 0.0;
    std::vector<double> disc_losses;
  };

  enum Part : unsigned { kMeta = 1, kActors = 2, kCritics = 4, kRest = 8, kAll = 15 };
  friend class StateBinder;
  void bind(StateBinder& b, unsigned parts);
  MetricsRecord flush_metrics();
  void tabular_update();
  RealMatrix recompute_rewards(const RlBatch& batch) const;
  std::array<double, 8> xor_outcome_rewards() const;
  bool is_xor() const { return config_.task == Task::kXor; }
  bool tabular() const;

  ExperimentConfig config_;
  std::uint64_t seed_;
  TrainerOptions options_;
  std::unique_ptr<Environment> env_;
  PseudoRewardConfig reward_;
  SkillSpace space_;
  Curriculum curriculum_;
  Rng init_rng_;
  Rng env_rng_;
  Rng explore_rng_;
  Rng replay_rng_;
  Team team_;
  DiscriminatorSet disc_;
  ReplayRl replay_rl_;
  ReplayDisc replay_disc_;
  // [agent][observation index][z] logits of the tabular XOR policy.
  std::vector<double> tabular_logits_;
  std::size_t episode_ = 0;
  std::size_t update_rounds_ = 0;
  Accumulator acc_;
};

// ---------------------------------------------------------------------------
// Finetuning on the tag task

struct FinetuneResult {
  std::optional<int> selected_skill;
  std::vector<double> selection_returns;  // mean return per active skill
  std::vector<double> episode_returns;    // one per training episode
  double final_window_mean = 0.0;
};

/// Mean extrinsic return of each active skill over `episodes` noise-free
/// evaluation episodes.
std::vector<double> evaluate_skills(const Trainer& trainer, std::size_t episodes, Rng& rng);

/// Index of the largest value (first on ties).
int select_skill(std::span<const double> returns);

/// Supervised MADDPG on the tag task's extrinsic reward with a fixed skill.
/// With a checkpoint, every active skill is evaluated first and the best
/// one is fixed; otherwise skill 0 is used and training starts from a
/// random initialization. Discriminators are not used. Throws
/// CheckpointError for incompatible checkpoints.
FinetuneResult finetune(const ExperimentConfig& config, const std::optional<Checkpoint>& pretrained,
                        std::uint64_t seed);

}  // namespace masd
