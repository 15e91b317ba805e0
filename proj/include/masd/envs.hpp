#pragma once

// Environments: the one-step XOR game and a 2D particle world hosting the
// spread, rendezvous and tag tasks.

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "masd/numerics.hpp"
#include "masd/rng.hpp"

namespace masd {

using Vec2 = Eigen::Vector2d;

enum class Task { kXor, kSpread, kRendezvous, kTag };

std::string to_string(Task task);
Task parse_task(const std::string& name);

// ---------------------------------------------------------------------------
// XOR game

struct XorState {
  std::array<int, 2> bits{0, 0};
};

XorState xor_reset(Rng& rng);

/// x' = x xor u. Throws std::invalid_argument on non-binary actions.
XorState xor_step(const XorState& state, const std::array<int, 2>& actions);

// ---------------------------------------------------------------------------
// Particle world

struct ParticleConfig {
  Task task = Task::kSpread;
  std::size_t num_agents = 3;
  std::size_t num_landmarks = 3;
  std::size_t episode_length = 25;
  double dt = 0.1;
  double damping = 0.75;  // velocity retention per step
  double accel = 3.0;
  double max_speed = 1.0;
  double agent_radius = 0.05;
  double prey_accel = 4.0;
  double prey_max_speed = 1.3;
  double prey_radius = 0.05;
  std::size_t prey_heading_hold = 5;
  double prey_flee_weight = 1.0;
  double hit_reward = 10.0;
  double aux_coef = 0.1;
  bool include_auxiliary = true;
  bool shared_hit_reward = true;

  static ParticleConfig for_task(Task task);
  void validate() const;
  bool has_prey() const { return task == Task::kTag; }
};

struct ParticleState {
  std::vector<Vec2> agent_pos;
  std::vector<Vec2> agent_vel;
  std::vector<Vec2> landmarks;
  Vec2 prey_pos = Vec2::Zero();
  Vec2 prey_vel = Vec2::Zero();
  Vec2 prey_heading = Vec2::Zero();
  std::size_t prey_heading_left = 0;
  std::size_t step = 0;
};

/// Labeled initial positions used to pin evaluation episodes.
struct Snapshot {
  std::vector<Vec2> agents;
  std::vector<Vec2> landmarks;
  std::optional<Vec2> prey;
};

Snapshot snapshot_of(const ParticleState& state, const ParticleConfig& config);

/// Uniform placement in [-1, 1]^2 with zero velocities, or exact restoration
/// of `fixed_init`. Throws std::invalid_argument when the snapshot does not
/// match the task's entity counts.
ParticleState particle_reset(const ParticleConfig& config, Rng& rng,
                             const std::optional<Snapshot>& fixed_init = std::nullopt);

/// Adds U[-0.1, 0.1] x world width to every agent coordinate (clamped).
Snapshot perturb_snapshot(const Snapshot& base, Rng& rng);

/// Per-agent observation matrix (num_agents x obs_dim). Layout per row:
/// own position, own velocity, landmark offsets, other-agent offsets and,
/// for tag, the prey offset.
RealMatrix particle_observe(const ParticleConfig& config, const ParticleState& state);
std::size_t particle_obs_dim(const ParticleConfig& config);

struct ParticleStepResult {
  std::vector<double> rewards;  // extrinsic, per agent
  bool done = false;
};

/// Advances `state` by one step with per-agent forces in [-1, 1]^2
/// (num_agents x 2). Throws std::invalid_argument on NaN actions.
ParticleStepResult particle_step(const ParticleConfig& config, ParticleState& state,
                                 const RealMatrix& actions, Rng& rng);

/// -0.1 * max_i |p_i|^2, the pull towards the world center.
double rendezvous_signal(const ParticleState& state);

std::vector<double> tag_reward(const ParticleConfig& config, const ParticleState& state,
                               bool include_auxiliary);

/// Scripted prey: holds a random heading for a few steps, biased away from
/// the nearest predator. Updates the heading bookkeeping in `state`.
Vec2 prey_policy(const ParticleConfig& config, ParticleState& state, Rng& rng);

/// Own absolute position and velocity; drops every cross-agent coordinate.
Eigen::Vector4d feature_extract(std::span<const double> obs);

// ---------------------------------------------------------------------------
// Uniform interface consumed by the trainer.

enum class ActionKind { kContinuous, kBinary };

struct EnvSpec {
  std::size_t num_agents = 0;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::size_t feature_dim = 0;
  std::size_t episode_length = 0;
  ActionKind action_kind = ActionKind::kContinuous;
};

struct StepResult {
  RealMatrix next_obs;
  std::vector<double> rewards;
  bool done = false;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual RealMatrix reset(Rng& rng) = 0;
  /// `actions` are environment actions: forces for particle tasks, 0/1 bits
  /// for XOR.
  virtual StepResult step(const RealMatrix& actions, Rng& rng) = 0;
  /// num_agents x feature_dim.
  virtual RealMatrix features(const RealMatrix& obs) const = 0;
};

class XorEnv final : public Environment {
 public:
  /// With `joint_observation`, each agent observes (own bit, other bit);
  /// otherwise only its own bit. Features are always the own bit.
  explicit XorEnv(bool joint_observation = true);
  const EnvSpec& spec() const override { return spec_; }
  RealMatrix reset(Rng& rng) override;
  StepResult step(const RealMatrix& actions, Rng& rng) override;
  RealMatrix features(const RealMatrix& obs) const override;

  RealMatrix observe(const XorState& s) const;
  const XorState& state() const { return state_; }

 private:
  bool joint_;
  EnvSpec spec_;
  XorState state_;
};

class ParticleEnv final : public Environment {
 public:
  explicit ParticleEnv(ParticleConfig config);
  const EnvSpec& spec() const override { return spec_; }
  RealMatrix reset(Rng& rng) override;
  RealMatrix reset_to(const Snapshot& snapshot, Rng& rng);
  StepResult step(const RealMatrix& actions, Rng& rng) override;
  RealMatrix features(const RealMatrix& obs) const override;

  const ParticleState& state() const { return state_; }
  const ParticleConfig& config() const { return config_; }

 private:
  ParticleConfig config_;
  EnvSpec spec_;
  ParticleState state_;
};

}  // namespace masd
