#include "masd/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace masd {
namespace {

constexpr double kWorldMin = -1.0;
constexpr double kWorldMax = 1.0;
constexpr double kWorldWidth = kWorldMax - kWorldMin;

Vec2 random_position(Rng& rng) {
  const double x = rng.uniform(kWorldMin, kWorldMax);
  const double y = rng.uniform(kWorldMin, kWorldMax);
  return {x, y};
}

// Double integrator with speed cap; walls stop the outward velocity component.
void integrate(Vec2& pos, Vec2& vel, const Vec2& action, double accel, double max_speed,
               const ParticleConfig& c) {
  vel = c.damping * vel + accel * action * c.dt;
  const double speed = vel.norm();
  if (speed > max_speed) vel *= max_speed / speed;
  pos += vel * c.dt;
  for (int k = 0; k < 2; ++k) {
    if (pos[k] < kWorldMin) {
      pos[k] = kWorldMin;
      vel[k] = std::max(vel[k], 0.0);
    } else if (pos[k] > kWorldMax) {
      pos[k] = kWorldMax;
      vel[k] = std::min(vel[k], 0.0);
    }
  }
}

void clamp_to_world(Vec2& p) {
  p = p.cwiseMax(kWorldMin).cwiseMin(kWorldMax);
}

std::vector<double> spread_reward(const ParticleConfig& c, const ParticleState& s) {
  double r = 0.0;
  for (const auto& l : s.landmarks) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : s.agent_pos) best = std::min(best, (p - l).norm());
    r -= best;
  }
  for (std::size_t i = 0; i < s.agent_pos.size(); ++i) {
    for (std::size_t j = i + 1; j < s.agent_pos.size(); ++j) {
      if ((s.agent_pos[i] - s.agent_pos[j]).norm() < 2.0 * c.agent_radius) r -= 1.0;
    }
  }
  return std::vector<double>(s.agent_pos.size(), r);
}

// Separates overlapping predators symmetrically.
void push_apart(const ParticleConfig& c, ParticleState& s) {
  const double min_dist = 2.0 * c.agent_radius;
  for (std::size_t i = 0; i < s.agent_pos.size(); ++i) {
    for (std::size_t j = i + 1; j < s.agent_pos.size(); ++j) {
      Vec2 d = s.agent_pos[i] - s.agent_pos[j];
      const double dist = d.norm();
      if (dist >= min_dist) continue;
      const Vec2 dir = dist > 1e-12 ? Vec2(d / dist) : Vec2(1.0, 0.0);
      const Vec2 shift = 0.5 * (min_dist - dist) * dir;
      s.agent_pos[i] += shift;
      s.agent_pos[j] -= shift;
      clamp_to_world(s.agent_pos[i]);
      clamp_to_world(s.agent_pos[j]);
    }
  }
}

}  // namespace

std::string to_string(Task task) {
  switch (task) {
    case Task::kXor:
      return "xor";
    case Task::kSpread:
      return "spread";
    case Task::kRendezvous:
      return "rendezvous";
    case Task::kTag:
      return "tag";
  }
  return "?";
}

Task parse_task(const std::string& name) {
  if (name == "xor") return Task::kXor;
  if (name == "spread") return Task::kSpread;
  if (name == "rendezvous") return Task::kRendezvous;
  if (name == "tag") return Task::kTag;
  throw std::invalid_argument("unknown task '" + name + "'");
}

// ---------------------------------------------------------------------------

XorState xor_reset(Rng& rng) {
  XorState s;
  s.bits[0] = rng.bernoulli(0.5) ? 1 : 0;
  s.bits[1] = rng.bernoulli(0.5) ? 1 : 0;
  return s;
}

XorState xor_step(const XorState& state, const std::array<int, 2>& actions) {
  XorState next;
  for (std::size_t i = 0; i < 2; ++i) {
    if (actions[i] != 0 && actions[i] != 1) {
      throw std::invalid_argument("xor_step: actions must be 0 or 1");
    }
    next.bits[i] = state.bits[i] ^ actions[i];
  }
  return next;
}

// ---------------------------------------------------------------------------

ParticleConfig ParticleConfig::for_task(Task task) {
  ParticleConfig c;
  c.task = task;
  switch (task) {
    case Task::kSpread:
      c.num_landmarks = 3;
      break;
    case Task::kRendezvous:
      c.num_landmarks = 0;
      break;
    case Task::kTag:
      c.num_landmarks = 0;
      c.agent_radius = 0.075;
      break;
    case Task::kXor:
      throw std::invalid_argument("ParticleConfig: xor is not a particle task");
  }
  return c;
}

void ParticleConfig::validate() const {
  if (task == Task::kXor) throw std::invalid_argument("particle config: task must not be xor");
  if (num_agents < 1) throw std::invalid_argument("particle config: num_agents must be >= 1");
  if (episode_length < 1) throw std::invalid_argument("particle config: episode_length >= 1");
  if (!(dt > 0.0) || !(damping >= 0.0 && damping < 1.0)) {
    throw std::invalid_argument("particle config: need dt > 0 and damping in [0, 1)");
  }
  if (has_prey() && !(prey_max_speed > max_speed)) {
    throw std::invalid_argument("particle config: prey must be faster than the predators");
  }
}

Snapshot snapshot_of(const ParticleState& state, const ParticleConfig& config) {
  Snapshot s{state.agent_pos, state.landmarks, std::nullopt};
  if (config.has_prey()) s.prey = state.prey_pos;
  return s;
}

ParticleState particle_reset(const ParticleConfig& config, Rng& rng,
                             const std::optional<Snapshot>& fixed_init) {
  ParticleState s;
  const std::size_t n = config.num_agents;
  s.agent_vel.assign(n, Vec2::Zero());
  if (fixed_init) {
    const Snapshot& snap = *fixed_init;
    if (snap.agents.size() != n || snap.landmarks.size() != config.num_landmarks ||
        snap.prey.has_value() != config.has_prey()) {
      throw std::invalid_argument("particle_reset: snapshot incompatible with task " +
                                  to_string(config.task));
    }
    s.agent_pos = snap.agents;
    s.landmarks = snap.landmarks;
    if (snap.prey) s.prey_pos = *snap.prey;
  } else {
    for (std::size_t i = 0; i < n; ++i) s.agent_pos.push_back(random_position(rng));
    for (std::size_t l = 0; l < config.num_landmarks; ++l) {
      s.landmarks.push_back(random_position(rng));
    }
    if (config.has_prey()) s.prey_pos = random_position(rng);
  }
  return s;
}

Snapshot perturb_snapshot(const Snapshot& base, Rng& rng) {
  Snapshot out = base;
  const double amp = 0.1 * kWorldWidth;
  for (auto& p : out.agents) {
    p.x() += rng.uniform(-amp, amp);
    p.y() += rng.uniform(-amp, amp);
    clamp_to_world(p);
  }
  return out;
}

std::size_t particle_obs_dim(const ParticleConfig& c) {
  return 4 + 2 * c.num_landmarks + 2 * (c.num_agents - 1) + (c.has_prey() ? 2 : 0);
}

RealMatrix particle_observe(const ParticleConfig& c, const ParticleState& s) {
  const std::size_t n = c.num_agents;
  RealMatrix obs(n, particle_obs_dim(c));
  for (std::size_t i = 0; i < n; ++i) {
    auto row = obs.row(static_cast<Eigen::Index>(i));
    Eigen::Index k = 0;
    auto put = [&](const Vec2& v) {
      row(k++) = v.x();
      row(k++) = v.y();
    };
    put(s.agent_pos[i]);
    put(s.agent_vel[i]);
    for (const auto& l : s.landmarks) put(l - s.agent_pos[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) put(s.agent_pos[j] - s.agent_pos[i]);
    }
    if (c.has_prey()) put(s.prey_pos - s.agent_pos[i]);
  }
  return obs;
}

Vec2 prey_policy(const ParticleConfig& c, ParticleState& s, Rng& rng) {
  if (s.prey_heading_left == 0) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.prey_heading = Vec2(std::cos(angle), std::sin(angle));
    s.prey_heading_left = std::max<std::size_t>(c.prey_heading_hold, 1);
  }
  --s.prey_heading_left;
  Vec2 dir = s.prey_heading;
  double nearest = std::numeric_limits<double>::infinity();
  Vec2 away = Vec2::Zero();
  for (const auto& p : s.agent_pos) {
    const Vec2 d = s.prey_pos - p;
    const double dist = d.norm();
    if (dist < nearest) {
      nearest = dist;
      away = dist > 1e-12 ? Vec2(d / dist) : Vec2::Zero();
    }
  }
  dir += c.prey_flee_weight * away;
  const double norm = dir.norm();
  return norm > 1e-12 ? Vec2(dir / norm) : Vec2::Zero();
}

double rendezvous_signal(const ParticleState& state) {
  double worst = 0.0;
  for (const auto& p : state.agent_pos) worst = std::max(worst, p.squaredNorm());
  return -0.1 * worst;
}

std::vector<double> tag_reward(const ParticleConfig& c, const ParticleState& s,
                               bool include_auxiliary) {
  const std::size_t n = s.agent_pos.size();
  std::vector<double> r(n, 0.0);
  const double contact = c.agent_radius + c.prey_radius;
  bool any_hit = false;
  for (std::size_t i = 0; i < n; ++i) {
    if ((s.agent_pos[i] - s.prey_pos).norm() < contact) {
      any_hit = true;
      if (!c.shared_hit_reward) r[i] += c.hit_reward;
    }
  }
  if (any_hit && c.shared_hit_reward) {
    for (auto& v : r) v += c.hit_reward;
  }
  if (include_auxiliary) {
    for (std::size_t i = 0; i < n; ++i) r[i] -= c.aux_coef * (s.agent_pos[i] - s.prey_pos).norm();
  }
  return r;
}

ParticleStepResult particle_step(const ParticleConfig& c, ParticleState& s,
                                 const RealMatrix& actions, Rng& rng) {
  const std::size_t n = c.num_agents;
  if (static_cast<std::size_t>(actions.rows()) != n || actions.cols() != 2) {
    throw std::invalid_argument("particle_step: expected one 2D force per agent");
  }
  if (!actions.allFinite()) throw std::invalid_argument("particle_step: non-finite action");
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = actions.row(static_cast<Eigen::Index>(i)).transpose().cwiseMax(-1.0).cwiseMin(1.0);
    integrate(s.agent_pos[i], s.agent_vel[i], a, c.accel, c.max_speed, c);
  }
  if (c.has_prey()) {
    const Vec2 a = prey_policy(c, s, rng);
    integrate(s.prey_pos, s.prey_vel, a, c.prey_accel, c.prey_max_speed, c);
    push_apart(c, s);
  }
  ++s.step;
  ParticleStepResult out;
  switch (c.task) {
    case Task::kSpread:
      out.rewards = spread_reward(c, s);
      break;
    case Task::kRendezvous:
      out.rewards.assign(n, rendezvous_signal(s));
      break;
    case Task::kTag:
      out.rewards = tag_reward(c, s, c.include_auxiliary);
      break;
    case Task::kXor:
      break;
  }
  out.done = s.step >= c.episode_length;
  return out;
}

Eigen::Vector4d feature_extract(std::span<const double> obs) {
  if (obs.size() < 4) throw std::invalid_argument("feature_extract: observation too short");
  return {obs[0], obs[1], obs[2], obs[3]};
}

// ---------------------------------------------------------------------------

XorEnv::XorEnv(bool joint_observation) : joint_(joint_observation) {
  spec_.num_agents = 2;
  spec_.obs_dim = joint_ ? 2 : 1;
  spec_.action_dim = 1;
  spec_.feature_dim = 1;
  spec_.episode_length = 1;
  spec_.action_kind = ActionKind::kBinary;
}

RealMatrix XorEnv::observe(const XorState& s) const {
  RealMatrix obs(2, spec_.obs_dim);
  for (Eigen::Index i = 0; i < 2; ++i) {
    obs(i, 0) = s.bits[static_cast<std::size_t>(i)];
    if (joint_) obs(i, 1) = s.bits[static_cast<std::size_t>(1 - i)];
  }
  return obs;
}

RealMatrix XorEnv::reset(Rng& rng) {
  state_ = xor_reset(rng);
  return observe(state_);
}

StepResult XorEnv::step(const RealMatrix& actions, Rng&) {
  if (actions.rows() != 2 || actions.cols() != 1) {
    throw std::invalid_argument("XorEnv::step: expected one bit per agent");
  }
  std::array<int, 2> u{};
  for (Eigen::Index i = 0; i < 2; ++i) {
    const double a = actions(i, 0);
    if (a != 0.0 && a != 1.0) throw std::invalid_argument("XorEnv::step: non-binary action");
    u[static_cast<std::size_t>(i)] = static_cast<int>(a);
  }
  state_ = xor_step(state_, u);
  return {observe(state_), {0.0, 0.0}, true};
}

RealMatrix XorEnv::features(const RealMatrix& obs) const { return obs.leftCols(1); }

ParticleEnv::ParticleEnv(ParticleConfig config) : config_(std::move(config)) {
  config_.validate();
  spec_.num_agents = config_.num_agents;
  spec_.obs_dim = particle_obs_dim(config_);
  spec_.action_dim = 2;
  spec_.feature_dim = 4;
  spec_.episode_length = config_.episode_length;
  spec_.action_kind = ActionKind::kContinuous;
}

RealMatrix ParticleEnv::reset(Rng& rng) {
  state_ = particle_reset(config_, rng);
  return particle_observe(config_, state_);
}

RealMatrix ParticleEnv::reset_to(const Snapshot& snapshot, Rng& rng) {
  state_ = particle_reset(config_, rng, snapshot);
  return particle_observe(config_, state_);
}

StepResult ParticleEnv::step(const RealMatrix& actions, Rng& rng) {
  auto r = particle_step(config_, state_, actions, rng);
  return {particle_observe(config_, state_), std::move(r.rewards), r.done};
}

RealMatrix ParticleEnv::features(const RealMatrix& obs) const { return obs.leftCols(4); }

}  // namespace masd
