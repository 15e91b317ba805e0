#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "masd/maddpg.hpp"

namespace masd {

// Walks the trainer state in a fixed order. Save mode writes arrays, check
// mode only verifies presence, dtype and shape, load mode copies values.
// Restores run check then load, so a bad checkpoint never leaves a
// half-applied state behind.
class StateBinder {
 public:
  enum class Mode { kSave, kCheck, kLoad };
  StateBinder(Mode mode, Checkpoint& ck) : mode_(mode), ck_(ck) {}

  void f64(const std::string& name, double* data, std::size_t rows, std::size_t cols) {
    if (mode_ == Mode::kSave) {
      NamedArray a;
      a.dtype = NamedArray::DType::kF64;
      a.rows = rows;
      a.cols = cols;
      a.f64.assign(data, data + rows * cols);
      ck_.arrays[name] = std::move(a);
      return;
    }
    const NamedArray& a = find(name, NamedArray::DType::kF64);
    if (a.rows != rows || a.cols != cols) mismatch(name, a, rows, cols);
    if (mode_ == Mode::kLoad) std::copy(a.f64.begin(), a.f64.end(), data);
  }

  void u64(const std::string& name, std::uint64_t* data, std::size_t n) {
    if (mode_ == Mode::kSave) {
      NamedArray a;
      a.dtype = NamedArray::DType::kU64;
      a.rows = 1;
      a.cols = n;
      a.u64.assign(data, data + n);
      ck_.arrays[name] = std::move(a);
      return;
    }
    const NamedArray& a = find(name, NamedArray::DType::kU64);
    if (a.rows != 1 || a.cols != n) mismatch(name, a, 1, n);
    if (mode_ == Mode::kLoad) std::copy(a.u64.begin(), a.u64.end(), data);
  }

  void size(const std::string& name, std::size_t& v) {
    std::uint64_t x = v;
    u64(name, &x, 1);
    if (mode_ == Mode::kLoad) v = static_cast<std::size_t>(x);
  }

  /// Structural value that must match the receiving trainer.
  void constant(const std::string& name, std::uint64_t value) {
    std::uint64_t x = value;
    u64(name, &x, 1);
    if (mode_ != Mode::kSave && peek(name) != value) {
      throw CheckpointError("shape mismatch for '" + name + "': checkpoint has " +
                            std::to_string(peek(name)) + ", expected " + std::to_string(value));
    }
  }

  /// Stored scalar, or `fallback` in save mode.
  std::uint64_t peek(const std::string& name, std::uint64_t fallback = 0) const {
    if (mode_ == Mode::kSave) return fallback;
    const NamedArray& a = find(name, NamedArray::DType::kU64);
    if (a.u64.size() != 1) throw CheckpointError("array '" + name + "' is not a scalar");
    return a.u64[0];
  }

  void matrix(const std::string& name, RealMatrix& m) {
    f64(name, m.data(), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  }
  void row(const std::string& name, RowVector& v) {
    f64(name, v.data(), 1, static_cast<std::size_t>(v.size()));
  }
  void vec(const std::string& name, std::vector<double>& v) { f64(name, v.data(), 1, v.size()); }

  void tensors(const std::string& prefix, ParamTensors& t) {
    for (std::size_t l = 0; l < t.size(); ++l) {
      matrix(prefix + ".l" + std::to_string(l) + ".w", t[l].weight);
      row(prefix + ".l" + std::to_string(l) + ".b", t[l].bias);
    }
  }
  void mlp(const std::string& prefix, MlpParams& p) { tensors(prefix, p.layers); }
  void adam(const std::string& prefix, AdamState& s) {
    size(prefix + ".step", s.step);
    tensors(prefix + ".m", s.m);
    tensors(prefix + ".v", s.v);
  }

  void rng(const std::string& name, Rng& r) {
    Rng::State s = r.state();
    u64(name, s.data(), s.size());
    if (mode_ == Mode::kLoad) r.set_state(s);
  }

  void ring(const std::string& name, RowRing& r) {
    std::uint64_t meta[3] = {r.width(), r.size(), r.head()};
    if (mode_ == Mode::kSave) {
      u64(name + ".meta", meta, 3);
      auto data = r.raw();
      f64(name + ".data", data.data(), r.size(), r.width());
      return;
    }
    u64(name + ".meta", meta, 3);
    const auto& m = ck_.arrays.at(name + ".meta").u64;
    if (m[0] != r.width() || m[1] > r.capacity() || (m[1] < r.capacity() && m[2] != 0) ||
        (m[1] == r.capacity() && m[2] >= r.capacity())) {
      throw CheckpointError("shape mismatch for '" + name + "': incompatible replay layout");
    }
    const NamedArray& a = find(name + ".data", NamedArray::DType::kF64);
    if (a.rows != m[1] || a.cols != m[0]) mismatch(name + ".data", a, m[1], m[0]);
    if (mode_ == Mode::kLoad) r.assign_raw(a.f64, m[2]);
  }

  Mode mode() const { return mode_; }

 private:
  const NamedArray& find(const std::string& name, NamedArray::DType dtype) const {
    auto it = ck_.arrays.find(name);
    if (it == ck_.arrays.end()) throw CheckpointError("checkpoint is missing array '" + name + "'");
    if (it->second.dtype != dtype) throw CheckpointError("array '" + name + "' has the wrong dtype");
    return it->second;
  }
  [[noreturn]] static void mismatch(const std::string& name, const NamedArray& a, std::size_t rows,
                                    std::size_t cols) {
    throw CheckpointError("shape mismatch for '" + name + "': checkpoint has " + std::to_string(a.rows) +
                          "x" + std::to_string(a.cols) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }

  Mode mode_;
  Checkpoint& ck_;
};

namespace {

std::unique_ptr<Environment> make_env(const ExperimentConfig& c) {
  if (c.task == Task::kXor) return std::make_unique<XorEnv>(c.xor_game.joint_observation);
  return std::make_unique<ParticleEnv>(c.particle());
}

ExperimentConfig validated(ExperimentConfig c) {
  c.validate();
  if (c.task == Task::kXor && c.xor_game.policy == XorPolicyKind::kTabular &&
      (c.skills.k_max != 2 || c.skills.initial_k != 2 || c.curriculum.enabled)) {
    throw ConfigError("xor.policy", "the tabular policy needs exactly two fixed skills");
  }
  return c;
}

std::vector<double> flatten(const RealMatrix& m) { return {m.data(), m.data() + m.size()}; }

double linear_schedule(double start, double end, std::size_t episode, std::size_t span) {
  if (span == 0 || episode >= span) return end;
  const double f = static_cast<double>(episode) / static_cast<double>(span);
  return start + (end - start) * f;
}

std::size_t xor_obs_index(bool joint, int own, int other) {
  return joint ? static_cast<std::size_t>(own * 2 + other) : static_cast<std::size_t>(own);
}

}  // namespace

Trainer::Trainer(ExperimentConfig config, std::uint64_t seed, TrainerOptions options)
    : config_(validated(std::move(config))),
      seed_(seed),
      options_(std::move(options)),
      env_(make_env(config_)),
      reward_(config_.pseudo_reward()),
      space_(config_.skill_space()),
      curriculum_(config_.curriculum.threshold, config_.curriculum.window),
      init_rng_(seed),
      env_rng_(init_rng_.split()),
      explore_rng_(init_rng_.split()),
      replay_rng_(init_rng_.split()),
      team_(make_team(env_->spec(), space_.encoding_dim(), config_.train, init_rng_)),
      disc_(make_discriminators(space_, env_->spec().num_agents, env_->spec().feature_dim,
                                config_.train.disc_hidden, config_.train.disc_lr, config_.reward.loss,
                                init_rng_)),
      replay_rl_(env_->spec().num_agents, env_->spec().obs_dim, env_->spec().action_dim,
                 space_.encoding_dim(), config_.train.replay_capacity),
      replay_disc_(env_->spec().num_agents * env_->spec().feature_dim, space_.encoding_dim(),
                   config_.train.disc_capacity) {
  if (options_.fixed_skill) {
    if (space_.kind == SkillKind::kDiscrete &&
        (options_.fixed_skill->index < 0 ||
         static_cast<std::size_t>(options_.fixed_skill->index) >= space_.k_max)) {
      throw std::invalid_argument("Trainer: fixed skill index out of range");
    }
  }
  if (tabular()) tabular_logits_.assign(2 * 4 * 2, 0.0);
  const std::size_t n = env_->spec().num_agents;
  acc_.local_lp.assign(n, 0.0);
  acc_.disc_losses.assign(n + 1, 0.0);
}

bool Trainer::tabular() const {
  return is_xor() && config_.xor_game.policy == XorPolicyKind::kTabular;
}

double Trainer::exploration() const {
  const auto& t = config_.train;
  if (is_xor()) {
    return linear_schedule(config_.xor_game.temperature_start, config_.xor_game.temperature_end,
                           episode_, t.noise_decay_episodes);
  }
  return linear_schedule(t.noise_start, t.noise_end, episode_, t.noise_decay_episodes);
}

EpisodeRecord Trainer::run_episode() {
  const EnvSpec& spec = env_->spec();
  const std::size_t n = spec.num_agents;
  EpisodeRecord rec;
  rec.skill = options_.fixed_skill ? *options_.fixed_skill : sample_skill(space_, explore_rng_);
  const std::vector<double> enc = encode_skill(space_, rec.skill);
  const double explore = exploration();
  const bool joint_obs = config_.xor_game.joint_observation;
  auto* particle = dynamic_cast<ParticleEnv*>(env_.get());

  RealMatrix obs = env_->reset(env_rng_);
  if (particle) {
    rec.positions.resize(n);
    for (std::size_t i = 0; i < n; ++i) rec.positions[i].push_back(particle->state().agent_pos[i]);
  }
  for (std::size_t t = 0; t < spec.episode_length; ++t) {
    Transition tr;
    tr.obs = obs;
    tr.actions.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.action_dim));
    RealMatrix env_actions(tr.actions.rows(), tr.actions.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (tabular()) {
        const int own = static_cast<int>(obs(r, 0));
        const int other = joint_obs ? static_cast<int>(obs(r, 1)) : 0;
        const double logit = tabular_logits_[(i * 4 + xor_obs_index(joint_obs, own, other)) * 2 +
                                             static_cast<std::size_t>(rec.skill.index)];
        const double p = sigmoid(logit / explore);
        tr.actions(r, 0) = p;
        env_actions(r, 0) = explore_rng_.bernoulli(p) ? 1.0 : 0.0;
        continue;
      }
      const auto a = act(team_.agents[i].actor, spec,
                         std::span<const double>(obs.row(r).data(), spec.obs_dim), enc, explore, explore_rng_);
      for (std::size_t d = 0; d < spec.action_dim; ++d) {
        tr.actions(r, static_cast<Eigen::Index>(d)) = a.relaxed[d];
        env_actions(r, static_cast<Eigen::Index>(d)) = a.env_action[d];
      }
    }
    StepResult step = env_->step(env_actions, env_rng_);
    const RealMatrix feats = env_->features(step.next_obs);
    const std::vector<double> joint = flatten(feats);

    double global_lp = 0.0, pseudo = 0.0;
    std::vector<double> locals(n, 0.0);
    if (options_.intrinsic) {
      global_lp = global_logprob(disc_, space_, joint, rec.skill);
      for (std::size_t i = 0; i < n; ++i) {
        locals[i] = local_logprob(disc_, space_, i,
                                  std::span<const double>(feats.row(static_cast<Eigen::Index>(i)).data(),
                                                          spec.feature_dim),
                                  rec.skill);
      }
      pseudo = pseudo_reward(reward_, global_lp, locals);
    }
    const double coef = options_.intrinsic ? config_.train.extrinsic_coef : 1.0;
    tr.skill_encoding = enc;
    tr.skill_label = rec.skill.index;
    tr.extrinsic = step.rewards;
    tr.rewards.resize(n);
    for (std::size_t i = 0; i < n; ++i) tr.rewards[i] = pseudo + coef * step.rewards[i];
    tr.next_obs = step.next_obs;
    // Particle episodes end on a time limit, so their last state still bootstraps.
    tr.done = is_xor() && step.done;
    if (!std::isfinite(pseudo)) {
      throw TrainingError("non-finite pseudo reward at episode " + std::to_string(episode_));
    }
    if (!tabular()) replay_rl_.push(tr);
    if (options_.intrinsic) replay_disc_.push(joint, enc, rec.skill.index);

    rec.pseudo_rewards.push_back(pseudo);
    rec.global_lps.push_back(global_lp);
    rec.local_lps.push_back(locals);
    rec.extrinsic_return += std::accumulate(step.rewards.begin(), step.rewards.end(), 0.0);
    if (particle) {
      for (std::size_t i = 0; i < n; ++i) rec.positions[i].push_back(particle->state().agent_pos[i]);
    }
    acc_.global_lp += global_lp;
    for (std::size_t i = 0; i < n; ++i) acc_.local_lp[i] += locals[i];
    acc_.pseudo += pseudo;
    ++acc_.steps;
    obs = std::move(step.next_obs);
  }
  acc_.extrinsic += rec.extrinsic_return;
  ++acc_.episodes;
  ++episode_;
  return rec;
}

RealMatrix Trainer::recompute_rewards(const RlBatch& batch) const {
  const std::size_t n = env_->spec().num_agents;
  const auto od = static_cast<Eigen::Index>(env_->spec().obs_dim);
  const auto fd = static_cast<Eigen::Index>(env_->spec().feature_dim);
  const Eigen::Index rows = batch.next_obs.rows();
  RealMatrix feats(rows, fd * static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    feats.middleCols(c * fd, fd) = batch.next_obs.middleCols(c * od, fd);
  }
  SkillTargets targets;
  if (space_.kind == SkillKind::kDiscrete) {
    targets.labels = batch.labels;
  } else {
    targets.values = batch.skill_encoding;
  }
  const RealMatrix lps = batch_logprobs(disc_, space_, feats, targets);
  RealMatrix rewards(rows, static_cast<Eigen::Index>(n));
  std::vector<double> locals(n);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n; ++i) locals[i] = lps(r, static_cast<Eigen::Index>(i + 1));
    const double pseudo = pseudo_reward(reward_, lps(r, 0), locals);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      rewards(r, c) = pseudo + config_.train.extrinsic_coef * batch.extrinsic(r, c);
    }
  }
  return rewards;
}

std::array<double, 8> Trainer::xor_outcome_rewards() const {
  std::array<double, 8> r{};
  for (int z = 0; z < 2; ++z) {
    const SkillCode code{z, {}};
    for (int y1 = 0; y1 < 2; ++y1) {
      for (int y2 = 0; y2 < 2; ++y2) {
        const std::array<double, 2> joint{static_cast<double>(y1), static_cast<double>(y2)};
        const std::array<double, 2> locals{
            local_logprob(disc_, space_, 0, std::span<const double>(&joint[0], 1), code),
            local_logprob(disc_, space_, 1, std::span<const double>(&joint[1], 1), code)};
        r[static_cast<std::size_t>(z * 4 + y1 * 2 + y2)] =
            pseudo_reward(reward_, global_logprob(disc_, space_, joint, code), locals);
      }
    }
  }
  return r;
}

// Exact policy gradient of the expected pseudo reward for the tabular
// policy: every (z, x, u) is enumerated, and d P(u) / d logit_i equals
// P(u) (u_i - p_i).
void Trainer::tabular_update() {
  const auto table = xor_outcome_rewards();
  const bool joint = config_.xor_game.joint_observation;
  std::vector<double> grad(tabular_logits_.size(), 0.0);
  auto logit_at = [&](std::size_t agent, std::size_t o, int z) -> std::size_t {
    return (agent * 4 + o) * 2 + static_cast<std::size_t>(z);
  };
  for (int z = 0; z < 2; ++z) {
    for (int x1 = 0; x1 < 2; ++x1) {
      for (int x2 = 0; x2 < 2; ++x2) {
        const std::size_t k1 = logit_at(0, xor_obs_index(joint, x1, x2), z);
        const std::size_t k2 = logit_at(1, xor_obs_index(joint, x2, x1), z);
        const double p1 = sigmoid(tabular_logits_[k1]);
        const double p2 = sigmoid(tabular_logits_[k2]);
        for (int u1 = 0; u1 < 2; ++u1) {
          for (int u2 = 0; u2 < 2; ++u2) {
            const double pu = (u1 ? p1 : 1.0 - p1) * (u2 ? p2 : 1.0 - p2);
            const double w = 0.5 * 0.25 * pu * table[static_cast<std::size_t>(z * 4 + (x1 ^ u1) * 2 + (x2 ^ u2))];
            grad[k1] += w * (u1 - p1);
            grad[k2] += w * (u2 - p2);
          }
        }
      }
    }
  }
  for (std::size_t k = 0; k < grad.size(); ++k) tabular_logits_[k] += config_.xor_game.tabular_lr * grad[k];
}

void Trainer::update_round() {
  const auto& t = config_.train;
  const std::size_t stored = tabular() ? replay_disc_.size() : replay_rl_.size();
  if (stored < std::max<std::size_t>(t.warmup, 1)) return;

  double td = 0.0;
  if (tabular()) {
    tabular_update();
  } else {
    RlBatch batch = replay_rl_.sample(t.batch_size, replay_rng_);
    if (options_.intrinsic && config_.reward.recompute_at_train) batch.rewards = recompute_rewards(batch);
    td = critic_update(team_, batch, t);
    for (std::size_t i = 0; i < team_.agents.size(); ++i) actor_update(team_, i, batch, t);
    soft_update_targets(team_, t.tau);
    if (!std::isfinite(td)) {
      throw TrainingError("non-finite TD loss at episode " + std::to_string(episode_));
    }
  }
  if (options_.intrinsic) {
    for (std::size_t d = 0; d < t.disc_updates_per_round; ++d) {
      const DiscBatch b = replay_disc_.sample(t.disc_batch_size, space_, replay_rng_);
      const DiscLosses l = discriminator_update(disc_, space_, b.features, b.targets, t.grad_clip);
      if (!std::isfinite(l.global)) {
        throw TrainingError("non-finite discriminator loss at episode " + std::to_string(episode_));
      }
      acc_.disc_losses[0] += l.global / static_cast<double>(t.disc_updates_per_round);
      for (std::size_t i = 0; i < l.locals.size(); ++i) {
        acc_.disc_losses[i + 1] += l.locals[i] / static_cast<double>(t.disc_updates_per_round);
      }
    }
  }
  acc_.td_loss += td;
  ++acc_.rounds;
  ++update_rounds_;
}

MetricsRecord Trainer::flush_metrics() {
  MetricsRecord m;
  m.episode = episode_;
  m.active_k = space_.kind == SkillKind::kDiscrete ? space_.active_k : 0;
  const double steps = std::max<double>(1.0, static_cast<double>(acc_.steps));
  const double rounds = std::max<double>(1.0, static_cast<double>(acc_.rounds));
  m.mean_global_lp = acc_.global_lp / steps;
  for (double v : acc_.local_lp) m.mean_local_lp.push_back(v / steps);
  m.pseudo_reward_mean = acc_.pseudo / steps;
  m.td_loss = acc_.td_loss / rounds;
  for (double v : acc_.disc_losses) m.disc_losses.push_back(v / rounds);
  if (is_xor()) {
    const XorMi mi = exact_mi_xor(xor_policy_table());
    m.mi_global = mi.global;
    m.mi_local = std::vector<double>{mi.local[0], mi.local[1]};
  } else {
    m.extrinsic_reward = acc_.extrinsic / std::max<double>(1.0, static_cast<double>(acc_.episodes));
  }
  const std::size_t n = env_->spec().num_agents;
  acc_ = Accumulator{};
  acc_.local_lp.assign(n, 0.0);
  acc_.disc_losses.assign(n + 1, 0.0);
  return m;
}

void Trainer::train_until(std::size_t total_episodes, MetricsWriter* metrics,
                          const std::function<void(const Trainer&)>& on_checkpoint) {
  const auto& t = config_.train;
  while (episode_ < total_episodes) {
    run_episode();
    for (std::size_t u = 0; u < t.updates_per_episode; ++u) update_round();
    if (episode_ % t.eval_interval == 0) {
      for (const auto& a : team_.agents) {
        if (!a.actor.all_finite() || !a.critic.all_finite()) {
          throw TrainingError("non-finite network parameters at episode " + std::to_string(episode_));
        }
      }
      const MetricsRecord m = flush_metrics();
      if (metrics) metrics->append(m);
      if (options_.intrinsic && config_.curriculum.enabled && space_.kind == SkillKind::kDiscrete) {
        curriculum_.maybe_expand(space_, m.mean_global_lp);
      }
    }
    if (t.checkpoint_interval != 0 && episode_ % t.checkpoint_interval == 0 && on_checkpoint) {
      on_checkpoint(*this);
    }
  }
}

Rollout Trainer::rollout(const SkillCode& skill, const std::optional<Snapshot>& init, Rng& rng) const {
  const auto* particle = dynamic_cast<const ParticleEnv*>(env_.get());
  if (!particle) throw std::logic_error("Trainer::rollout: particle tasks only");
  ParticleEnv env(particle->config());
  const EnvSpec& spec = env.spec();
  const std::vector<double> enc = encode_skill(space_, skill);
  RealMatrix obs = init ? env.reset_to(*init, rng) : env.reset(rng);
  Rollout out;
  out.trajectory.skill = skill.index;
  out.trajectory.seed = seed_;
  out.trajectory.agents.resize(spec.num_agents);
  auto record = [&] {
    for (std::size_t i = 0; i < spec.num_agents; ++i) out.trajectory.agents[i].push_back(env.state().agent_pos[i]);
  };
  record();
  for (std::size_t t = 0; t < spec.episode_length; ++t) {
    RealMatrix actions(static_cast<Eigen::Index>(spec.num_agents), static_cast<Eigen::Index>(spec.action_dim));
    for (std::size_t i = 0; i < spec.num_agents; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto a = act(team_.agents[i].actor, spec, std::span<const double>(obs.row(r).data(), spec.obs_dim),
                         enc, 0.0, rng);
      for (std::size_t d = 0; d < spec.action_dim; ++d) actions(r, static_cast<Eigen::Index>(d)) = a.env_action[d];
    }
    StepResult step = env.step(actions, rng);
    out.extrinsic_return += std::accumulate(step.rewards.begin(), step.rewards.end(), 0.0);
    obs = std::move(step.next_obs);
    record();
  }
  return out;
}

XorPolicyTable Trainer::xor_policy_table() const {
  if (!is_xor()) throw std::logic_error("Trainer::xor_policy_table: xor task only");
  const bool joint = config_.xor_game.joint_observation;
  XorPolicyTable table{};
  for (std::size_t agent = 0; agent < 2; ++agent) {
    for (int x1 = 0; x1 < 2; ++x1) {
      for (int x2 = 0; x2 < 2; ++x2) {
        const int own = agent == 0 ? x1 : x2;
        const int other = agent == 0 ? x2 : x1;
        for (int z = 0; z < 2; ++z) {
          double p;
          if (tabular()) {
            p = sigmoid(tabular_logits_[(agent * 4 + xor_obs_index(joint, own, other)) * 2 +
                                        static_cast<std::size_t>(z)]);
          } else {
            const std::vector<double> enc = encode_skill(space_, SkillCode{z, {}});
            RealMatrix in(1, static_cast<Eigen::Index>(team_.actor_input_dim()));
            in(0, 0) = own;
            if (joint) in(0, 1) = other;
            std::copy(enc.begin(), enc.end(), in.data() + env_->spec().obs_dim);
            p = policy_output(team_.agents[agent].actor, ActionKind::kBinary, in)(0, 0);
          }
          table[agent][static_cast<std::size_t>(x1)][static_cast<std::size_t>(x2)][static_cast<std::size_t>(z)] = p;
        }
      }
    }
  }
  return table;
}

void Trainer::bind(StateBinder& b, unsigned parts) {
  const EnvSpec& spec = env_->spec();
  if (parts & kMeta) {
    b.constant("meta.task", static_cast<std::uint64_t>(config_.task));
    b.constant("meta.num_agents", spec.num_agents);
    b.constant("meta.obs_dim", spec.obs_dim);
    b.constant("meta.action_dim", spec.action_dim);
    b.constant("meta.encoding_dim", space_.encoding_dim());
    b.constant("meta.skill_kind", static_cast<std::uint64_t>(space_.kind));
    b.constant("meta.tabular", tabular() ? 1 : 0);
    if (space_.kind == SkillKind::kDiscrete) {
      std::size_t k = space_.active_k;
      b.size("skills.active_k", k);
      const auto stored = b.peek("skills.active_k", k);
      if (stored < 1 || stored > space_.k_max) {
        throw CheckpointError("checkpoint has an invalid active skill count");
      }
      if (b.mode() == StateBinder::Mode::kLoad) space_.active_k = k;
    }
  }
  for (std::size_t i = 0; i < team_.agents.size(); ++i) {
    auto& a = team_.agents[i];
    const std::string p = "agent" + std::to_string(i);
    if (parts & kActors) {
      b.mlp(p + ".actor", a.actor);
      b.mlp(p + ".actor_target", a.actor_target);
      b.adam(p + ".actor_opt", a.actor_opt);
    }
    if (parts & kCritics) {
      b.mlp(p + ".critic", a.critic);
      b.mlp(p + ".critic_target", a.critic_target);
      b.adam(p + ".critic_opt", a.critic_opt);
    }
  }
  if (!(parts & kRest)) return;
  if (tabular()) b.vec("tabular.logits", tabular_logits_);
  b.mlp("disc.global", disc_.global);
  b.adam("disc.global_opt", disc_.global_opt);
  for (std::size_t i = 0; i < disc_.locals.size(); ++i) {
    b.mlp("disc.local" + std::to_string(i), disc_.locals[i]);
    b.adam("disc.local_opt" + std::to_string(i), disc_.local_opts[i]);
  }
  b.ring("replay.rl", replay_rl_.ring());
  b.ring("replay.disc", replay_disc_.ring());
  b.rng("rng.init", init_rng_);
  b.rng("rng.env", env_rng_);
  b.rng("rng.explore", explore_rng_);
  b.rng("rng.replay", replay_rng_);
  b.size("state.episode", episode_);
  b.size("state.update_rounds", update_rounds_);
  std::size_t consecutive = curriculum_.consecutive();
  b.size("state.curriculum_consecutive", consecutive);
  if (b.mode() == StateBinder::Mode::kLoad) curriculum_.set_consecutive(consecutive);

  // Partial interval statistics, so saving mid-interval still resumes exactly.
  std::uint64_t counts[3] = {acc_.episodes, acc_.steps, acc_.rounds};
  b.u64("state.acc_counts", counts, 3);
  std::vector<double> sums{acc_.global_lp, acc_.pseudo, acc_.extrinsic, acc_.td_loss};
  sums.insert(sums.end(), acc_.local_lp.begin(), acc_.local_lp.end());
  sums.insert(sums.end(), acc_.disc_losses.begin(), acc_.disc_losses.end());
  b.vec("state.acc_sums", sums);
  if (b.mode() == StateBinder::Mode::kLoad) {
    acc_.episodes = counts[0];
    acc_.steps = counts[1];
    acc_.rounds = counts[2];
    acc_.global_lp = sums[0];
    acc_.pseudo = sums[1];
    acc_.extrinsic = sums[2];
    acc_.td_loss = sums[3];
    const std::size_t n = acc_.local_lp.size();
    std::copy_n(sums.begin() + 4, n, acc_.local_lp.begin());
    std::copy_n(sums.begin() + 4 + static_cast<std::ptrdiff_t>(n), n + 1, acc_.disc_losses.begin());
  }
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint ck;
  StateBinder b(StateBinder::Mode::kSave, ck);
  // Save mode only reads the members it is handed.
  const_cast<Trainer*>(this)->bind(b, kAll);
  return ck;
}

void Trainer::restore(const Checkpoint& checkpoint) {
  auto& ck = const_cast<Checkpoint&>(checkpoint);  // check and load modes never write to it
  StateBinder check(StateBinder::Mode::kCheck, ck);
  bind(check, kAll);
  StateBinder load(StateBinder::Mode::kLoad, ck);
  bind(load, kAll);
}

void Trainer::load_policies(const Checkpoint& checkpoint, bool include_critics) {
  auto& ck = const_cast<Checkpoint&>(checkpoint);
  const unsigned parts = kMeta | kActors | (include_critics ? kCritics : 0u);
  StateBinder check(StateBinder::Mode::kCheck, ck);
  bind(check, parts);
  StateBinder load(StateBinder::Mode::kLoad, ck);
  bind(load, parts);
}

std::vector<double> evaluate_skills(const Trainer& trainer, std::size_t episodes, Rng& rng) {
  const SkillSpace& space = trainer.skill_space();
  if (space.kind != SkillKind::kDiscrete) throw std::logic_error("evaluate_skills: discrete skills only");
  std::vector<double> out;
  for (std::size_t k = 0; k < space.active_k; ++k) {
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      total += trainer.rollout(SkillCode{static_cast<int>(k), {}}, std::nullopt, rng).extrinsic_return;
    }
    out.push_back(total / static_cast<double>(episodes));
  }
  return out;
}

int select_skill(std::span<const double> returns) {
  if (returns.empty()) throw std::invalid_argument("select_skill: no candidates");
  return static_cast<int>(std::max_element(returns.begin(), returns.end()) - returns.begin());
}

FinetuneResult finetune(const ExperimentConfig& config, const std::optional<Checkpoint>& pretrained,
                        std::uint64_t seed) {
  ExperimentConfig c = config;
  c.curriculum.enabled = false;
  FinetuneResult result;
  TrainerOptions options;
  options.intrinsic = false;
  options.fixed_skill = SkillCode{0, {}};
  if (c.skills.kind != SkillKind::kDiscrete) throw ConfigError("skills.kind", "finetuning needs discrete skills");

  std::optional<int> chosen;
  if (pretrained) {
    Trainer probe(c, seed, options);
    probe.load_policies(*pretrained, c.finetune.load_critics);
    // Selection uses its own stream so both arms see identical training episodes.
    Rng select_rng(seed ^ 0x5eedf00dULL);
    result.selection_returns = evaluate_skills(probe, c.finetune.selection_episodes, select_rng);
    chosen = select_skill(result.selection_returns);
    result.selected_skill = chosen;
    options.fixed_skill = SkillCode{*chosen, {}};
  }
  Trainer trainer(c, seed, options);
  if (pretrained) trainer.load_policies(*pretrained, c.finetune.load_critics);
  for (std::size_t e = 0; e < c.finetune.episodes; ++e) {
    result.episode_returns.push_back(trainer.run_episode().extrinsic_return);
    for (std::size_t u = 0; u < c.train.updates_per_episode; ++u) trainer.update_round();
  }
  const std::size_t w = std::min(c.finetune.final_window, result.episode_returns.size());
  if (w > 0) {
    result.final_window_mean =
        std::accumulate(result.episode_returns.end() - static_cast<std::ptrdiff_t>(w),
                        result.episode_returns.end(), 0.0) / static_cast<double>(w);
  }
  return result;
}

}  // namespace masd
