#include "masd/maddpg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace masd {
namespace {

// Keeps binary-head logits from saturating, which would stall the actor
// gradient through the sigmoid.
constexpr double kLogitPenalty = 1e-4;

RealMatrix sigmoid_rows(const RealMatrix& logits) {
  return logits.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

Team make_team(const EnvSpec& spec, std::size_t enc_dim, const TrainConfig& config, Rng& rng) {
  Team team;
  team.spec = spec;
  team.enc_dim = enc_dim;
  const MlpSpec actor_spec{{team.actor_input_dim(), config.hidden, config.hidden, spec.action_dim},
                           Activation::kRelu,
                           spec.action_kind == ActionKind::kContinuous ? OutputActivation::kTanh
                                                                       : OutputActivation::kIdentity};
  const MlpSpec critic_spec{{team.critic_input_dim(), config.hidden, config.hidden, 1},
                            Activation::kRelu, OutputActivation::kIdentity};
  for (std::size_t i = 0; i < spec.num_agents; ++i) {
    AgentNets a;
    a.actor = mlp_init(actor_spec, rng);
    a.critic = mlp_init(critic_spec, rng);
    a.actor_target = a.actor;
    a.critic_target = a.critic;
    a.actor_opt = adam_init(a.actor, config.actor_lr);
    a.critic_opt = adam_init(a.critic, config.critic_lr);
    team.agents.push_back(std::move(a));
  }
  return team;
}

RealMatrix policy_output(const MlpParams& actor, ActionKind kind, const RealMatrix& input,
                         MlpCache* cache) {
  RealMatrix out = mlp_forward(actor, input, cache);
  return kind == ActionKind::kBinary ? sigmoid_rows(out) : out;
}

ActResult act(const MlpParams& actor, const EnvSpec& spec, std::span<const double> obs,
              std::span<const double> skill_encoding, double exploration, Rng& rng) {
  if (obs.size() != spec.obs_dim) throw std::invalid_argument("act: observation width mismatch");
  RealMatrix in(1, static_cast<Eigen::Index>(obs.size() + skill_encoding.size()));
  std::copy(obs.begin(), obs.end(), in.data());
  std::copy(skill_encoding.begin(), skill_encoding.end(), in.data() + obs.size());
  const RealMatrix out = mlp_forward(actor, in);
  ActResult r;
  r.relaxed.resize(spec.action_dim);
  r.env_action.resize(spec.action_dim);
  for (std::size_t d = 0; d < spec.action_dim; ++d) {
    const double o = out(0, static_cast<Eigen::Index>(d));
    if (spec.action_kind == ActionKind::kContinuous) {
      const double a = exploration > 0.0 ? std::clamp(o + exploration * rng.normal(), -1.0, 1.0) : o;
      r.relaxed[d] = a;
      r.env_action[d] = a;
    } else if (exploration > 0.0) {
      const double p = sigmoid(o / exploration);
      r.relaxed[d] = p;
      r.env_action[d] = rng.bernoulli(p) ? 1.0 : 0.0;
    } else {
      const double p = sigmoid(o);
      r.relaxed[d] = p;
      r.env_action[d] = p > 0.5 ? 1.0 : 0.0;
    }
  }
  return r;
}

RealMatrix actor_inputs(const Team& team, std::size_t agent, const RealMatrix& joint_obs,
                        const RealMatrix& skill_encoding) {
  const auto od = static_cast<Eigen::Index>(team.spec.obs_dim);
  RealMatrix in(joint_obs.rows(), od + skill_encoding.cols());
  in << joint_obs.middleCols(static_cast<Eigen::Index>(agent) * od, od), skill_encoding;
  return in;
}

RealMatrix critic_inputs(const RealMatrix& joint_obs, const RealMatrix& joint_actions,
                         const RealMatrix& skill_encoding) {
  RealMatrix in(joint_obs.rows(), joint_obs.cols() + joint_actions.cols() + skill_encoding.cols());
  in << joint_obs, joint_actions, skill_encoding;
  return in;
}

RealMatrix target_actions(const Team& team, const RlBatch& batch) {
  const auto ad = static_cast<Eigen::Index>(team.spec.action_dim);
  RealMatrix out(batch.next_obs.rows(), ad * static_cast<Eigen::Index>(team.agents.size()));
  for (std::size_t j = 0; j < team.agents.size(); ++j) {
    out.middleCols(static_cast<Eigen::Index>(j) * ad, ad) =
        policy_output(team.agents[j].actor_target, team.spec.action_kind,
                      actor_inputs(team, j, batch.next_obs, batch.skill_encoding));
  }
  return out;
}

CriticLoss critic_loss(const Team& team, std::size_t agent, const RlBatch& batch,
                       const RealMatrix& next_actions, double gamma) {
  const auto& nets = team.agents.at(agent);
  const auto i = static_cast<Eigen::Index>(agent);
  const RealMatrix q_next =
      mlp_forward(nets.critic_target, critic_inputs(batch.next_obs, next_actions, batch.skill_encoding));
  const Eigen::VectorXd y =
      batch.rewards.col(i) + gamma * (1.0 - batch.done.array()).matrix().cwiseProduct(q_next.col(0));
  MlpCache cache;
  const RealMatrix q = mlp_forward(nets.critic, critic_inputs(batch.obs, batch.actions, batch.skill_encoding), &cache);
  const Eigen::VectorXd err = q.col(0) - y;
  const double b = static_cast<double>(q.rows());
  CriticLoss out;
  out.loss = err.squaredNorm() / b;
  RealMatrix upstream = (2.0 / b) * err;
  out.grads = mlp_backward(nets.critic, cache, upstream).layers;
  return out;
}

double critic_update(Team& team, const RlBatch& batch, const TrainConfig& config) {
  const RealMatrix next = target_actions(team, batch);
  double total = 0.0;
  for (std::size_t i = 0; i < team.agents.size(); ++i) {
    auto l = critic_loss(team, i, batch, next, config.gamma);
    clip_grad_norm(l.grads, config.grad_clip);
    adam_step(team.agents[i].critic, l.grads, team.agents[i].critic_opt);
    total += l.loss;
  }
  return total / static_cast<double>(team.agents.size());
}

ActorLoss actor_loss(const Team& team, std::size_t agent, const RlBatch& batch) {
  const auto& nets = team.agents.at(agent);
  const auto ad = static_cast<Eigen::Index>(team.spec.action_dim);
  const auto off = static_cast<Eigen::Index>(agent) * ad;
  const bool binary = team.spec.action_kind == ActionKind::kBinary;

  MlpCache actor_cache;
  const RealMatrix raw = mlp_forward(nets.actor, actor_inputs(team, agent, batch.obs, batch.skill_encoding),
                                     &actor_cache);
  const RealMatrix a = binary ? sigmoid_rows(raw) : raw;
  RealMatrix joint = batch.actions;
  joint.middleCols(off, ad) = a;

  MlpCache critic_cache;
  const RealMatrix q = mlp_forward(nets.critic, critic_inputs(batch.obs, joint, batch.skill_encoding), &critic_cache);
  const double b = static_cast<double>(q.rows());
  const RealMatrix dq = mlp_backward(nets.critic, critic_cache, RealMatrix::Constant(q.rows(), 1, -1.0 / b)).input;
  const auto action_col = batch.obs.cols() + off;
  RealMatrix upstream = dq.middleCols(action_col, ad);

  ActorLoss out;
  out.loss = -q.mean();
  if (binary) {
    upstream = upstream.cwiseProduct(a.cwiseProduct((1.0 - a.array()).matrix()));
    upstream += (2.0 * kLogitPenalty / b) * raw;
    out.loss += kLogitPenalty * raw.squaredNorm() / b;
  }
  out.grads = mlp_backward(nets.actor, actor_cache, upstream).layers;
  return out;
}

double actor_update(Team& team, std::size_t agent, const RlBatch& batch, const TrainConfig& config) {
  auto l = actor_loss(team, agent, batch);
  clip_grad_norm(l.grads, config.grad_clip);
  adam_step(team.agents[agent].actor, l.grads, team.agents[agent].actor_opt);
  return l.loss;
}

void soft_update_targets(Team& team, double tau) {
  for (auto& a : team.agents) {
    soft_update(a.actor_target, a.actor, tau);
    soft_update(a.critic_target, a.critic, tau);
  }
}

}  // namespace masd
