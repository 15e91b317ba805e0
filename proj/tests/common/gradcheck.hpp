#pragma once

// Finite-difference checks of the actor, critic and discriminator gradients
// on randomly generated instances. Shared by the unit and acceptance tests.

#include <cmath>
#include <vector>

#include "masd/maddpg.hpp"
#include "masd/skills.hpp"
#include "oracles.hpp"

namespace gradcheck {

using namespace masd;

/// Pointers to every scalar parameter, in the same order as flatten().
inline std::vector<double*> parameters(MlpParams& p) {
  std::vector<double*> out;
  for (auto& l : p.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) out.push_back(l.weight.data() + i);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
  }
  return out;
}

inline std::vector<double> flatten(const ParamTensors& g) {
  std::vector<double> out;
  for (const auto& l : g) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over all
/// parameters of `net`, with `loss` re-evaluated after each perturbation.
template <class Loss>
double relative_error(MlpParams& net, const ParamTensors& analytic, Loss&& loss) {
  const auto a = flatten(analytic);
  const auto params = parameters(net);
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double fd = oracles::central_difference(loss, *params[k]);
    diff += (a[k] - fd) * (a[k] - fd);
    na += a[k] * a[k];
    nn += fd * fd;
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / scale;
}

inline EnvSpec random_spec(Rng& rng, ActionKind kind) {
  EnvSpec s;
  s.num_agents = 1 + rng.index(3);
  s.obs_dim = 1 + rng.index(5);
  s.action_dim = kind == ActionKind::kBinary ? 1 : 1 + rng.index(2);
  s.feature_dim = 1;
  s.episode_length = 1;
  s.action_kind = kind;
  return s;
}

inline RlBatch random_batch(const Team& team, std::size_t b, Rng& rng) {
  const auto& s = team.spec;
  const auto rows = static_cast<Eigen::Index>(b);
  const auto n = static_cast<Eigen::Index>(s.num_agents);
  auto fill = [&](Eigen::Index cols, double lo, double hi) {
    RealMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    return m;
  };
  const double act_lo = s.action_kind == ActionKind::kBinary ? 0.0 : -1.0;
  RlBatch batch;
  batch.obs = fill(n * static_cast<Eigen::Index>(s.obs_dim), -1, 1);
  batch.next_obs = fill(n * static_cast<Eigen::Index>(s.obs_dim), -1, 1);
  batch.actions = fill(n * static_cast<Eigen::Index>(s.action_dim), act_lo, 1);
  batch.rewards = fill(n, -2, 2);
  batch.extrinsic = RealMatrix::Zero(rows, n);
  batch.skill_encoding = RealMatrix::Zero(rows, static_cast<Eigen::Index>(team.enc_dim));
  batch.done.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto z = static_cast<int>(rng.index(team.enc_dim));
    batch.labels.push_back(z);
    batch.skill_encoding(r, z) = 1.0;
    batch.done(r) = rng.bernoulli(0.2) ? 1.0 : 0.0;
  }
  return batch;
}

// Zero-initialized biases put whole batches exactly on a relu kink whenever
// an earlier layer is dead, where one-sided and central differences disagree.
inline void randomize_biases(MlpParams& p, Rng& rng) {
  for (auto& l : p.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.uniform(-0.5, 0.5);
}

inline Team random_team(Rng& rng, ActionKind kind) {
  TrainConfig tc;
  tc.hidden = 4 + rng.index(5);
  const EnvSpec spec = random_spec(rng, kind);
  Team team = make_team(spec, 2 + rng.index(3), tc, rng);
  for (auto& a : team.agents) {
    randomize_biases(a.actor, rng);
    randomize_biases(a.critic, rng);
    randomize_biases(a.critic_target, rng);
    randomize_biases(a.actor_target, rng);
  }
  return team;
}

/// One random critic instance: relative error of agent i's critic gradient.
inline double critic_instance(Rng& rng) {
  const auto kind = rng.bernoulli(0.5) ? ActionKind::kBinary : ActionKind::kContinuous;
  Team team = random_team(rng, kind);
  const RlBatch batch = random_batch(team, 2 + rng.index(6), rng);
  const std::size_t i = rng.index(team.agents.size());
  const RealMatrix next = target_actions(team, batch);
  const double gamma = rng.uniform(0.5, 0.99);
  const auto analytic = critic_loss(team, i, batch, next, gamma).grads;
  return relative_error(team.agents[i].critic, analytic,
                        [&] { return critic_loss(team, i, batch, next, gamma).loss; });
}

/// One random actor instance, alternating binary and continuous heads.
inline double actor_instance(Rng& rng) {
  const auto kind = rng.bernoulli(0.5) ? ActionKind::kBinary : ActionKind::kContinuous;
  Team team = random_team(rng, kind);
  const RlBatch batch = random_batch(team, 2 + rng.index(6), rng);
  const std::size_t i = rng.index(team.agents.size());
  const auto analytic = actor_loss(team, i, batch).grads;
  return relative_error(team.agents[i].actor, analytic, [&] { return actor_loss(team, i, batch).loss; });
}

/// One random discriminator instance; returns the worst error across the
/// global and local heads. `loss` selects cross entropy, L1 or L2.
inline double discriminator_instance(Rng& rng, DiscLoss loss) {
  const bool discrete = loss == DiscLoss::kCrossEntropy;
  const std::size_t k_max = 2 + rng.index(5);
  const SkillSpace space = discrete ? SkillSpace::discrete(k_max, 1 + rng.index(k_max))
                                    : SkillSpace::continuous(1 + rng.index(3));
  const std::size_t n = 1 + rng.index(3), fd = 1 + rng.index(4);
  DiscriminatorSet disc = make_discriminators(space, n, fd, 3 + rng.index(6), 1e-3, loss, rng);
  const std::size_t b = 2 + rng.index(6);
  RealMatrix features(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(n * fd));
  for (Eigen::Index i = 0; i < features.size(); ++i) features.data()[i] = rng.uniform(-2, 2);
  SkillTargets targets;
  if (discrete) {
    for (std::size_t r = 0; r < b; ++r) targets.labels.push_back(static_cast<int>(rng.index(space.active_k)));
  } else {
    targets.values.resize(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(space.dim));
    for (Eigen::Index i = 0; i < targets.values.size(); ++i) targets.values.data()[i] = rng.uniform(-1, 1);
  }
  const DiscGradients g = discriminator_gradients(disc, space, features, targets);
  double worst = relative_error(disc.global, g.global, [&] {
    return discriminator_losses(disc, space, features, targets).global;
  });
  for (std::size_t i = 0; i < n; ++i) {
    worst = std::max(worst, relative_error(disc.locals[i], g.locals[i], [&] {
                       return discriminator_losses(disc, space, features, targets).locals[i];
                     }));
  }
  return worst;
}

}  // namespace gradcheck
