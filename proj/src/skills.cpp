#include "masd/skills.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace masd {
namespace {

MlpSpec disc_spec(std::size_t in, std::size_t hidden, std::size_t out, DiscLoss loss) {
  return {{in, hidden, hidden, out},
          Activation::kTanh,
          loss == DiscLoss::kCrossEntropy ? OutputActivation::kSoftmaxLogits
                                          : OutputActivation::kIdentity};
}

ContinuousLoss as_continuous(DiscLoss loss) {
  return loss == DiscLoss::kL1 ? ContinuousLoss::kL1 : ContinuousLoss::kL2;
}

double discrete_logprob(std::span<const double> logits, std::size_t active, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= active) {
    throw std::out_of_range("skill label outside the active categories");
  }
  const double lp = categorical_logprob(logits.first(active), static_cast<std::size_t>(label));
  return std::max(lp, kLogProbFloor);
}

double head_logprob(const MlpParams& net, const SkillSpace& space, DiscLoss loss,
                    std::span<const double> input, const SkillCode& z) {
  RealMatrix x = Eigen::Map<const RowVector>(input.data(), static_cast<Eigen::Index>(input.size()));
  const RealMatrix out = mlp_forward(net, x);
  std::span<const double> pred(out.data(), static_cast<std::size_t>(out.cols()));
  if (space.kind == SkillKind::kDiscrete) return discrete_logprob(pred, space.active_k, z.index);
  return continuous_logprob(pred, z.values, as_continuous(loss));
}

void check_targets(const SkillSpace& space, const RealMatrix& features,
                   const SkillTargets& targets) {
  const auto b = static_cast<std::size_t>(features.rows());
  if (b == 0) throw std::invalid_argument("discriminator batch is empty");
  if (space.kind == SkillKind::kDiscrete) {
    if (targets.labels.size() != b) throw std::invalid_argument("discriminator batch: label count");
    for (int y : targets.labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= space.active_k) {
        throw std::invalid_argument("discriminator batch: label outside active skills");
      }
    }
  } else if (static_cast<std::size_t>(targets.values.rows()) != b ||
             static_cast<std::size_t>(targets.values.cols()) != space.dim) {
    throw std::invalid_argument("discriminator batch: continuous target shape");
  }
}

// Loss of one head and its gradient with respect to the head output.
double head_loss(const RealMatrix& out, const SkillSpace& space, DiscLoss loss,
                 const SkillTargets& targets, RealMatrix* grad) {
  if (space.kind == SkillKind::kDiscrete) {
    return cross_entropy(out, targets.labels, space.active_k, grad);
  }
  const RealMatrix diff = out - targets.values;
  const double inv_b = 1.0 / static_cast<double>(out.rows());
  if (loss == DiscLoss::kL1) {
    if (grad) *grad = diff.array().sign() * inv_b;
    return diff.array().abs().sum() * inv_b;
  }
  if (grad) *grad = 2.0 * diff * inv_b;
  return diff.squaredNorm() * inv_b;
}

ParamTensors head_gradients(const MlpParams& net, const RealMatrix& input, const SkillSpace& space,
                            DiscLoss loss, const SkillTargets& targets, double* value) {
  MlpCache cache;
  const RealMatrix out = mlp_forward(net, input, &cache);
  RealMatrix grad;
  *value = head_loss(out, space, loss, targets, &grad);
  return mlp_backward(net, cache, grad).layers;
}

}  // namespace

SkillSpace SkillSpace::discrete(std::size_t k_max, std::size_t active_k) {
  SkillSpace s;
  s.kind = SkillKind::kDiscrete;
  s.k_max = k_max;
  s.active_k = active_k;
  s.validate();
  return s;
}

SkillSpace SkillSpace::continuous(std::size_t dim) {
  SkillSpace s;
  s.kind = SkillKind::kContinuous;
  s.dim = dim;
  s.k_max = 0;
  s.active_k = 0;
  s.validate();
  return s;
}

void SkillSpace::validate() const {
  if (kind == SkillKind::kDiscrete) {
    if (k_max < 1 || active_k < 1 || active_k > k_max) {
      throw std::invalid_argument("skill space: need 1 <= active_k <= k_max");
    }
  } else if (dim < 1) {
    throw std::invalid_argument("skill space: continuous dimension must be positive");
  }
}

SkillCode sample_skill(const SkillSpace& space, Rng& rng) {
  SkillCode z;
  if (space.kind == SkillKind::kDiscrete) {
    z.index = static_cast<int>(rng.index(space.active_k));
  } else {
    z.values.resize(space.dim);
    for (auto& v : z.values) v = rng.uniform(-1.0, 1.0);
  }
  return z;
}

std::vector<double> encode_skill(const SkillSpace& space, const SkillCode& z) {
  if (space.kind == SkillKind::kDiscrete) {
    if (z.index < 0 || static_cast<std::size_t>(z.index) >= space.k_max) {
      throw std::out_of_range("encode_skill: index outside k_max");
    }
    std::vector<double> enc(space.k_max, 0.0);
    enc[static_cast<std::size_t>(z.index)] = 1.0;
    return enc;
  }
  if (z.values.size() != space.dim) throw std::invalid_argument("encode_skill: dimension");
  return z.values;
}

DiscriminatorSet make_discriminators(const SkillSpace& space, std::size_t num_agents,
                                     std::size_t feature_dim, std::size_t hidden, double lr,
                                     DiscLoss loss, Rng& rng) {
  space.validate();
  if ((space.kind == SkillKind::kDiscrete) != (loss == DiscLoss::kCrossEntropy)) {
    throw std::invalid_argument(
        "discriminator loss must be cross entropy for discrete skills and L1/L2 otherwise");
  }
  const std::size_t out = space.encoding_dim();
  DiscriminatorSet d;
  d.loss_kind = loss;
  d.feature_dim = feature_dim;
  d.global = mlp_init(disc_spec(num_agents * feature_dim, hidden, out, loss), rng);
  d.global_opt = adam_init(d.global, lr);
  for (std::size_t i = 0; i < num_agents; ++i) {
    d.locals.push_back(mlp_init(disc_spec(feature_dim, hidden, out, loss), rng));
    d.local_opts.push_back(adam_init(d.locals.back(), lr));
  }
  return d;
}

double global_logprob(const DiscriminatorSet& disc, const SkillSpace& space,
                      std::span<const double> joint_features, const SkillCode& z) {
  if (joint_features.size() != disc.num_agents() * disc.feature_dim) {
    throw std::invalid_argument("global_logprob: feature dimension mismatch");
  }
  return head_logprob(disc.global, space, disc.loss_kind, joint_features, z);
}

double local_logprob(const DiscriminatorSet& disc, const SkillSpace& space,
                     std::size_t agent_index, std::span<const double> feature,
                     const SkillCode& z) {
  if (agent_index >= disc.num_agents()) throw std::out_of_range("local_logprob: agent index");
  if (feature.size() != disc.feature_dim) {
    throw std::invalid_argument("local_logprob: feature dimension mismatch");
  }
  return head_logprob(disc.locals[agent_index], space, disc.loss_kind, feature, z);
}

RealMatrix batch_logprobs(const DiscriminatorSet& disc, const SkillSpace& space,
                          const RealMatrix& features, const SkillTargets& targets) {
  check_targets(space, features, targets);
  const std::size_t n = disc.num_agents();
  const auto fd = static_cast<Eigen::Index>(disc.feature_dim);
  const Eigen::Index b = features.rows();
  RealMatrix out(b, static_cast<Eigen::Index>(n + 1));
  auto fill = [&](Eigen::Index col, const RealMatrix& pred) {
    for (Eigen::Index r = 0; r < b; ++r) {
      std::span<const double> row(pred.row(r).data(), static_cast<std::size_t>(pred.cols()));
      if (space.kind == SkillKind::kDiscrete) {
        out(r, col) = discrete_logprob(row, space.active_k, targets.labels[static_cast<std::size_t>(r)]);
      } else {
        std::span<const double> zv(targets.values.row(r).data(), space.dim);
        out(r, col) = continuous_logprob(row, zv, as_continuous(disc.loss_kind));
      }
    }
  };
  fill(0, mlp_forward(disc.global, features));
  for (std::size_t i = 0; i < n; ++i) {
    const RealMatrix local_in = features.middleCols(static_cast<Eigen::Index>(i) * fd, fd);
    fill(static_cast<Eigen::Index>(i + 1), mlp_forward(disc.locals[i], local_in));
  }
  return out;
}

double pseudo_reward(const PseudoRewardConfig& config, double global_lp,
                     std::span<const double> local_lps) {
  if (local_lps.empty()) throw std::invalid_argument("pseudo_reward: no local log-probabilities");
  double agg;
  if (config.aggregation == Aggregation::kMean) {
    agg = std::accumulate(local_lps.begin(), local_lps.end(), 0.0) /
          static_cast<double>(local_lps.size());
  } else if (config.aggregation == Aggregation::kMin) {
    agg = *std::min_element(local_lps.begin(), local_lps.end());
  } else {
    agg = *std::max_element(local_lps.begin(), local_lps.end());
  }
  return global_lp - config.beta * agg;
}

DiscGradients discriminator_gradients(const DiscriminatorSet& disc, const SkillSpace& space,
                                      const RealMatrix& features, const SkillTargets& targets) {
  check_targets(space, features, targets);
  const auto fd = static_cast<Eigen::Index>(disc.feature_dim);
  if (features.cols() != fd * static_cast<Eigen::Index>(disc.num_agents())) {
    throw std::invalid_argument("discriminator batch: feature width mismatch");
  }
  DiscGradients g;
  g.global = head_gradients(disc.global, features, space, disc.loss_kind, targets, &g.losses.global);
  for (std::size_t i = 0; i < disc.num_agents(); ++i) {
    const RealMatrix local_in = features.middleCols(static_cast<Eigen::Index>(i) * fd, fd);
    double value = 0.0;
    g.locals.push_back(head_gradients(disc.locals[i], local_in, space, disc.loss_kind, targets, &value));
    g.losses.locals.push_back(value);
  }
  return g;
}

DiscLosses discriminator_update(DiscriminatorSet& disc, const SkillSpace& space,
                                const RealMatrix& features, const SkillTargets& targets,
                                double grad_clip) {
  DiscGradients g = discriminator_gradients(disc, space, features, targets);
  clip_grad_norm(g.global, grad_clip);
  adam_step(disc.global, g.global, disc.global_opt);
  for (std::size_t i = 0; i < disc.num_agents(); ++i) {
    clip_grad_norm(g.locals[i], grad_clip);
    adam_step(disc.locals[i], g.locals[i], disc.local_opts[i]);
  }
  return g.losses;
}

DiscLosses discriminator_losses(const DiscriminatorSet& disc, const SkillSpace& space,
                                const RealMatrix& features, const SkillTargets& targets) {
  check_targets(space, features, targets);
  const auto fd = static_cast<Eigen::Index>(disc.feature_dim);
  DiscLosses losses;
  losses.global = head_loss(mlp_forward(disc.global, features), space, disc.loss_kind, targets,
                            nullptr);
  for (std::size_t i = 0; i < disc.num_agents(); ++i) {
    const RealMatrix local_in = features.middleCols(static_cast<Eigen::Index>(i) * fd, fd);
    losses.locals.push_back(head_loss(mlp_forward(disc.locals[i], local_in), space,
                                      disc.loss_kind, targets, nullptr));
  }
  return losses;
}

bool Curriculum::maybe_expand(SkillSpace& space, double running_mean_global_lp) {
  if (space.kind != SkillKind::kDiscrete) {
    throw std::logic_error("curriculum applies to discrete skill spaces only");
  }
  if (running_mean_global_lp >= threshold_) {
    ++consecutive_;
  } else {
    consecutive_ = 0;
  }
  if (consecutive_ >= window_ && space.active_k < space.k_max) {
    ++space.active_k;
    consecutive_ = 0;
    return true;
  }
  return false;
}

}  // namespace masd
