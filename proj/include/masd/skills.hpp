#pragma once

// Skill space, global/local discriminators, the pseudo reward and the
// curriculum that grows the number of active discrete skills.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "masd/numerics.hpp"
#include "masd/rng.hpp"

namespace masd {

enum class SkillKind { kDiscrete, kContinuous };

struct SkillSpace {
  SkillKind kind = SkillKind::kDiscrete;
  std::size_t k_max = 2;       // discrete only
  std::size_t dim = 0;         // continuous only
  std::size_t active_k = 2;    // discrete only, curriculum controlled

  static SkillSpace discrete(std::size_t k_max, std::size_t active_k);
  static SkillSpace continuous(std::size_t dim);

  void validate() const;
  /// Width of the one-hot (discrete) or raw (continuous) encoding.
  std::size_t encoding_dim() const { return kind == SkillKind::kDiscrete ? k_max : dim; }
};

struct SkillCode {
  int index = -1;              // discrete
  std::vector<double> values;  // continuous, in [-1, 1]^d

  bool operator==(const SkillCode&) const = default;
};

/// Uniform over the active categories, or i.i.d. U[-1, 1] per dimension.
SkillCode sample_skill(const SkillSpace& space, Rng& rng);

/// One-hot over k_max, or the raw vector.
std::vector<double> encode_skill(const SkillSpace& space, const SkillCode& z);

enum class DiscLoss { kCrossEntropy, kL1, kL2 };

struct DiscriminatorSet {
  MlpParams global;
  std::vector<MlpParams> locals;
  AdamState global_opt;
  std::vector<AdamState> local_opts;
  DiscLoss loss_kind = DiscLoss::kCrossEntropy;
  std::size_t feature_dim = 0;

  std::size_t num_agents() const { return locals.size(); }
};

/// Discriminator heads have k_max outputs from the start (inactive classes
/// are masked), or `dim` outputs for continuous skills.
DiscriminatorSet make_discriminators(const SkillSpace& space, std::size_t num_agents,
                                     std::size_t feature_dim, std::size_t hidden, double lr,
                                     DiscLoss loss, Rng& rng);

/// Floor applied to discrete posteriors before taking logs.
inline const double kLogProbFloor = std::log(1e-8);

/// log q(z | concatenated features). Discrete values lie in [ln 1e-8, 0].
double global_logprob(const DiscriminatorSet& disc, const SkillSpace& space,
                      std::span<const double> joint_features, const SkillCode& z);

/// log q_i(z | f(x_i)). Throws std::out_of_range for a bad agent index.
double local_logprob(const DiscriminatorSet& disc, const SkillSpace& space,
                     std::size_t agent_index, std::span<const double> feature,
                     const SkillCode& z);

/// Batched log-probabilities for a skill batch. `features` holds one row per
/// sample with the agents' features concatenated. Returns a B x (N + 1)
/// matrix: column 0 global, column 1 + i local discriminator i.
struct SkillTargets {
  std::vector<int> labels;  // discrete
  RealMatrix values;        // continuous, B x dim
};
RealMatrix batch_logprobs(const DiscriminatorSet& disc, const SkillSpace& space,
                          const RealMatrix& features, const SkillTargets& targets);

/// kMax penalizes the agent whose state reveals the most about z.
enum class Aggregation { kMean, kMin, kMax };

struct PseudoRewardConfig {
  double beta = 1.0;
  Aggregation aggregation = Aggregation::kMean;
};

/// global_lp - beta * aggregate(local_lps), aggregate being the mean, the
/// minimum or the maximum. Throws std::invalid_argument for an empty `local_lps`.
double pseudo_reward(const PseudoRewardConfig& config, double global_lp,
                     std::span<const double> local_lps);

struct DiscLosses {
  double global = 0.0;
  std::vector<double> locals;
};

/// Losses and their parameter gradients, without updating.
struct DiscGradients {
  DiscLosses losses;
  ParamTensors global;
  std::vector<ParamTensors> locals;
};
DiscGradients discriminator_gradients(const DiscriminatorSet& disc, const SkillSpace& space,
                                      const RealMatrix& features, const SkillTargets& targets);

/// One Adam step for every discriminator on a batch of (features, z) pairs.
/// The global network sees all features, local i only agent i's slice.
DiscLosses discriminator_update(DiscriminatorSet& disc, const SkillSpace& space,
                                const RealMatrix& features, const SkillTargets& targets,
                                double grad_clip = 0.0);

/// Losses without updating; same conventions as discriminator_update.
DiscLosses discriminator_losses(const DiscriminatorSet& disc, const SkillSpace& space,
                                const RealMatrix& features, const SkillTargets& targets);

/// Grows active_k by one once the windowed mean global log-probability has
/// stayed at or above the threshold for `window` consecutive evaluations.
class Curriculum {
 public:
  Curriculum(double threshold = -0.18, std::size_t window = 10)
      : threshold_(threshold), window_(window) {}

  /// Returns true when active_k was incremented. Throws std::logic_error on
  /// a continuous space.
  bool maybe_expand(SkillSpace& space, double running_mean_global_lp);

  double threshold() const { return threshold_; }
  std::size_t window() const { return window_; }
  std::size_t consecutive() const { return consecutive_; }
  void set_consecutive(std::size_t n) { consecutive_ = n; }

 private:
  double threshold_;
  std::size_t window_;
  std::size_t consecutive_ = 0;
};

}  // namespace masd
