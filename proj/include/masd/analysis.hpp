#pragma once

// Verification instruments: exact and sampled mutual information, the
// trajectory statistics used to compare skills, and endpoint spread.

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "masd/io.hpp"
#include "masd/rng.hpp"

namespace masd {

/// Finite joint law p(z, outcome), rows indexed by z.
class JointDistribution {
 public:
  /// Throws std::invalid_argument unless entries are >= 0 and sum to 1
  /// within 1e-12.
  JointDistribution(std::size_t num_z, std::size_t num_outcomes, std::vector<double> table);

  /// Normalizes non-negative counts.
  static JointDistribution from_counts(std::size_t num_z, std::size_t num_outcomes,
                                       const std::vector<double>& counts);

  double p(std::size_t z, std::size_t outcome) const { return table_[z * outcomes_ + outcome]; }
  std::size_t num_z() const { return z_; }
  std::size_t num_outcomes() const { return outcomes_; }
  std::vector<double> z_marginal() const;
  std::vector<double> outcome_marginal() const;

 private:
  std::size_t z_;
  std::size_t outcomes_;
  std::vector<double> table_;
};

/// I(Z; outcome) in bits, with 0 log 0 = 0.
double mutual_information(const JointDistribution& dist);

double entropy_bits(const std::vector<double>& p);

/// Probability that agent i outputs bit 1, indexed [agent][x1][x2][z].
using XorPolicyTable = std::array<std::array<std::array<std::array<double, 2>, 2>, 2>, 2>;

struct XorMi {
  double global = 0.0;
  std::array<double, 2> local{0.0, 0.0};
  double mean_local() const { return 0.5 * (local[0] + local[1]); }
  double max_local() const { return std::max(local[0], local[1]); }
};

/// Exact MIs by enumerating z, x and u with the policy probabilities; x is
/// uniform on {0,1}^2. `prior` is p(z) over {0, 1}.
XorMi exact_mi_xor(const XorPolicyTable& policy, std::array<double, 2> prior = {0.5, 0.5});

/// Plug-in estimate from `rollouts` sampled episodes of the same game.
XorMi sampled_mi_xor(const XorPolicyTable& policy, std::size_t rollouts, Rng& rng,
                     std::array<double, 2> prior = {0.5, 0.5});

/// Two smallest pairwise angles (degrees, folded to [0, 180]) between the
/// agents' net-displacement headings. Empty when any agent did not move.
std::optional<std::array<double, 2>> trajectory_angles(const TrajectoryRecord& record);

/// Two shortest agent path lengths (arc length). Needs >= 2 agents.
std::array<double, 2> trajectory_lengths(const TrajectoryRecord& record);

struct EndpointStd {
  int skill = 0;
  double std_x = 0.0;
  double std_y = 0.0;
  double combined = 0.0;  // sqrt(std_x^2 + std_y^2)
};

/// Population std of agent 0's final position across the initial conditions
/// of each skill. Throws std::invalid_argument when a skill is missing any
/// of the init ids seen for the others.
std::vector<EndpointStd> endpoint_std(const std::vector<TrajectoryRecord>& records);

/// Labeled feature point for clustering.
struct SkillPoint {
  int skill = 0;
  std::vector<double> features;
};

/// Within-skill mean square over the between-skill (size weighted) mean
/// square, summed over dimensions standardized to unit variance. Identical
/// points inside each skill give 0; labels independent of the features
/// give about 1. Skills with fewer than two points are dropped; throws
/// std::invalid_argument when fewer than two skills remain.
double skill_cluster_score(const std::vector<SkillPoint>& points);

/// (angle1, angle2, length1, length2) per non-degenerate record.
struct TrajectoryStats {
  std::vector<SkillPoint> points;
  std::size_t degenerate = 0;
};
TrajectoryStats trajectory_stats(const std::vector<TrajectoryRecord>& records);

}  // namespace masd
