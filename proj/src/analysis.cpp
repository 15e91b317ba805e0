#include "masd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

namespace masd {
namespace {

// Joint law over (z, x1', x2') from exact enumeration.
std::array<double, 8> xor_outcome_law(const XorPolicyTable& policy, std::array<double, 2> prior) {
  std::array<double, 8> law{};
  for (int z = 0; z < 2; ++z) {
    for (int x1 = 0; x1 < 2; ++x1) {
      for (int x2 = 0; x2 < 2; ++x2) {
        const double base = prior[z] * 0.25;
        const double p1 = policy[0][x1][x2][z];
        const double p2 = policy[1][x1][x2][z];
        for (int u1 = 0; u1 < 2; ++u1) {
          for (int u2 = 0; u2 < 2; ++u2) {
            const double pu = (u1 ? p1 : 1.0 - p1) * (u2 ? p2 : 1.0 - p2);
            const int y1 = x1 ^ u1;
            const int y2 = x2 ^ u2;
            law[static_cast<std::size_t>(z * 4 + y1 * 2 + y2)] += base * pu;
          }
        }
      }
    }
  }
  return law;
}

XorMi mi_from_law(const std::array<double, 8>& law, bool normalize) {
  double total = normalize ? std::accumulate(law.begin(), law.end(), 0.0) : 1.0;
  std::vector<double> joint(8), a1(4, 0.0), a2(4, 0.0);
  for (std::size_t i = 0; i < 8; ++i) joint[i] = law[i] / total;
  for (std::size_t z = 0; z < 2; ++z) {
    for (std::size_t y1 = 0; y1 < 2; ++y1) {
      for (std::size_t y2 = 0; y2 < 2; ++y2) {
        const double v = joint[z * 4 + y1 * 2 + y2];
        a1[z * 2 + y1] += v;
        a2[z * 2 + y2] += v;
      }
    }
  }
  // Renormalize to absorb rounding so the 1e-12 check in the constructor holds.
  auto renorm = [](std::vector<double> v) {
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (auto& x : v) x /= s;
    return v;
  };
  XorMi mi;
  mi.global = mutual_information(JointDistribution(2, 4, renorm(joint)));
  mi.local[0] = mutual_information(JointDistribution(2, 2, renorm(a1)));
  mi.local[1] = mutual_information(JointDistribution(2, 2, renorm(a2)));
  return mi;
}

double heading_deg(const std::vector<Vec2>& path) {
  const Vec2 d = path.back() - path.front();
  return std::atan2(d.y(), d.x()) * 180.0 / std::numbers::pi;
}

}  // namespace

JointDistribution::JointDistribution(std::size_t num_z, std::size_t num_outcomes,
                                     std::vector<double> table)
    : z_(num_z), outcomes_(num_outcomes), table_(std::move(table)) {
  if (table_.size() != z_ * outcomes_ || table_.empty()) {
    throw std::invalid_argument("JointDistribution: table size mismatch");
  }
  double sum = 0.0;
  for (double v : table_) {
    if (!(v >= 0.0)) throw std::invalid_argument("JointDistribution: negative or NaN entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("JointDistribution: entries do not sum to 1");
  }
}

JointDistribution JointDistribution::from_counts(std::size_t num_z, std::size_t num_outcomes,
                                                 const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("JointDistribution: no counts");
  std::vector<double> t(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) t[i] = counts[i] / total;
  const double s = std::accumulate(t.begin(), t.end(), 0.0);
  for (auto& v : t) v /= s;
  return JointDistribution(num_z, num_outcomes, std::move(t));
}

std::vector<double> JointDistribution::z_marginal() const {
  std::vector<double> m(z_, 0.0);
  for (std::size_t z = 0; z < z_; ++z) {
    for (std::size_t o = 0; o < outcomes_; ++o) m[z] += p(z, o);
  }
  return m;
}

std::vector<double> JointDistribution::outcome_marginal() const {
  std::vector<double> m(outcomes_, 0.0);
  for (std::size_t z = 0; z < z_; ++z) {
    for (std::size_t o = 0; o < outcomes_; ++o) m[o] += p(z, o);
  }
  return m;
}

double mutual_information(const JointDistribution& dist) {
  const auto pz = dist.z_marginal();
  const auto po = dist.outcome_marginal();
  double mi = 0.0;
  for (std::size_t z = 0; z < dist.num_z(); ++z) {
    for (std::size_t o = 0; o < dist.num_outcomes(); ++o) {
      const double p = dist.p(z, o);
      if (p > 0.0) mi += p * std::log2(p / (pz[z] * po[o]));
    }
  }
  return std::max(mi, 0.0);
}

double entropy_bits(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

XorMi exact_mi_xor(const XorPolicyTable& policy, std::array<double, 2> prior) {
  for (const auto& agent : policy) {
    for (const auto& row : agent) {
      for (const auto& cell : row) {
        for (double p : cell) {
          if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("exact_mi_xor: bad probability");
        }
      }
    }
  }
  return mi_from_law(xor_outcome_law(policy, prior), false);
}

XorMi sampled_mi_xor(const XorPolicyTable& policy, std::size_t rollouts, Rng& rng,
                     std::array<double, 2> prior) {
  std::array<double, 8> counts{};
  for (std::size_t n = 0; n < rollouts; ++n) {
    const int z = rng.uniform() < prior[0] ? 0 : 1;
    const int x1 = rng.bernoulli(0.5) ? 1 : 0;
    const int x2 = rng.bernoulli(0.5) ? 1 : 0;
    const int u1 = rng.bernoulli(policy[0][x1][x2][z]) ? 1 : 0;
    const int u2 = rng.bernoulli(policy[1][x1][x2][z]) ? 1 : 0;
    counts[static_cast<std::size_t>(z * 4 + (x1 ^ u1) * 2 + (x2 ^ u2))] += 1.0;
  }
  return mi_from_law(counts, true);
}

std::optional<std::array<double, 2>> trajectory_angles(const TrajectoryRecord& record) {
  const auto& agents = record.agents;
  if (agents.size() < 2) throw std::invalid_argument("trajectory_angles: need >= 2 agents");
  std::vector<double> headings;
  for (const auto& path : agents) {
    if (path.size() < 2 || (path.back() - path.front()).norm() < 1e-9) return std::nullopt;
    headings.push_back(heading_deg(path));
  }
  std::vector<double> diffs;
  for (std::size_t i = 0; i < headings.size(); ++i) {
    for (std::size_t j = i + 1; j < headings.size(); ++j) {
      double d = std::fmod(std::abs(headings[i] - headings[j]), 360.0);
      if (d > 180.0) d = 360.0 - d;
      diffs.push_back(d);
    }
  }
  std::sort(diffs.begin(), diffs.end());
  return std::array<double, 2>{diffs[0], diffs.size() > 1 ? diffs[1] : diffs[0]};
}

std::array<double, 2> trajectory_lengths(const TrajectoryRecord& record) {
  if (record.agents.size() < 2) throw std::invalid_argument("trajectory_lengths: need >= 2 agents");
  std::vector<double> lengths;
  for (const auto& path : record.agents) {
    double len = 0.0;
    for (std::size_t t = 1; t < path.size(); ++t) len += (path[t] - path[t - 1]).norm();
    lengths.push_back(len);
  }
  std::sort(lengths.begin(), lengths.end());
  return {lengths[0], lengths[1]};
}

std::vector<EndpointStd> endpoint_std(const std::vector<TrajectoryRecord>& records) {
  std::map<int, std::map<std::size_t, Vec2>> ends;
  std::set<std::size_t> inits;
  for (const auto& rec : records) {
    if (rec.agents.empty() || rec.agents[0].empty()) {
      throw std::invalid_argument("endpoint_std: record without agent positions");
    }
    ends[rec.skill][rec.init_id] = rec.agents[0].back();
    inits.insert(rec.init_id);
  }
  std::vector<EndpointStd> out;
  for (const auto& [skill, by_init] : ends) {
    if (by_init.size() != inits.size()) {
      throw std::invalid_argument("endpoint_std: skill " + std::to_string(skill) +
                                  " is missing runs for some initial conditions");
    }
    Vec2 mean = Vec2::Zero();
    for (const auto& [id, p] : by_init) mean += p;
    mean /= static_cast<double>(by_init.size());
    Vec2 var = Vec2::Zero();
    for (const auto& [id, p] : by_init) var += (p - mean).cwiseAbs2();
    var /= static_cast<double>(by_init.size());
    EndpointStd e{skill, std::sqrt(var.x()), std::sqrt(var.y()), 0.0};
    e.combined = std::hypot(e.std_x, e.std_y);
    out.push_back(e);
  }
  return out;
}

double skill_cluster_score(const std::vector<SkillPoint>& points) {
  std::map<int, std::vector<const SkillPoint*>> groups;
  for (const auto& p : points) groups[p.skill].push_back(&p);
  std::erase_if(groups, [](const auto& kv) { return kv.second.size() < 2; });
  if (groups.size() < 2) throw std::invalid_argument("skill_cluster_score: need >= 2 skills");

  const std::size_t dims = groups.begin()->second.front()->features.size();
  std::size_t n = 0;
  std::vector<double> mean(dims, 0.0);
  for (const auto& [skill, members] : groups) {
    for (const auto* p : members) {
      if (p->features.size() != dims) throw std::invalid_argument("skill_cluster_score: ragged");
      for (std::size_t d = 0; d < dims; ++d) mean[d] += p->features[d];
      ++n;
    }
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<double> scale(dims, 0.0);
  for (const auto& [skill, members] : groups) {
    for (const auto* p : members) {
      for (std::size_t d = 0; d < dims; ++d) scale[d] += std::pow(p->features[d] - mean[d], 2);
    }
  }
  for (auto& s : scale) s = std::sqrt(s / static_cast<double>(n));

  double ss_within = 0.0, ss_between = 0.0;
  for (const auto& [skill, members] : groups) {
    for (std::size_t d = 0; d < dims; ++d) {
      if (scale[d] < 1e-12) continue;  // constant dimension carries no information
      double c = 0.0;
      for (const auto* p : members) c += (p->features[d] - mean[d]) / scale[d];
      c /= static_cast<double>(members.size());
      ss_between += static_cast<double>(members.size()) * c * c;
      for (const auto* p : members) ss_within += std::pow((p->features[d] - mean[d]) / scale[d] - c, 2);
    }
  }
  const double k = static_cast<double>(groups.size());
  const double ms_within = ss_within / (static_cast<double>(n) - k);
  const double ms_between = ss_between / (k - 1.0);
  if (ms_between <= 0.0) return ms_within > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return ms_within / ms_between;
}

TrajectoryStats trajectory_stats(const std::vector<TrajectoryRecord>& records) {
  TrajectoryStats stats;
  for (const auto& rec : records) {
    const auto angles = trajectory_angles(rec);
    if (!angles) {
      ++stats.degenerate;
      continue;
    }
    const auto lengths = trajectory_lengths(rec);
    stats.points.push_back({rec.skill, {(*angles)[0], (*angles)[1], lengths[0], lengths[1]}});
  }
  return stats;
}

}  // namespace masd
