#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "masd/analysis.hpp"

using namespace masd;

namespace {

// Solution A: agent 1 writes z xor x2 into its bit, agent 2 idles. The joint
// outcome encodes z through the parity only.
XorPolicyTable solution_a() {
  XorPolicyTable t{};
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int z = 0; z < 2; ++z) {
        t[0][x1][x2][z] = (x1 ^ z ^ x2) ? 1.0 : 0.0;
        t[1][x1][x2][z] = 0.0;
      }
  return t;
}

// Solution B: agent 1 copies z into its bit, agent 2 idles.
XorPolicyTable solution_b() {
  XorPolicyTable t{};
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (int z = 0; z < 2; ++z) {
        t[0][x1][x2][z] = (x1 ^ z) ? 1.0 : 0.0;
        t[1][x1][x2][z] = 0.0;
      }
  return t;
}

TrajectoryRecord record_from(std::vector<std::vector<Vec2>> paths, int skill = 0, std::size_t init = 0) {
  TrajectoryRecord r;
  r.run_id = "t";
  r.skill = skill;
  r.init_id = init;
  r.agents = std::move(paths);
  return r;
}

}  // namespace

TEST_CASE("mutual information of small tables") {
  // z copied to the outcome: 1 bit.
  CHECK(mutual_information(JointDistribution(2, 2, {0.5, 0, 0, 0.5})) == doctest::Approx(1.0));
  // Product distribution: 0 bits.
  CHECK(mutual_information(JointDistribution(2, 3, {0.1, 0.2, 0.2, 0.1, 0.2, 0.2})) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(entropy_bits({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(JointDistribution(2, 2, {0.5, 0.5, 0.5, -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(JointDistribution(2, 2, {0.2, 0.2, 0.2, 0.2}), std::invalid_argument);
  const auto d = JointDistribution::from_counts(2, 2, {1, 3, 2, 2});
  CHECK(d.p(0, 1) == doctest::Approx(3.0 / 8));
}

TEST_CASE("exact xor MI for the two optimal solutions") {
  const XorMi a = exact_mi_xor(solution_a());
  CHECK(a.global == doctest::Approx(1.0));
  CHECK(a.local[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.local[1] == doctest::Approx(0.0).epsilon(1e-12));

  const XorMi b = exact_mi_xor(solution_b());
  CHECK(b.global == doctest::Approx(1.0));
  CHECK(b.local[0] == doctest::Approx(1.0));
  CHECK(b.local[1] == doctest::Approx(0.0).epsilon(1e-12));

  XorPolicyTable uniform{};
  for (auto& agent : uniform)
    for (auto& a1 : agent)
      for (auto& a2 : a1) a2 = {0.5, 0.5};
  const XorMi u = exact_mi_xor(uniform);
  CHECK(u.global == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(u.max_local() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sampled MI tracks the exact value on random policies") {
  Rng rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    XorPolicyTable t{};
    for (auto& agent : t)
      for (auto& a1 : agent)
        for (auto& a2 : a1)
          for (auto& p : a2) p = rng.uniform();
    const XorMi exact = exact_mi_xor(t);
    const XorMi est = sampled_mi_xor(t, 100000, rng);
    CHECK(std::abs(exact.global - est.global) < 0.02);
    CHECK(std::abs(exact.local[0] - est.local[0]) < 0.02);
    CHECK(std::abs(exact.local[1] - est.local[1]) < 0.02);
  }
}

TEST_CASE("trajectory angles by example") {
  const Vec2 o(0, 0);
  auto rec = record_from({{o, Vec2(1, 0)}, {o, Vec2(0, 1)}, {o, Vec2(-1, 0)}});
  auto angles = trajectory_angles(rec);
  REQUIRE(angles);
  CHECK((*angles)[0] == doctest::Approx(90.0));
  CHECK((*angles)[1] == doctest::Approx(90.0));

  rec = record_from({{o, Vec2(1, 1)}, {o, Vec2(2, 2)}, {o, Vec2(0.5, 0.5)}});
  angles = trajectory_angles(rec);
  REQUIRE(angles);
  CHECK((*angles)[0] == doctest::Approx(0.0));
  CHECK((*angles)[1] == doctest::Approx(0.0));

  rec = record_from({{o, o}, {o, Vec2(1, 0)}, {o, Vec2(0, 1)}});
  CHECK_FALSE(trajectory_angles(rec).has_value());
}

TEST_CASE("trajectory statistics against brute force") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<Vec2>> paths(3);
    for (auto& p : paths) {
      p.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
      for (int t = 0; t < 5; ++t) p.push_back(p.back() + Vec2(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)));
    }
    const auto rec = record_from(paths);
    std::vector<double> heading, length;
    for (const auto& p : paths) {
      const Vec2 d = p.back() - p.front();
      heading.push_back(std::atan2(d.y(), d.x()) * 180.0 / std::numbers::pi);
      double len = 0.0;
      for (std::size_t t = 1; t < p.size(); ++t) len += std::hypot(p[t].x() - p[t - 1].x(), p[t].y() - p[t - 1].y());
      length.push_back(len);
    }
    std::vector<double> pair;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        double a = std::fmod(std::abs(heading[i] - heading[j]), 360.0);
        pair.push_back(a > 180.0 ? 360.0 - a : a);
      }
    std::sort(pair.begin(), pair.end());
    std::sort(length.begin(), length.end());
    const auto angles = trajectory_angles(rec);
    REQUIRE(angles);
    CHECK((*angles)[0] == doctest::Approx(pair[0]).epsilon(1e-9));
    CHECK((*angles)[1] == doctest::Approx(pair[1]).epsilon(1e-9));
    const auto lengths = trajectory_lengths(rec);
    CHECK(lengths[0] == doctest::Approx(length[0]).epsilon(1e-12));
    CHECK(lengths[1] == doctest::Approx(length[1]).epsilon(1e-12));
  }
}

TEST_CASE("endpoint spread of agent 0 per skill") {
  std::vector<TrajectoryRecord> recs;
  const std::vector<Vec2> ends{Vec2(0, 0), Vec2(2, 0), Vec2(0, 2), Vec2(2, 2)};
  for (std::size_t i = 0; i < ends.size(); ++i) {
    recs.push_back(record_from({{Vec2(0, 0), ends[i]}, {Vec2(0, 0), Vec2(5, 5)}}, 0, i));
    recs.push_back(record_from({{Vec2(0, 0), Vec2(0.3, 0.3)}, {Vec2(0, 0), ends[i]}}, 1, i));
  }
  const auto s = endpoint_std(recs);
  REQUIRE(s.size() == 2);
  CHECK(s[0].std_x == doctest::Approx(1.0));
  CHECK(s[0].std_y == doctest::Approx(1.0));
  CHECK(s[0].combined == doctest::Approx(std::sqrt(2.0)));
  CHECK(s[1].combined == 0.0);

  recs.pop_back();
  CHECK_THROWS_AS(endpoint_std(recs), std::invalid_argument);
}

TEST_CASE("cluster score matches a sum-of-squares decomposition") {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(4));
    std::vector<SkillPoint> pts;
    for (int s = 0; s < k; ++s) {
      const double cx = rng.uniform(-1, 1), cy = rng.uniform(-1, 1);
      const int m = 2 + static_cast<int>(rng.index(6));
      for (int i = 0; i < m; ++i) pts.push_back({s, {cx + 0.3 * rng.normal(), 5.0 * (cy + 0.3 * rng.normal())}});
    }
    // Oracle: standardize each dimension, then within = total - between.
    const double n = static_cast<double>(pts.size());
    double within = 0.0, between = 0.0;
    for (int d = 0; d < 2; ++d) {
      double mean = 0.0;
      for (const auto& p : pts) mean += p.features[d];
      mean /= n;
      double var = 0.0;
      for (const auto& p : pts) var += (p.features[d] - mean) * (p.features[d] - mean);
      const double sd = std::sqrt(var / n);
      double total = 0.0;
      for (const auto& p : pts) total += std::pow((p.features[d] - mean) / sd, 2);
      double b = 0.0;
      for (int s = 0; s < k; ++s) {
        double sum = 0.0, cnt = 0.0;
        for (const auto& p : pts)
          if (p.skill == s) {
            sum += (p.features[d] - mean) / sd;
            cnt += 1.0;
          }
        b += sum * sum / cnt;
      }
      between += b;
      within += total - b;
    }
    const double expect = (within / (n - k)) / (between / (k - 1));
    CHECK(skill_cluster_score(pts) == doctest::Approx(expect).epsilon(1e-9));
  }

  std::vector<SkillPoint> tight{{0, {1.0}}, {0, {1.0}}, {1, {2.0}}, {1, {2.0}}};
  CHECK(skill_cluster_score(tight) == 0.0);

  std::vector<SkillPoint> noise;
  for (int i = 0; i < 4000; ++i) noise.push_back({static_cast<int>(rng.index(4)), {rng.normal(), rng.normal()}});
  CHECK(std::abs(skill_cluster_score(noise) - 1.0) < 0.2);

  std::vector<SkillPoint> lonely{{0, {1.0}}, {0, {2.0}}, {1, {3.0}}};
  CHECK_THROWS_AS(skill_cluster_score(lonely), std::invalid_argument);
}
