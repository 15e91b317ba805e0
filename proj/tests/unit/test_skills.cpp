#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "masd/skills.hpp"

using namespace masd;

TEST_CASE("skill sampling") {
  Rng rng(1);
  const auto four = SkillSpace::discrete(8, 4);
  std::vector<int> counts(8, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_skill(four, rng).index)];
  for (int k = 0; k < 4; ++k) CHECK(std::abs(counts[k] / double(n) - 0.25) < 0.01);
  for (int k = 4; k < 8; ++k) CHECK(counts[k] == 0);

  const auto one = SkillSpace::discrete(3, 1);
  for (int i = 0; i < 100; ++i) CHECK(sample_skill(one, rng).index == 0);

  const auto cont = SkillSpace::continuous(2);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto z = sample_skill(cont, rng);
    for (double v : z.values) {
      CHECK(std::abs(v) <= 1.0);
      sum += v;
    }
  }
  CHECK(std::abs(sum / (2.0 * n)) < 0.01);
}

TEST_CASE("one-hot encoding spans k_max") {
  const auto s = SkillSpace::discrete(5, 2);
  SkillCode z;
  z.index = 1;
  CHECK(encode_skill(s, z) == std::vector<double>{0, 1, 0, 0, 0});
  z.index = 5;
  CHECK_THROWS_AS(encode_skill(s, z), std::out_of_range);
  CHECK_THROWS_AS(SkillSpace::discrete(2, 3), std::invalid_argument);
}

TEST_CASE("pseudo reward worked examples") {
  const std::vector<double> locals{-0.7, -0.3};
  CHECK(pseudo_reward({1.0, Aggregation::kMean}, -0.1, locals) == doctest::Approx(0.4));
  CHECK(pseudo_reward({1.5, Aggregation::kMin}, -0.1, locals) == doctest::Approx(0.95));
  CHECK(pseudo_reward({1.5, Aggregation::kMax}, -0.1, locals) == doctest::Approx(-0.1 + 1.5 * 0.3));
  CHECK(pseudo_reward({0.0, Aggregation::kMean}, -0.1, locals) == -0.1);
  CHECK_THROWS_AS(pseudo_reward({1.0, Aggregation::kMean}, 0.0, std::vector<double>{}),
                  std::invalid_argument);
}

TEST_CASE("pseudo reward properties over random cases") {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.index(5);
    std::vector<double> locals(n);
    for (auto& v : locals) v = rng.uniform(kLogProbFloor, 0.0);
    const double g = rng.uniform(kLogProbFloor, 0.0);
    const double beta = rng.uniform(0.0, 3.0);
    for (auto agg : {Aggregation::kMean, Aggregation::kMin, Aggregation::kMax}) {
      const PseudoRewardConfig cfg{beta, agg};
      // beta = 0 reduces to the global term.
      CHECK(pseudo_reward({0.0, agg}, g, locals) == g);
      // Raising any local log-probability never raises the reward.
      const double base = pseudo_reward(cfg, g, locals);
      const std::size_t i = rng.index(n);
      auto raised = locals;
      raised[i] = std::min(0.0, raised[i] + rng.uniform(0.0, 2.0));
      CHECK(pseudo_reward(cfg, g, raised) <= base + 1e-12);
    }
  }
}

TEST_CASE("discriminator log-probabilities stay within the floor") {
  Rng rng(5);
  const auto space = SkillSpace::discrete(20, 20);
  auto disc = make_discriminators(space, 2, 3, 16, 1e-3, DiscLoss::kCrossEntropy, rng);
  SkillCode z;
  z.index = 7;
  const std::vector<double> joint{0.1, -0.2, 0.3, 0.0, 0.5, -0.1};
  // A fresh network is close to uniform.
  CHECK(std::abs(global_logprob(disc, space, joint, z) - std::log(1.0 / 20)) < 0.5);
  // Saturate the output layer towards a wrong class.
  disc.global.layers.back().bias(3) = 1e6;
  CHECK(global_logprob(disc, space, joint, z) == doctest::Approx(kLogProbFloor));
  CHECK_THROWS_AS(local_logprob(disc, space, 2, std::vector<double>{0, 0, 0}, z), std::out_of_range);
  CHECK_THROWS_AS(global_logprob(disc, space, std::vector<double>{0, 0}, z), std::invalid_argument);

  for (int t = 0; t < 200; ++t) {
    std::vector<double> f(3);
    for (auto& v : f) v = rng.uniform(-5, 5);
    z.index = static_cast<int>(rng.index(20));
    const double lp = local_logprob(disc, space, t % 2, f, z);
    CHECK(lp <= 0.0);
    CHECK(lp >= kLogProbFloor);
  }
}

TEST_CASE("discriminators learn separable data and nothing from noise") {
  Rng rng(8);
  const auto space = SkillSpace::discrete(4, 2);
  auto disc = make_discriminators(space, 2, 1, 16, 1e-2, DiscLoss::kCrossEntropy, rng);
  const int b = 64;
  auto batch = [&](RealMatrix& f, SkillTargets& t) {
    f.resize(b, 2);
    t.labels.resize(b);
    for (int r = 0; r < b; ++r) {
      const int z = static_cast<int>(rng.index(2));
      t.labels[static_cast<std::size_t>(r)] = z;
      f(r, 0) = (z == 1 ? 1.0 : -1.0) + 0.1 * rng.normal();  // agent 0 encodes z
      f(r, 1) = rng.normal();                                // agent 1 is noise
    }
  };
  RealMatrix f;
  SkillTargets t;
  DiscLosses last;
  for (int step = 0; step < 2000; ++step) {
    batch(f, t);
    last = discriminator_update(disc, space, f, t);
  }
  batch(f, t);
  const auto eval = discriminator_losses(disc, space, f, t);
  CHECK(eval.global < 0.05);
  CHECK(eval.locals[0] < 0.05);
  CHECK(std::abs(eval.locals[1] - std::log(2.0)) < 0.05);

  // Labels outside the active set are rejected.
  t.labels[0] = 3;
  CHECK_THROWS_AS(discriminator_update(disc, space, f, t), std::invalid_argument);
}

TEST_CASE("a small step does not increase the loss on its own batch") {
  Rng rng(12);
  const auto space = SkillSpace::discrete(3, 3);
  auto disc = make_discriminators(space, 2, 2, 8, 1e-4, DiscLoss::kCrossEntropy, rng);
  RealMatrix f(32, 4);
  SkillTargets t;
  for (int r = 0; r < 32; ++r) {
    t.labels.push_back(static_cast<int>(rng.index(3)));
    for (int c = 0; c < 4; ++c) f(r, c) = rng.uniform(-1, 1) + t.labels.back();
  }
  const auto before = discriminator_losses(disc, space, f, t);
  discriminator_update(disc, space, f, t);
  const auto after = discriminator_losses(disc, space, f, t);
  CHECK(after.global <= before.global);
  for (std::size_t i = 0; i < 2; ++i) CHECK(after.locals[i] <= before.locals[i]);
}

TEST_CASE("continuous discriminators regress the skill vector") {
  Rng rng(21);
  const auto space = SkillSpace::continuous(2);
  CHECK_THROWS_AS(make_discriminators(space, 2, 2, 8, 1e-3, DiscLoss::kCrossEntropy, rng),
                  std::invalid_argument);
  auto disc = make_discriminators(space, 2, 2, 16, 1e-2, DiscLoss::kL2, rng);
  RealMatrix f(64, 4);
  SkillTargets t;
  t.values.resize(64, 2);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 1500; ++step) {
    for (int r = 0; r < 64; ++r) {
      for (int d = 0; d < 2; ++d) t.values(r, d) = rng.uniform(-1, 1);
      f.row(r) << t.values(r, 0), t.values(r, 1), rng.normal(), rng.normal();
    }
    const auto l = discriminator_update(disc, space, f, t);
    if (step == 0) first = l.locals[0];
    last = l.locals[0];
  }
  CHECK(last < 0.1 * first);
}

TEST_CASE("curriculum worked examples") {
  Curriculum c(-0.18, 3);
  auto s = SkillSpace::discrete(30, 5);
  CHECK_FALSE(c.maybe_expand(s, -0.15));
  CHECK_FALSE(c.maybe_expand(s, -0.15));
  CHECK(c.maybe_expand(s, -0.15));
  CHECK(s.active_k == 6);

  CHECK_FALSE(c.maybe_expand(s, -0.5));
  CHECK(s.active_k == 6);

  auto full = SkillSpace::discrete(30, 30);
  for (int i = 0; i < 10; ++i) CHECK_FALSE(c.maybe_expand(full, 0.0));
  CHECK(full.active_k == 30);

  auto cont = SkillSpace::continuous(2);
  CHECK_THROWS_AS(c.maybe_expand(cont, 0.0), std::logic_error);
}

TEST_CASE("curriculum properties over random metric sequences") {
  Rng rng(33);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t window = 1 + rng.index(5);
    const std::size_t k_max = 1 + rng.index(10);
    Curriculum c(-0.18, window);
    auto s = SkillSpace::discrete(k_max, 1 + rng.index(k_max));
    std::size_t run = 0;  // reference count of consecutive passing evaluations
    for (int t = 0; t < 60; ++t) {
      const double m = rng.uniform(-0.4, 0.0);
      const std::size_t before = s.active_k;
      run = m >= -0.18 ? run + 1 : 0;
      const bool expect = run >= window && before < k_max;
      const bool grew = c.maybe_expand(s, m);
      CHECK(grew == expect);
      CHECK(s.active_k == before + (expect ? 1 : 0));
      CHECK(s.active_k <= k_max);
      if (expect) run = 0;
    }
  }
}
