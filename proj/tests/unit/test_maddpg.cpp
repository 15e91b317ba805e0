#include <cmath>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "masd/maddpg.hpp"

using namespace masd;

namespace {

ExperimentConfig small_spread() {
  auto c = ExperimentConfig::defaults_for(Task::kSpread);
  c.env.episode_length = 5;
  c.skills.k_max = 4;
  c.skills.initial_k = 2;
  c.curriculum.window = 1;
  c.train.batch_size = 16;
  c.train.disc_batch_size = 16;
  c.train.warmup = 20;
  c.train.hidden = 16;
  c.train.disc_hidden = 8;
  c.train.replay_capacity = 200;
  c.train.disc_capacity = 200;
  c.train.updates_per_episode = 2;
  c.train.eval_interval = 5;
  return c;
}

}  // namespace

TEST_CASE("row ring evicts oldest first") {
  RowRing ring(2, 3);
  for (int i = 0; i < 5; ++i) {
    const std::vector<double> row{double(i), double(-i)};
    ring.push(row);
  }
  CHECK(ring.size() == 3);
  CHECK(ring.oldest(0)[0] == 2.0);
  CHECK(ring.oldest(2)[0] == 4.0);
  CHECK_THROWS(ring.push(std::vector<double>{1.0}));

  RowRing copy(2, 3);
  copy.assign_raw(ring.raw(), ring.head());
  for (std::size_t a = 0; a < 3; ++a) CHECK(copy.oldest(a)[1] == ring.oldest(a)[1]);
  CHECK_THROWS_AS(copy.assign_raw(std::vector<double>(7, 0.0), 0), std::invalid_argument);
}

TEST_CASE("replay records decode to what was pushed") {
  ReplayRl replay(2, 3, 1, 2, 10);
  Transition t;
  t.obs = RealMatrix::Random(2, 3);
  t.actions = RealMatrix::Random(2, 1);
  t.next_obs = RealMatrix::Random(2, 3);
  t.skill_encoding = {0.0, 1.0};
  t.skill_label = 1;
  t.rewards = {0.5, -0.5};
  t.extrinsic = {1.0, 2.0};
  t.done = true;
  replay.push(t);
  const Transition back = replay.at(0);
  CHECK(back.obs == t.obs);
  CHECK(back.actions == t.actions);
  CHECK(back.next_obs == t.next_obs);
  CHECK(back.skill_encoding == t.skill_encoding);
  CHECK(back.skill_label == 1);
  CHECK(back.rewards == t.rewards);
  CHECK(back.extrinsic == t.extrinsic);
  CHECK(back.done);
  Rng rng(1);
  const RlBatch b = replay.sample(4, rng);
  CHECK(b.obs.rows() == 4);
  CHECK(b.obs.cols() == 6);
  CHECK(b.labels[3] == 1);
}

TEST_CASE("actor and critic gradients match finite differences") {
  Rng rng(99);
  for (int i = 0; i < 10; ++i) {
    CHECK(gradcheck::critic_instance(rng) < 1e-4);
    CHECK(gradcheck::actor_instance(rng) < 1e-4);
  }
}

TEST_CASE("discriminator gradients match finite differences") {
  Rng rng(98);
  for (int i = 0; i < 5; ++i) {
    CHECK(gradcheck::discriminator_instance(rng, DiscLoss::kCrossEntropy) < 1e-4);
    CHECK(gradcheck::discriminator_instance(rng, DiscLoss::kL2) < 1e-4);
    CHECK(gradcheck::discriminator_instance(rng, DiscLoss::kL1) < 1e-4);
  }
}

TEST_CASE("acting respects the head kind") {
  Rng rng(3);
  EnvSpec spec{1, 2, 2, 1, 1, ActionKind::kContinuous};
  TrainConfig tc;
  tc.hidden = 8;
  Team team = make_team(spec, 2, tc, rng);
  const std::vector<double> obs{0.2, -0.4}, enc{1.0, 0.0};
  for (int t = 0; t < 100; ++t) {
    const auto r = act(team.agents[0].actor, spec, obs, enc, 5.0, rng);
    for (double v : r.env_action) CHECK(std::abs(v) <= 1.0);
  }
  const auto a = act(team.agents[0].actor, spec, obs, enc, 0.0, rng);
  const auto b = act(team.agents[0].actor, spec, obs, enc, 0.0, rng);
  CHECK(a.env_action == b.env_action);
  CHECK_THROWS_AS(act(team.agents[0].actor, spec, std::vector<double>{1.0}, enc, 0.0, rng),
                  std::invalid_argument);

  spec.action_kind = ActionKind::kBinary;
  spec.action_dim = 1;
  team = make_team(spec, 2, tc, rng);
  for (int t = 0; t < 100; ++t) {
    const auto r = act(team.agents[0].actor, spec, obs, enc, 1.0, rng);
    CHECK((r.env_action[0] == 0.0 || r.env_action[0] == 1.0));
    CHECK(r.relaxed[0] > 0.0);
    CHECK(r.relaxed[0] < 1.0);
  }
}

TEST_CASE("the same seed reproduces training exactly") {
  Trainer a(small_spread(), 7), b(small_spread(), 7), c(small_spread(), 8);
  a.train_until(30);
  b.train_until(30);
  c.train_until(30);
  CHECK(a.to_checkpoint() == b.to_checkpoint());
  CHECK_FALSE(a.to_checkpoint() == c.to_checkpoint());
  CHECK(a.update_rounds() > 0);
}

TEST_CASE("resuming from a checkpoint matches uninterrupted training") {
  Trainer full(small_spread(), 11);
  full.train_until(20);
  const Checkpoint mid = full.to_checkpoint();
  full.train_until(30);

  Trainer resumed(small_spread(), 11);
  resumed.restore(mid);
  CHECK(resumed.episode() == 20);
  resumed.train_until(30);
  CHECK(resumed.to_checkpoint() == full.to_checkpoint());
}

TEST_CASE("a rejected checkpoint leaves the trainer untouched") {
  Trainer t(small_spread(), 5);
  t.train_until(10);
  const Checkpoint before = t.to_checkpoint();

  auto other_cfg = small_spread();
  other_cfg.train.hidden = 12;
  Trainer other(other_cfg, 5);
  CHECK_THROWS_AS(t.restore(other.to_checkpoint()), CheckpointError);
  CHECK(t.to_checkpoint() == before);

  Checkpoint bad = before;
  bad.arrays.erase(bad.arrays.begin());
  CHECK_THROWS_AS(t.restore(bad), CheckpointError);
  CHECK(t.to_checkpoint() == before);
}

TEST_CASE("the curriculum can grow the active skill set during training") {
  auto cfg = small_spread();
  cfg.curriculum.threshold = -100.0;  // every evaluation passes
  Trainer t(cfg, 2);
  t.train_until(20);
  CHECK(t.skill_space().active_k == 4);
}

TEST_CASE("tabular xor policies stay normalized") {
  auto cfg = ExperimentConfig::defaults_for(Task::kXor);
  cfg.xor_game.policy = XorPolicyKind::kTabular;
  cfg.train.episodes = 200;
  Trainer t(cfg, 1);
  t.train_until(200);
  const auto table = t.xor_policy_table();
  for (const auto& agent : table)
    for (const auto& a1 : agent)
      for (const auto& a2 : a1)
        for (double p : a2) {
          CHECK(p >= 0.0);
          CHECK(p <= 1.0);
        }
}

TEST_CASE("skill selection takes the first maximum") {
  const std::vector<double> r{1.0, 3.0, 3.0, -1.0};
  CHECK(select_skill(r) == 1);
}

TEST_CASE("finetune arms are reproducible and use skill 0 without a checkpoint") {
  auto cfg = ExperimentConfig::defaults_for(Task::kTag);
  cfg.env.episode_length = 5;
  cfg.train.hidden = 8;
  cfg.train.batch_size = 8;
  cfg.train.warmup = 10;
  cfg.finetune.episodes = 6;
  cfg.finetune.final_window = 3;
  cfg.finetune.selection_episodes = 1;
  const auto a = finetune(cfg, std::nullopt, 4);
  const auto b = finetune(cfg, std::nullopt, 4);
  CHECK(a.episode_returns == b.episode_returns);
  CHECK(a.episode_returns.size() == 6);
  CHECK_FALSE(a.selected_skill.has_value());
  const double tail = (a.episode_returns[3] + a.episode_returns[4] + a.episode_returns[5]) / 3.0;
  CHECK(a.final_window_mean == doctest::Approx(tail));

  Trainer pre(cfg, 9);
  pre.train_until(4);
  const auto c = finetune(cfg, pre.to_checkpoint(), 4);
  REQUIRE(c.selected_skill.has_value());
  CHECK(c.selection_returns.size() == pre.skill_space().active_k);
  CHECK(*c.selected_skill == select_skill(c.selection_returns));
}
