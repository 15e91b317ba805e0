// masd_acceptance --criterion N [--work DIR]
//
// Runs one acceptance criterion (1-11) and prints a single summary line
// "criterion N: PASS|FAIL <detail>". Exit status is 0 only on PASS.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "masd/experiments.hpp"

using namespace masd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

fs::path source_path(const std::string& rel) { return fs::path(MASD_SOURCE_DIR) / rel; }

ExperimentConfig config_for(const std::string& name, const Overrides& overrides = {}) {
  return load_config(source_path("configs/" + name + ".yaml").string(), overrides);
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = g_work / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void note(const std::string& line) { std::cout << "  " << line << std::endl; }

// -- 1, 2: xor -----------------------------------------------------------------

template <class Good>
Outcome xor_seeds(double beta, const std::string& tag, Good good) {
  auto cfg = config_for("xor", {{"reward.beta", fmt(beta, 2)}});
  const fs::path dir = fresh_dir(tag);
  int passed = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = run_xor_seed(cfg, seed, dir / seed_dir_name(seed));
    const bool ok = good(r.mi);
    passed += ok ? 1 : 0;
    note("seed " + std::to_string(seed) + ": global " + fmt(r.mi.global) + ", local " +
         fmt(r.mi.local[0]) + " / " + fmt(r.mi.local[1]) + (ok ? "  ok" : "  miss"));
  }
  return {passed >= 7, std::to_string(passed) + "/10 seeds meet the bound (need 7)"};
}

Outcome criterion1() {
  return xor_seeds(1.5, "c1_xor_beta1.5",
                   [](const XorMi& mi) { return mi.global >= 0.9 && mi.mean_local() <= 0.15; });
}

Outcome criterion2() {
  return xor_seeds(0.0, "c2_xor_beta0",
                   [](const XorMi& mi) { return mi.global >= 0.9 && mi.max_local() >= 0.8; });
}

// -- 3: sampled vs exact MI ------------------------------------------------------

Outcome criterion3() {
  Rng rng(2024);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    XorPolicyTable t{};
    // Mix near-deterministic and soft entries so the MIs cover the range.
    for (auto& agent : t)
      for (auto& a1 : agent)
        for (auto& a2 : a1)
          for (auto& p : a2) {
            const double u = rng.uniform();
            p = k % 2 == 0 ? (u < 0.5 ? 0.02 * u : 1.0 - 0.02 * u) : u;
          }
    const XorMi exact = exact_mi_xor(t);
    const XorMi est = sampled_mi_xor(t, 100000, rng);
    worst = std::max({worst, std::abs(exact.global - est.global), std::abs(exact.local[0] - est.local[0]),
                      std::abs(exact.local[1] - est.local[1])});
  }
  return {worst < 0.02, "max |sampled - exact| = " + fmt(worst, 4) + " bits over 20 policies (bound 0.02)"};
}

// -- 4: gradients ------------------------------------------------------------------

Outcome criterion4() {
  Rng rng(77);
  struct Kind {
    std::string name;
    std::function<double()> instance;
  };
  const std::vector<Kind> kinds{
      {"actor", [&] { return gradcheck::actor_instance(rng); }},
      {"critic", [&] { return gradcheck::critic_instance(rng); }},
      {"disc-ce", [&] { return gradcheck::discriminator_instance(rng, DiscLoss::kCrossEntropy); }},
      {"disc-l1", [&] { return gradcheck::discriminator_instance(rng, DiscLoss::kL1); }},
      {"disc-l2", [&] { return gradcheck::discriminator_instance(rng, DiscLoss::kL2); }},
  };
  bool pass = true;
  std::string detail;
  for (const auto& k : kinds) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, k.instance());
    pass &= worst < 1e-4;
    note(k.name + ": worst relative error " + sci(worst));
    detail += k.name + " " + sci(worst) + " ";
  }
  return {pass, "max relative error per loss (bound 1e-4): " + detail};
}

// -- 5: pseudo reward algebra -------------------------------------------------------

Outcome criterion5() {
  Rng rng(5);
  int failures = 0;
  for (int c = 0; c < 10000; ++c) {
    const std::size_t n = 1 + rng.index(8);
    std::vector<double> locals(n);
    for (auto& v : locals) v = rng.uniform(kLogProbFloor, 0.0);
    const double g = rng.uniform(kLogProbFloor, 0.0);
    const double beta = rng.uniform(0.0, 4.0);
    double sum = 0.0, lo = locals[0];
    for (double v : locals) {
      sum += v;
      lo = std::min(lo, v);
    }
    const double mean = sum / static_cast<double>(n);
    failures += pseudo_reward({beta, Aggregation::kMean}, g, locals) != g - beta * mean;
    failures += pseudo_reward({beta, Aggregation::kMin}, g, locals) != g - beta * lo;
    failures += pseudo_reward({0.0, Aggregation::kMean}, g, locals) != g;
    failures += pseudo_reward({0.0, Aggregation::kMin}, g, locals) != g;
  }
  return {failures == 0, std::to_string(failures) + " mismatches in 10000 cases"};
}

// -- 6: curriculum -------------------------------------------------------------------

Outcome criterion6() {
  Rng rng(6);
  int violations = 0;
  std::size_t expansions = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    Curriculum cur;  // threshold -0.18, window 10
    auto space = SkillSpace::discrete(30, 1 + rng.index(30));
    std::size_t run = 0;
    for (int t = 0; t < 200; ++t) {
      // Values cluster around the threshold, including the boundary itself.
      const double m = rng.bernoulli(0.05) ? -0.18 : rng.uniform(-0.25, -0.1);
      const std::size_t before = space.active_k;
      run = m >= -0.18 ? run + 1 : 0;
      const bool expect = run >= cur.window() && before < 30;
      const bool grew = cur.maybe_expand(space, m);
      violations += grew != expect;
      violations += space.active_k != before + (expect ? 1 : 0);
      violations += space.active_k < before || space.active_k > 30;
      if (expect) {
        run = 0;
        ++expansions;
      }
    }
  }
  return {violations == 0 && expansions > 0,
          std::to_string(violations) + " violations over 2000 sequences (" + std::to_string(expansions) +
              " expansions)"};
}

// -- 7, 8: particle skill statistics --------------------------------------------------

Checkpoint train_particle(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  const auto r = run_train_seed(cfg, seed, dir);
  return load_checkpoint(r.checkpoint);
}

Outcome criterion7() {
  const fs::path dir = fresh_dir("c7_spread");
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    double score[2];
    for (int arm = 0; arm < 2; ++arm) {
      const double beta = arm == 0 ? 0.5 : 0.0;
      auto cfg = config_for("spread", {{"reward.beta", fmt(beta, 2)}});
      const fs::path d = dir / ("beta_" + fmt(beta, 1)) / seed_dir_name(seed);
      const Checkpoint ck = train_particle(cfg, seed, d);
      const auto inits = perturbed_inits(cfg.particle(), cfg.eval.init_seed, 30);
      const auto records = evaluate_policy(cfg, ck, seed, inits, "beta_" + fmt(beta, 1));
      write_trajectories(d / "trajectories_perturbed.csv", records);
      const auto stats = trajectory_stats(records);
      score[arm] = skill_cluster_score(stats.points);
      note("seed " + std::to_string(seed) + " beta " + fmt(beta, 1) + ": cluster score " + fmt(score[arm], 4) +
           " (" + std::to_string(stats.points.size()) + " episodes, " + std::to_string(stats.degenerate) +
           " degenerate)");
    }
    wins += score[0] < score[1] ? 1 : 0;
  }
  return {wins >= 2, std::to_string(wins) + "/3 seed pairs with a lower cluster score at beta 0.5 (need 2)"};
}

double mean_endpoint_std(const std::vector<EndpointStd>& stds) {
  double s = 0.0;
  for (const auto& e : stds) s += e.combined;
  return stds.empty() ? 0.0 : s / static_cast<double>(stds.size());
}

Outcome criterion8() {
  const fs::path dir = fresh_dir("c8_rendezvous");
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    double spread[2];
    for (int arm = 0; arm < 2; ++arm) {
      const double beta = arm == 0 ? 1.0 : 0.0;
      auto cfg = config_for("rendezvous", {{"reward.beta", fmt(beta, 2)}});
      const fs::path d = dir / ("beta_" + fmt(beta, 1)) / seed_dir_name(seed);
      const Checkpoint ck = train_particle(cfg, seed, d);
      const auto records =
          evaluate_policy(cfg, ck, seed, grid_inits(cfg.particle(), cfg.eval.init_seed), "beta_" + fmt(beta, 1));
      write_trajectories(d / "trajectories_grid.csv", records);
      spread[arm] = mean_endpoint_std(endpoint_std(records));
      note("seed " + std::to_string(seed) + " beta " + fmt(beta, 1) + ": mean endpoint std " + fmt(spread[arm], 4));
    }
    wins += spread[0] > spread[1] ? 1 : 0;
  }
  return {wins >= 2, std::to_string(wins) + "/3 seed pairs with a larger endpoint std at beta 1 (need 2)"};
}

// -- 9: tag finetuning -------------------------------------------------------------------

Outcome criterion9() {
  const fs::path dir = fresh_dir("c9_tag");
  auto cfg = config_for("tag");
  cfg.env.include_auxiliary = false;
  double pre_sum = 0.0, rnd_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Checkpoint ck = train_particle(cfg, seed, dir / "pretrain" / seed_dir_name(seed));
    const auto pre = finetune(cfg, ck, seed);
    const auto rnd = finetune(cfg, std::nullopt, seed);
    pre_sum += pre.final_window_mean;
    rnd_sum += rnd.final_window_mean;
    note("seed " + std::to_string(seed) + ": skill-initialized " + fmt(pre.final_window_mean, 2) + " (skill " +
         std::to_string(pre.selected_skill.value_or(-1)) + "), random " + fmt(rnd.final_window_mean, 2));
  }
  return {pre_sum >= rnd_sum, "mean final-window return: skill-initialized " + fmt(pre_sum / 3, 2) +
                                  " vs random " + fmt(rnd_sum / 3, 2)};
}

// -- 10: reproducibility -----------------------------------------------------------------------

Outcome criterion10() {
  const fs::path dir = fresh_dir("c10_repro");
  struct Job {
    std::string name;
    std::function<fs::path(const fs::path&)> run;  // returns the metrics file
  };
  const std::vector<Job> jobs{
      {"xor", [](const fs::path& d) {
         run_xor_seed(config_for("xor"), 3, d);
         return d / "metrics.jsonl";
       }},
      {"spread", [](const fs::path& d) {
         return run_train_seed(config_for("spread", {{"train.episodes", "300"}}), 3, d).metrics;
       }},
      {"tag-finetune", [](const fs::path& d) {
         auto cfg = config_for("tag", {{"train.episodes", "100"}, {"finetune.episodes", "100"}});
         cfg.finetune.final_window = 20;
         const auto pre = run_train_seed(cfg, 3, d / "pretrain");
         cmd_finetune(cfg, pre.checkpoint, {3}, d / "finetune");
         return d / "finetune" / "curves.json";
       }},
  };
  bool pass = true;
  std::string detail;
  for (const auto& job : jobs) {
    const auto a = job.run(dir / job.name / "a");
    const auto b = job.run(dir / job.name / "b");
    const bool same = fs::file_size(a) > 0 && slurp(a) == slurp(b);
    pass &= same;
    detail += job.name + (same ? " identical; " : " DIFFERS; ");
  }
  return {pass, detail};
}

// -- 11: serialization -------------------------------------------------------------------------

Outcome criterion11() {
  const fs::path dir = fresh_dir("c11_serialization");
  auto cfg = config_for("spread", {{"train.episodes", "60"}, {"train.warmup", "200"}});
  bool pass = true;
  std::string detail;

  // Checkpoint round trip, in memory and on disk.
  Trainer t(cfg, 4);
  t.train_until(60);
  const Checkpoint ck = t.to_checkpoint();
  save_checkpoint(dir / "a.bin", ck);
  const Checkpoint back = load_checkpoint(dir / "a.bin");
  save_checkpoint(dir / "b.bin", back);
  const bool ck_ok = back == ck && slurp(dir / "a.bin") == slurp(dir / "b.bin");
  Trainer restored(cfg, 99);
  restored.restore(back);
  const bool state_ok = restored.to_checkpoint() == ck;
  pass &= ck_ok && state_ok;
  detail += std::string("checkpoint ") + (ck_ok && state_ok ? "identical" : "DIFFERS");

  // Trajectory CSV round trip.
  const auto records = evaluate_policy(cfg, ck, 4, perturbed_inits(cfg.particle(), cfg.eval.init_seed, 5), "rt");
  write_trajectories(dir / "traj.csv", records);
  const auto reread = read_trajectories(dir / "traj.csv");
  bool csv_ok = reread.size() == records.size();
  for (std::size_t i = 0; csv_ok && i < records.size(); ++i) csv_ok = reread[i].agents == records[i].agents;
  pass &= csv_ok;
  detail += std::string("; csv ") + (csv_ok ? "identical" : "DIFFERS");

  // Resume at episode 50, then 10 more episodes, against an uninterrupted run.
  auto first = cfg;
  first.train.episodes = 50;
  const auto straight = run_train_seed(cfg, 4, dir / "straight");
  const auto part = run_train_seed(first, 4, dir / "resumed");
  const auto resumed = run_train_seed(cfg, 4, dir / "resumed", part.checkpoint);
  const bool resume_ok = slurp(straight.metrics) == slurp(resumed.metrics) &&
                         load_checkpoint(straight.checkpoint) == load_checkpoint(resumed.checkpoint);
  pass &= resume_ok;
  detail += std::string("; resume ") + (resume_ok ? "matches" : "DIFFERS");
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MASD acceptance criteria"};
  int criterion = 0;
  std::string work = "acceptance_work";
  app.add_option("--criterion", criterion, "Criterion number (1-11)")->required()->check(CLI::Range(1, 11));
  app.add_option("--work", work, "Scratch directory for run outputs");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  const std::vector<std::function<Outcome()>> all{criterion1, criterion2, criterion3, criterion4,
                                                  criterion5, criterion6, criterion7, criterion8,
                                                  criterion9, criterion10, criterion11};
  Outcome out;
  try {
    out = all[static_cast<std::size_t>(criterion - 1)]();
  } catch (const std::exception& e) {
    out = {false, std::string("error: ") + e.what()};
  }
  std::cout << "criterion " << criterion << ": " << (out.pass ? "PASS" : "FAIL") << "  " << out.detail
            << std::endl;
  return out.pass ? 0 : 1;
}
