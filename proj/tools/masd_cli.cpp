// masd <subcommand> --config PATH [--set key=value]... [--seeds a,b,c] [--out DIR]

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "masd/experiments.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string seeds = "1";
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "YAML experiment config");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "Override a config key (key=value), repeatable");
  cmd->add_option("--seeds", c.seeds, "Comma-separated seed list");
  cmd->add_option("--out", c.out, "Output directory (default: $MASD_OUT, then output_dir)");
}

masd::ExperimentConfig load(const Common& c) {
  masd::Overrides overrides;
  for (const auto& s : c.sets) overrides.push_back(masd::parse_override(s));
  return masd::load_config(c.config, overrides);
}

masd::fs::path out_dir(const Common& c, const masd::ExperimentConfig* config) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("MASD_OUT"); env && *env) return env;
  return config ? config->output_dir : "masd_out";
}

// Runs `body` per seed, reporting each failure; returns how many failed.
template <class F>
int for_each_seed(const std::vector<std::uint64_t>& seeds, F&& body) {
  int failed = 0;
  for (auto seed : seeds) {
    try {
      body(seed);
    } catch (const std::exception& e) {
      std::cerr << "seed " << seed << " failed: " << e.what() << "\n";
      ++failed;
    }
  }
  return failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent skill discovery experiments"};
  app.require_subcommand(1);

  Common xor_c, train_c, eval_c, ft_c, an_c;

  auto* xor_cmd = app.add_subcommand("xor", "Train on the XOR game and report mutual information");
  add_common(xor_cmd, xor_c);

  auto* train_cmd = app.add_subcommand("train", "Skill discovery on a particle task");
  add_common(train_cmd, train_c);
  std::string resume;
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from (single seed)")
      ->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "Noise-free rollouts of every active skill");
  add_common(eval_cmd, eval_c);
  std::string eval_ckpt;
  masd::EvalRequest request;
  bool no_fixed = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_flag("--fixed-init", request.fixed_init, "Roll out from the fixed start (default)");
  eval_cmd->add_flag("--no-fixed-init", no_fixed, "Skip the fixed start");
  eval_cmd->add_flag("--grid", request.grid, "Also roll out from the 16 grid starts");
  eval_cmd->add_option("--perturb", request.perturb, "Number of perturbed starts");
  eval_cmd->add_option("--run-id", request.run_id, "Label stored in the trajectory CSV");

  auto* ft_cmd = app.add_subcommand("finetune", "Tag finetuning from skills and from scratch");
  add_common(ft_cmd, ft_c);
  std::string ft_ckpt;
  bool no_aux = false;
  ft_cmd->add_option("--checkpoint", ft_ckpt, "Pretrained tag checkpoint (default: finetune.checkpoint)")
      ->check(CLI::ExistingFile);
  ft_cmd->add_flag("--no-aux", no_aux, "Drop the distance term from the tag reward");

  auto* an_cmd = app.add_subcommand("analyze", "Trajectory statistics and plots from CSV files");
  std::vector<std::string> csvs;
  an_cmd->add_option("--csv", csvs, "Trajectory CSV, repeatable")->required()->check(CLI::ExistingFile);
  an_cmd->add_option("--out", an_c.out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*xor_cmd) {
      const auto config = load(xor_c);
      const auto out = out_dir(xor_c, &config);
      std::vector<masd::XorSeedResult> results;
      const int failed = for_each_seed(masd::parse_seeds(xor_c.seeds), [&](std::uint64_t seed) {
        results.push_back(masd::run_xor_seed(config, seed, out / masd::seed_dir_name(seed)));
      });
      masd::write_xor_outputs(results, out);
      std::cout << "seed\tglobal_mi\tlocal_mi_1\tlocal_mi_2\tmean_local_mi\n";
      for (const auto& r : results) {
        std::cout << r.seed << "\t" << r.mi.global << "\t" << r.mi.local[0] << "\t" << r.mi.local[1] << "\t"
                  << r.mi.mean_local() << "\n";
      }
      return failed == 0 ? 0 : 1;
    }
    if (*train_cmd) {
      const auto config = load(train_c);
      const auto out = out_dir(train_c, &config);
      const auto seeds = masd::parse_seeds(train_c.seeds);
      if (!resume.empty() && seeds.size() != 1) {
        std::cerr << "--resume needs exactly one seed\n";
        return 2;
      }
      const int failed = for_each_seed(seeds, [&](std::uint64_t seed) {
        std::optional<masd::fs::path> from;
        if (!resume.empty()) from = resume;
        const auto r = masd::run_train_seed(config, seed, out / masd::seed_dir_name(seed), from);
        std::cout << "seed " << seed << ": active_k " << r.active_k << ", checkpoint " << r.checkpoint.string()
                  << "\n";
      });
      return failed == 0 ? 0 : 1;
    }
    if (*eval_cmd) {
      const auto config = load(eval_c);
      const auto out = out_dir(eval_c, &config);
      if (no_fixed) request.fixed_init = false;
      const int failed = for_each_seed(masd::parse_seeds(eval_c.seeds), [&](std::uint64_t seed) {
        for (const auto& p : masd::cmd_eval(config, eval_ckpt, seed, request, out / masd::seed_dir_name(seed))) {
          std::cout << p.string() << "\n";
        }
      });
      return failed == 0 ? 0 : 1;
    }
    if (*ft_cmd) {
      if (no_aux) ft_c.sets.push_back("env.include_auxiliary=false");
      const auto config = load(ft_c);
      const auto out = out_dir(ft_c, &config);
      std::optional<masd::fs::path> ck;
      if (!ft_ckpt.empty()) {
        ck = ft_ckpt;
      } else if (!config.finetune.checkpoint.empty()) {
        ck = config.finetune.checkpoint;
      }
      const auto results = masd::cmd_finetune(config, ck, masd::parse_seeds(ft_c.seeds), out);
      std::cout << "seed\trandom_final\tpretrained_final\tselected_skill\n";
      for (const auto& r : results) {
        std::cout << r.seed << "\t" << r.random.final_window_mean << "\t";
        if (r.pretrained) {
          std::cout << r.pretrained->final_window_mean << "\t" << *r.pretrained->selected_skill;
        } else {
          std::cout << "-\t-";
        }
        std::cout << "\n";
      }
      return 0;
    }
    if (*an_cmd) {
      std::vector<masd::fs::path> paths(csvs.begin(), csvs.end());
      const auto out = out_dir(an_c, nullptr);
      std::cout << "run_id\trecords\tcluster_score\tmean_endpoint_std\n";
      for (const auto& a : masd::cmd_analyze(paths, out)) {
        std::cout << a.run_id << "\t" << a.records << "\t";
        if (a.cluster_score) {
          std::cout << *a.cluster_score;
        } else {
          std::cout << "-";
        }
        std::cout << "\t" << a.mean_endpoint_std << "\n";
      }
      return 0;
    }
  } catch (const masd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
