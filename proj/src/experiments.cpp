#include "masd/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace masd {
namespace {

using nlohmann::json;

void prepare_dir(const fs::path& dir, const ExperimentConfig& config) {
  fs::create_directories(dir);
  write_text(dir / "config.yaml", dump_config(config));
}

json mi_json(const XorMi& mi) {
  return {{"global", mi.global}, {"local", {mi.local[0], mi.local[1]}}, {"mean_local", mi.mean_local()}};
}

std::vector<double> mean_curve(const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) return {};
  std::size_t n = curves.front().size();
  for (const auto& c : curves) n = std::min(n, c.size());
  std::vector<double> out(n, 0.0);
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < n; ++i) out[i] += c[i] / static_cast<double>(curves.size());
  }
  return out;
}

std::vector<double> iota_curve(std::size_t n, double start) {
  std::vector<double> x(n);
  std::iota(x.begin(), x.end(), start);
  return x;
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw std::invalid_argument("bad seed list '" + text + "'");
    }
    seeds.push_back(v);
    start = end + 1;
  }
  return seeds;
}

Snapshot base_snapshot(const ParticleConfig& config, std::uint64_t init_seed) {
  Rng rng(init_seed);
  return snapshot_of(particle_reset(config, rng), config);
}

std::vector<Snapshot> grid_inits(const ParticleConfig& config, std::uint64_t init_seed) {
  const Snapshot base = base_snapshot(config, init_seed);
  constexpr double kOffsets[4] = {-0.45, -0.15, 0.15, 0.45};
  std::vector<Snapshot> out;
  for (double y : kOffsets) {
    for (double x : kOffsets) {
      Snapshot s = base;
      s.agents[0] = Vec2(x, y);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<Snapshot> perturbed_inits(const ParticleConfig& config, std::uint64_t init_seed,
                                      std::size_t count) {
  const Snapshot base = base_snapshot(config, init_seed);
  Rng rng(init_seed + 1);
  std::vector<Snapshot> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(perturb_snapshot(base, rng));
  return out;
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

XorSeedResult run_xor_seed(const ExperimentConfig& config, std::uint64_t seed, const fs::path& dir) {
  if (config.task != Task::kXor) throw ConfigError("task", "the xor command needs task: xor");
  prepare_dir(dir, config);
  Trainer trainer(config, seed);
  MetricsWriter metrics(dir / "metrics.jsonl");
  trainer.train_until(config.train.episodes, &metrics);
  save_checkpoint(dir / "checkpoint.bin", trainer.to_checkpoint());
  XorSeedResult r;
  r.seed = seed;
  r.policy = trainer.xor_policy_table();
  r.mi = exact_mi_xor(r.policy);
  return r;
}

void write_xor_outputs(const std::vector<XorSeedResult>& results, const fs::path& out) {
  std::vector<Series> series;
  json summary = json::array();
  for (const auto& r : results) {
    const std::string tag = " seed " + std::to_string(r.seed);
    Series g{"global" + tag, {}, {}, skill_palette()[0], 1.2, 0.7};
    Series l{"mean local" + tag, {}, {}, skill_palette()[1], 1.2, 0.7};
    for (const auto& m : read_metrics(out / seed_dir_name(r.seed) / "metrics.jsonl")) {
      if (!m.mi_global || !m.mi_local) continue;
      g.x.push_back(static_cast<double>(m.episode));
      g.y.push_back(*m.mi_global);
      l.x.push_back(static_cast<double>(m.episode));
      l.y.push_back(0.5 * ((*m.mi_local)[0] + (*m.mi_local)[1]));
    }
    series.push_back(std::move(g));
    series.push_back(std::move(l));
    json entry = mi_json(r.mi);
    entry["seed"] = r.seed;
    summary.push_back(entry);
  }
  write_text(out / "mi_curve.svg",
             svg_lines({"Mutual information during training", "episode", "bits", std::nullopt,
                        std::pair{0.0, 2.0}},
                       series));
  write_text(out / "summary.json", summary.dump(2) + "\n");
}

std::vector<XorSeedResult> cmd_xor(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                                   const fs::path& out) {
  std::vector<XorSeedResult> results;
  for (auto seed : seeds) results.push_back(run_xor_seed(config, seed, out / seed_dir_name(seed)));
  write_xor_outputs(results, out);
  return results;
}

TrainSeedResult run_train_seed(const ExperimentConfig& config, std::uint64_t seed, const fs::path& dir,
                               const std::optional<fs::path>& resume) {
  if (config.task == Task::kXor) throw ConfigError("task", "use the xor command for the xor game");
  prepare_dir(dir, config);
  Trainer trainer(config, seed);
  if (resume) trainer.restore(load_checkpoint(*resume));
  MetricsWriter metrics(dir / "metrics.jsonl", !resume.has_value());
  trainer.train_until(config.train.episodes, &metrics, [&](const Trainer& t) {
    save_checkpoint(dir / "checkpoints" / ("episode_" + std::to_string(t.episode()) + ".bin"),
                    t.to_checkpoint());
  });
  TrainSeedResult r;
  r.seed = seed;
  r.checkpoint = dir / "checkpoint.bin";
  r.metrics = metrics.path();
  r.active_k = trainer.skill_space().active_k;
  save_checkpoint(r.checkpoint, trainer.to_checkpoint());
  return r;
}

std::vector<TrainSeedResult> cmd_train(const ExperimentConfig& config,
                                       const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  std::vector<TrainSeedResult> results;
  for (auto seed : seeds) results.push_back(run_train_seed(config, seed, out / seed_dir_name(seed)));
  return results;
}

std::vector<TrajectoryRecord> evaluate_policy(const ExperimentConfig& config, const Checkpoint& checkpoint,
                                              std::uint64_t seed, const std::vector<Snapshot>& inits,
                                              const std::string& run_id) {
  Trainer trainer(config, seed);
  trainer.load_policies(checkpoint, false);
  const SkillSpace& space = trainer.skill_space();
  if (space.kind != SkillKind::kDiscrete) throw ConfigError("skills.kind", "evaluation needs discrete skills");
  std::vector<TrajectoryRecord> records;
  for (std::size_t k = 0; k < space.active_k; ++k) {
    for (std::size_t i = 0; i < inits.size(); ++i) {
      // Only the prey draws from this stream; a fixed seed per start keeps
      // every (skill, start) rollout reproducible on its own.
      Rng rng(config.eval.init_seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
      Rollout r = trainer.rollout(SkillCode{static_cast<int>(k), {}}, inits[i], rng);
      r.trajectory.run_id = run_id;
      r.trajectory.init_id = i;
      records.push_back(std::move(r.trajectory));
    }
  }
  return records;
}

std::vector<fs::path> cmd_eval(const ExperimentConfig& config, const fs::path& checkpoint_path,
                               std::uint64_t seed, const EvalRequest& request, const fs::path& out) {
  fs::create_directories(out);
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const ParticleConfig pc = config.particle();
  std::vector<fs::path> written;
  auto emit = [&](const std::string& kind, const std::vector<Snapshot>& inits) {
    auto records = evaluate_policy(config, ck, seed, inits, request.run_id);
    const fs::path csv = out / ("trajectories_" + kind + ".csv");
    write_trajectories(csv, records);
    written.push_back(csv);
    return records;
  };
  if (request.fixed_init) {
    const auto records = emit("fixed", {base_snapshot(pc, config.eval.init_seed)});
    write_text(out / "skills_fixed.svg",
               svg_trajectories({"Skill trajectories from the fixed start", "x", "y", std::pair{-1.0, 1.0},
                                 std::pair{-1.0, 1.0}},
                                records));
  }
  if (request.grid) emit("grid", grid_inits(pc, config.eval.init_seed));
  if (request.perturb > 0) emit("perturbed", perturbed_inits(pc, config.eval.init_seed, request.perturb));
  return written;
}

std::vector<FinetuneSummary> cmd_finetune(const ExperimentConfig& config,
                                          const std::optional<fs::path>& checkpoint,
                                          const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  if (config.task != Task::kTag) throw ConfigError("task", "finetuning runs on the tag task");
  prepare_dir(out, config);
  std::optional<Checkpoint> ck;
  if (checkpoint) ck = load_checkpoint(*checkpoint);

  std::vector<FinetuneSummary> results;
  json curves = json::object();
  json summary = json::object();
  std::vector<std::vector<double>> random_curves, pretrained_curves;
  for (auto seed : seeds) {
    FinetuneSummary s;
    s.seed = seed;
    s.random = finetune(config, std::nullopt, seed);
    random_curves.push_back(s.random.episode_returns);
    json entry = {{"random", {{"final_window_mean", s.random.final_window_mean}}}};
    curves[std::to_string(seed)]["random"] = s.random.episode_returns;
    if (ck) {
      s.pretrained = finetune(config, ck, seed);
      pretrained_curves.push_back(s.pretrained->episode_returns);
      entry["pretrained"] = {{"final_window_mean", s.pretrained->final_window_mean},
                             {"selected_skill", *s.pretrained->selected_skill},
                             {"selection_returns", s.pretrained->selection_returns}};
      curves[std::to_string(seed)]["pretrained"] = s.pretrained->episode_returns;
    }
    summary["seeds"][std::to_string(seed)] = entry;
    results.push_back(std::move(s));
  }
  auto mean_final = [](const std::vector<FinetuneSummary>& rs, bool pre) {
    double total = 0.0;
    for (const auto& r : rs) total += pre ? r.pretrained->final_window_mean : r.random.final_window_mean;
    return total / static_cast<double>(rs.size());
  };
  summary["include_auxiliary"] = config.env.include_auxiliary;
  summary["mean_final_window"]["random"] = mean_final(results, false);
  if (ck) summary["mean_final_window"]["pretrained"] = mean_final(results, true);

  std::vector<Series> series;
  const auto rm = mean_curve(random_curves);
  series.push_back({"random init", iota_curve(rm.size(), 1.0), rm, skill_palette()[0]});
  if (ck) {
    const auto pm = mean_curve(pretrained_curves);
    series.push_back({"skill init", iota_curve(pm.size(), 1.0), pm, skill_palette()[1]});
  }
  write_text(out / "curves.json", curves.dump() + "\n");
  write_text(out / "curves.svg",
             svg_lines({"Finetuning return (mean over seeds)", "episode", "return", std::nullopt, std::nullopt},
                       series));
  write_text(out / "summary.json", summary.dump(2) + "\n");
  return results;
}

std::vector<RunAnalysis> analyze_records(const std::vector<TrajectoryRecord>& records) {
  std::map<std::string, std::vector<TrajectoryRecord>> by_run;
  for (const auto& r : records) by_run[r.run_id].push_back(r);
  std::vector<RunAnalysis> out;
  for (const auto& [run_id, recs] : by_run) {
    RunAnalysis a;
    a.run_id = run_id;
    a.records = recs.size();
    const TrajectoryStats stats = trajectory_stats(recs);
    a.degenerate = stats.degenerate;
    try {
      a.cluster_score = skill_cluster_score(stats.points);
    } catch (const std::invalid_argument&) {
      a.cluster_score.reset();  // fewer than two skills with two usable points
    }
    a.endpoint_std = endpoint_std(recs);
    for (const auto& e : a.endpoint_std) a.mean_endpoint_std += e.combined;
    if (!a.endpoint_std.empty()) a.mean_endpoint_std /= static_cast<double>(a.endpoint_std.size());
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<RunAnalysis> cmd_analyze(const std::vector<fs::path>& csvs, const fs::path& out) {
  std::vector<TrajectoryRecord> records;
  for (const auto& p : csvs) {
    auto part = read_trajectories(p);
    records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const auto analyses = analyze_records(records);
  fs::create_directories(out);

  json summary = json::array();
  std::vector<ScatterPoint> angles, lengths, stds;
  for (std::size_t r = 0; r < analyses.size(); ++r) {
    const auto& a = analyses[r];
    json entry = {{"run_id", a.run_id},
                  {"records", a.records},
                  {"degenerate", a.degenerate},
                  {"mean_endpoint_std", a.mean_endpoint_std}};
    entry["cluster_score"] = a.cluster_score ? json(*a.cluster_score) : json(nullptr);
    for (const auto& e : a.endpoint_std) {
      entry["endpoint_std"].push_back({{"skill", e.skill}, {"std_x", e.std_x}, {"std_y", e.std_y},
                                       {"combined", e.combined}});
      stds.push_back({static_cast<double>(r), e.combined, e.skill});
    }
    summary.push_back(entry);
  }
  std::map<std::string, std::vector<TrajectoryRecord>> by_run;
  for (const auto& rec : records) by_run[rec.run_id].push_back(rec);
  for (const auto& [run_id, recs] : by_run) {
    for (const auto& p : trajectory_stats(recs).points) {
      angles.push_back({p.features[0], p.features[1], p.skill});
      lengths.push_back({p.features[2], p.features[3], p.skill});
    }
  }
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_text(out / "angles.svg", svg_scatter({"Pairwise heading angles", "angle 1 (deg)", "angle 2 (deg)",
                                              std::pair{0.0, 180.0}, std::pair{0.0, 180.0}},
                                             angles));
  write_text(out / "lengths.svg",
             svg_scatter({"Trajectory lengths", "length 1", "length 2", std::nullopt, std::nullopt}, lengths));
  write_text(out / "endpoint_std.svg",
             svg_scatter({"Endpoint std per skill", "run index", "std", std::nullopt, std::nullopt}, stds));
  return analyses;
}

}  // namespace masd
