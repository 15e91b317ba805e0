#pragma once

// Experiment drivers shared by the CLI, the acceptance suite and the Python
// module. Each driver is a pure function of (config, seed, input files) and
// writes its outputs under a caller-supplied directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "masd/analysis.hpp"
#include "masd/config.hpp"
#include "masd/maddpg.hpp"

namespace masd {

namespace fs = std::filesystem;

/// "1,2,3" -> {1, 2, 3}. Throws std::invalid_argument on malformed input.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// Placement drawn from a constant seed; the reference start for evaluation.
Snapshot base_snapshot(const ParticleConfig& config, std::uint64_t init_seed);

/// 16 starts: the base snapshot with agent 0 moved over the grid
/// {-0.45, -0.15, 0.15, 0.45}^2.
std::vector<Snapshot> grid_inits(const ParticleConfig& config, std::uint64_t init_seed);

/// `count` perturbations of the base snapshot, drawn from `init_seed`.
std::vector<Snapshot> perturbed_inits(const ParticleConfig& config, std::uint64_t init_seed,
                                      std::size_t count);

std::string seed_dir_name(std::uint64_t seed);

// -- xor ---------------------------------------------------------------------

struct XorSeedResult {
  std::uint64_t seed = 0;
  XorMi mi;
  XorPolicyTable policy{};
};

/// Trains one seed, writing config.yaml, metrics.jsonl and checkpoint.bin
/// into `dir`.
XorSeedResult run_xor_seed(const ExperimentConfig& config, std::uint64_t seed, const fs::path& dir);

/// mi_curve.svg and summary.json for finished seeds; reads each seed's
/// metrics from out/seed_<s>.
void write_xor_outputs(const std::vector<XorSeedResult>& results, const fs::path& out);

/// All seeds plus the summary outputs in `out`.
std::vector<XorSeedResult> cmd_xor(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                                   const fs::path& out);

// -- train -------------------------------------------------------------------

struct TrainSeedResult {
  std::uint64_t seed = 0;
  fs::path checkpoint;
  fs::path metrics;
  std::size_t active_k = 0;
};

/// Skill discovery on a particle task. With `resume`, training continues
/// from that checkpoint and appends to the existing metrics file.
/// Periodic checkpoints go to dir/checkpoints/episode_<n>.bin.
TrainSeedResult run_train_seed(const ExperimentConfig& config, std::uint64_t seed, const fs::path& dir,
                               const std::optional<fs::path>& resume = std::nullopt);

std::vector<TrainSeedResult> cmd_train(const ExperimentConfig& config,
                                       const std::vector<std::uint64_t>& seeds, const fs::path& out);

// -- eval --------------------------------------------------------------------

/// Noise-free rollouts of every active skill from each start. Records carry
/// `run_id`, the start index as init_id and the seed.
std::vector<TrajectoryRecord> evaluate_policy(const ExperimentConfig& config, const Checkpoint& checkpoint,
                                              std::uint64_t seed, const std::vector<Snapshot>& inits,
                                              const std::string& run_id);

struct EvalRequest {
  bool fixed_init = true;     // the base snapshot
  bool grid = false;          // the 16 grid starts
  std::size_t perturb = 0;    // perturbed starts
  std::string run_id = "eval";
};

/// Writes trajectories_<kind>.csv (fixed, grid, perturbed) plus a skill fan
/// SVG for the fixed start. Returns the written CSV paths.
std::vector<fs::path> cmd_eval(const ExperimentConfig& config, const fs::path& checkpoint,
                               std::uint64_t seed, const EvalRequest& request, const fs::path& out);

// -- finetune ----------------------------------------------------------------

struct FinetuneSummary {
  std::uint64_t seed = 0;
  FinetuneResult random;
  std::optional<FinetuneResult> pretrained;
};

/// Random-init and (with a checkpoint) skill-init finetuning per seed, each
/// pair sharing the seed. Writes curves.json, curves.svg and summary.json.
std::vector<FinetuneSummary> cmd_finetune(const ExperimentConfig& config,
                                          const std::optional<fs::path>& checkpoint,
                                          const std::vector<std::uint64_t>& seeds, const fs::path& out);

// -- analyze -----------------------------------------------------------------

struct RunAnalysis {
  std::string run_id;
  std::size_t records = 0;
  std::size_t degenerate = 0;
  std::optional<double> cluster_score;
  std::vector<EndpointStd> endpoint_std;
  double mean_endpoint_std = 0.0;
};

/// Per run_id statistics for the records of every CSV in `csvs`.
std::vector<RunAnalysis> analyze_records(const std::vector<TrajectoryRecord>& records);

/// Writes summary.json, angles.svg, lengths.svg and endpoint_std.svg.
std::vector<RunAnalysis> cmd_analyze(const std::vector<fs::path>& csvs, const fs::path& out);

}  // namespace masd
