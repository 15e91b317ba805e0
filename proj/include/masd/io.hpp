#pragma once

// Checkpoint container, metrics JSONL, trajectory CSV and SVG plots.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "masd/envs.hpp"

namespace masd {

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (all integers little-endian):
//   magic    8 bytes  "MASDCKPT"
//   version  u32
//   count    u64      number of arrays
//   then per array, in name order:
//     name_len u32, name bytes (UTF-8)
//     dtype    u8   'd' = IEEE-754 binary64, 'u' = unsigned 64-bit
//     rows u64, cols u64
//     rows * cols 8-byte little-endian values, row-major
//   trailer  8 bytes  "MASDEND\0"

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  enum class DType : std::uint8_t { kF64 = 'd', kU64 = 'u' };
  DType dtype = DType::kF64;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> f64;
  std::vector<std::uint64_t> u64;

  bool operator==(const NamedArray& other) const;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::map<std::string, NamedArray> arrays;

  bool operator==(const Checkpoint& other) const;
};

/// Writes to a temporary file beside `path`, then renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws CheckpointError on a bad magic, version or truncated payload.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRecord {
  std::size_t episode = 0;
  std::size_t active_k = 0;
  double mean_global_lp = 0.0;
  std::vector<double> mean_local_lp;
  double pseudo_reward_mean = 0.0;
  double td_loss = 0.0;
  std::vector<double> disc_losses;  // global first, then one per agent
  std::optional<double> mi_global;
  std::optional<std::vector<double>> mi_local;
  std::optional<double> extrinsic_reward;

  /// One JSON object without a trailing newline. Throws std::domain_error
  /// if any value is NaN or infinite.
  std::string to_json() const;
  static MetricsRecord from_json(const std::string& line);
};

/// Append-only JSONL writer; every line is flushed as it is written.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path, bool truncate = true);
  void append(const MetricsRecord& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectoryRecord {
  std::string run_id;
  int skill = 0;
  std::size_t init_id = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<Vec2>> agents;  // per agent, T + 1 positions
};

/// Columns: run_id,skill,agent,step,x,y,init_id,seed. Coordinates use the
/// shortest decimal form that round-trips exactly.
void write_trajectories(const std::filesystem::path& path,
                        const std::vector<TrajectoryRecord>& records);
std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path& path);

/// Snapshots share the CSV schema: one row per entity with step 0, the agent
/// column holding "0", "1", ... for agents, "L<j>" for landmarks, "P" for
/// the prey.
void write_snapshot(const std::filesystem::path& path, const Snapshot& snapshot);
Snapshot read_snapshot(const std::filesystem::path& path);

std::string format_real(double v);

// ---------------------------------------------------------------------------
// SVG

/// Fixed 30-colour palette; skill k uses palette[k % 30].
const std::vector<std::string>& skill_palette();

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;
  double width = 1.5;
  double opacity = 1.0;
};

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  int group = 0;
};

struct PlotFrame {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::optional<std::pair<double, double>> x_range;
  std::optional<std::pair<double, double>> y_range;
};

/// Line chart (MI / reward curves).
std::string svg_lines(const PlotFrame& frame, const std::vector<Series>& series);
/// Points coloured by group (angle / length / std scatter plots).
std::string svg_scatter(const PlotFrame& frame, const std::vector<ScatterPoint>& points);
/// Per-skill coloured trajectory fans in world coordinates.
std::string svg_trajectories(const PlotFrame& frame, const std::vector<TrajectoryRecord>& records);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace masd
