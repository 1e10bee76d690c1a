#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curnm/config.hpp"
#include "curnm/trainer.hpp"

namespace curnm {

struct RunResult {
  std::string dataset;
  std::string sampler;
  std::uint64_t seed = 0;
  double ap_transductive = 0.0;
  double ap_inductive = 0.0;
  double epoch_time_s = 0.0;        // mean training wall time per epoch
  double epoch_time_total_s = 0.0;  // including the per-epoch validation pass
  double best_val_ap = 0.0;
  std::int64_t best_epoch = 0;
  std::int64_t epochs_run = 0;
  double lambda_used = 0.0;
  std::vector<EpochRecord> trace;
};

std::string run_result_to_json(const RunResult& r);
RunResult run_result_from_json(const std::string& text);

struct RunPaths {
  std::string dir;
  std::string manifest;
  std::string run_json;
  std::string schedule_csv;
  std::string metrics_csv;
  std::string timing_csv;
  std::string checkpoint;
};
RunPaths run_paths(const ExperimentConfig& cfg, std::uint64_t seed);

enum class ExistingRunPolicy { refuse, skip, overwrite };

TemporalGraph resolve_dataset(const ExperimentConfig& cfg);

/// Trains and evaluates one seed, persisting manifest, traces, checkpoint and
/// run JSON under the run directory.
RunResult run_single(const ExperimentConfig& cfg, const TemporalGraph& g,
                     const ChronologicalSplit& split, std::uint64_t seed,
                     ExistingRunPolicy policy, std::ostream& log);

/// All seeds of the config. Existing identical runs refuse unless forced.
std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, bool force,
                                      std::ostream& log);

struct GridOutcome {
  struct Cell {
    std::string label;
    std::map<std::string, std::string> overrides;
    double mean_val_ap = 0.0;
  };
  std::vector<Cell> leaderboard;  // sorted best-first
  std::string best_config_canonical;
};

/// Cartesian product over `grid.<key> = v1,v2,...` entries of the map;
/// optional uniform subsample via grid.sample / grid.sample_seed. Completed
/// cells (matching manifests) are skipped, so interrupted searches resume.
GridOutcome grid_search(const ConfigMap& base_map, std::ostream& log);

}  // namespace curnm
