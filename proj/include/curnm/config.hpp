#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "curnm/curriculum.hpp"
#include "curnm/eval.hpp"
#include "curnm/graph.hpp"
#include "curnm/selector.hpp"
#include "curnm/trainer.hpp"
#include "curnm/types.hpp"

namespace curnm {

/// Flat key=value config text. `#` starts a comment, `include <path>` pulls in
/// another file (its keys load first, later keys override).
class ConfigMap {
 public:
  static ConfigMap load(const std::string& path);
  static ConfigMap parse(const std::string& text, const std::string& base_dir = ".");

  void set(const std::string& key, const std::string& value);
  void merge(const ConfigMap& overrides);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_real(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma-separated

  const std::map<std::string, std::string>& entries() const { return entries_; }
  /// Sorted key=value lines; the canonical form that gets hashed.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> entries_;
};

struct SyntheticSpec {
  std::int64_t num_nodes = 5000;
  std::int64_t num_events = 100000;
  double drift_rate = 0.02;        // per-source-event preference resample probability
  double recurrence_period = 0.0;  // >0: revisit the initial cluster every N own events
  double recency_strength = 0.35;  // probability of repeating a recent neighbor
  std::int64_t max_events_per_pair = 0;  // >0 caps pair repeats (sparsity control)
  double source_fraction = 0.6;
  std::int64_t clusters = 16;
  std::uint64_t seed = 13;

  void validate(std::vector<std::string>& errors) const;
};

struct ExperimentConfig {
  std::string name = "exp";
  std::string results_root = "results";

  bool use_synthetic = true;
  SyntheticSpec synthetic;
  std::string dataset_path;
  EdgeListSchema schema;

  std::array<double, 3> split_ratios{0.7, 0.15, 0.15};
  SamplerKind sampler = SamplerKind::curnm;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  TrainerConfig trainer;
  CurriculumConfig curriculum;
  PoolConfig pool;
  SelectorConfig selector;
  HostConfig host;
  std::int64_t eval_negatives = 1;
  std::uint64_t eval_seed = 1009;

  /// Builds from a config map; collects every violated constraint before
  /// throwing. max_epochs defaults feed the schedule epochs (E', E'').
  static ExperimentConfig from_map(const ConfigMap& map);

  std::string canonical() const;
  std::uint64_t hash() const;

  void validate() const;  // throws ValidationError listing all violations
};

extern const char* kCodeVersion;

}  // namespace curnm
