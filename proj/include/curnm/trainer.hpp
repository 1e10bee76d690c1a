#pragma once

#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "curnm/curriculum.hpp"
#include "curnm/eval.hpp"
#include "curnm/graph.hpp"
#include "curnm/host_model.hpp"
#include "curnm/pool.hpp"
#include "curnm/selector.hpp"
#include "curnm/types.hpp"

namespace curnm {

enum class SamplerKind { random, recent, curnm };

std::string to_string(SamplerKind k);
SamplerKind sampler_from_string(const std::string& s);

struct PoolConfig {
  std::int64_t M = 8;
  double gamma_hist = 0.5;
  void validate() const;
};

struct TrainerConfig {
  std::int64_t batch_size = 200;
  std::int64_t max_epochs = 400;
  double learning_rate = 1e-4;
  double lambda_con = -1.0;  // < 0: calibrated so lambda*L_con ~ L_pos on the first batch
  double mu_l2 = 1e-5;
  std::uint64_t seed = 1;
  std::int64_t patience = 20;
  std::string precision = "double";
  std::int64_t negatives_per_positive = 1;  // random/recent baselines
  std::uint64_t val_seed = 97;              // validation negatives, fixed per run
  std::string pool_dump_path;               // debug: pool JSONL
  std::string selector_dump_path;           // debug: per-pair (s_uv, s_hat, selected)
  void validate() const;
};

/// Mean binary cross-entropies combined per the minibatch loss:
/// L = L_pos + delta*L_rand + (1-delta)*L_sel + lambda*L_con + mu*||theta||^2.
struct LossBreakdown {
  double total = 0.0;
  double l_pos = 0.0;
  double l_rand = 0.0;
  double l_sel = 0.0;
  double l_con = 0.0;
  double l2 = 0.0;
};

LossBreakdown composite_loss(std::span<const double> p_pos, std::span<const double> p_rand,
                             std::span<const double> p_sel,
                             std::span<const double> l_con_pairs, double delta,
                             double lambda, double mu, double theta_squared_norm);

/// Uniform negatives over the eligible universe (current positives and the
/// source excluded). Throws TrainError when nothing is eligible.
std::vector<NodeId> random_sampler(const PoolContext& ctx, NodeId u, double t,
                                   std::int64_t n, std::mt19937_64& rng);

/// The n most recent historical neighbors (latest first); random backfill on
/// shortage.
std::vector<NodeId> recent_sampler(const PoolContext& ctx, NodeId u, double t,
                                   std::int64_t n, std::mt19937_64& rng);

struct EpochRecord {
  std::int64_t epoch = 0;
  double pi = 0, delta = 0, alpha = 0, beta = 0;
  bool cache_active = false;
  double train_loss = 0.0;
  double val_ap = 0.0;
  std::int64_t n_b = 0;
  // wall times are reported separately and never enter the deterministic trace
  double train_seconds = 0.0;
  double epoch_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  std::int64_t best_epoch = 0;
  double best_val_ap = 0.0;
  std::vector<double> best_params;  // parameter snapshot at the best epoch
  double lambda_used = 0.0;
  std::int64_t epochs_run = 0;
};

class Trainer {
 public:
  Trainer(const TemporalGraph& g, const ChronologicalSplit& split, SamplerKind sampler,
          const TrainerConfig& tcfg, const CurriculumConfig& ccfg, const PoolConfig& pcfg,
          const SelectorConfig& scfg, const HostConfig& hcfg);

  TrainResult train();

  ParameterStore& store() { return *store_; }
  TgnLite& host() { return *host_; }
  const ScoreHistory& score_history() const { return score_history_; }
  const CurriculumState& curriculum() const { return state_; }

  void restore_params(const std::vector<double>& params) {
    if (params.size() != store_->raw().size())
      throw ValidationError("parameter snapshot size mismatch");
    store_->raw() = params;
  }

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  struct BatchOutcome {
    double loss = 0.0;
    std::int64_t n_b = 0;
  };
  BatchOutcome process_batch(EventIdx begin, EventIdx end);
  BatchOutcome process_batch_baseline(EventIdx begin, EventIdx end);
  BatchOutcome process_batch_curnm(EventIdx begin, EventIdx end);
  double validation_ap();

  const TemporalGraph* g_ = nullptr;
  ChronologicalSplit split_;
  SamplerKind sampler_;
  TrainerConfig tcfg_;
  CurriculumConfig ccfg_;
  PoolConfig pcfg_;
  SelectorConfig scfg_;
  HostConfig hcfg_;

  std::unique_ptr<ParameterStore> store_;
  std::unique_ptr<TgnLite> host_;
  std::optional<SelectorParams> selector_;
  HistoricalNeighborIndex index_{0};
  PoolContext ctx_;
  CurriculumState state_;
  ScoreHistory score_history_;
  std::unordered_map<NodeId, std::vector<NodeId>> hard_cache_;
  std::unordered_map<std::uint64_t, double> epoch_scores_;
  std::mt19937_64 rng_rand_{0}, rng_pool_{0};
  double lambda_ = 0.0;
  double t_origin_ = 0.0, t_span_ = 1.0;

  std::unique_ptr<std::ofstream> pool_dump_, selector_dump_;
};

/// Versioned checkpoint: parameters + curriculum state + score history.
void write_checkpoint(const std::string& path, const ParameterStore& store,
                      const CurriculumState& state, const ScoreHistory& history);
void read_checkpoint(const std::string& path, ParameterStore& store,
                     CurriculumState& state, ScoreHistory& history);

}  // namespace curnm
