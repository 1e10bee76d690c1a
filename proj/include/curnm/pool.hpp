#pragma once

#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "curnm/graph.hpp"
#include "curnm/types.hpp"

namespace curnm {

enum class CandidateTag : std::uint8_t { hard, hist, rand };

/// Fixed-size per-source negative candidate set, anchored at one positive
/// event. Candidates are distinct and never current positives of (u, t).
struct NegativePool {
  NodeId source = -1;
  double anchor_time = 0.0;
  std::vector<NodeId> candidates;
  std::vector<CandidateTag> tags;

  std::int64_t size() const { return static_cast<std::int64_t>(candidates.size()); }
  std::int64_t count(CandidateTag tag) const;
};

/// Per-pair ring buffer of the probability scores recorded for the last five
/// epochs. The current epoch's fresh score is passed to the cache sampler
/// separately; the ring holds previous epochs only.
class ScoreHistory {
 public:
  /// Appends one epoch's scores. Throws ValidationError on p outside [0,1].
  void record_epoch(const std::unordered_map<std::uint64_t, double>& scores);
  void record(NodeId u, NodeId v, double p);

  std::int64_t count(NodeId u, NodeId v) const;
  /// Population standard deviation of the stored entries; 0 when fewer than 2.
  double std_dev(NodeId u, NodeId v) const;

  std::int64_t num_pairs() const { return static_cast<std::int64_t>(rings_.size()); }

  // checkpoint support
  void serialize(std::ostream& out) const;
  static ScoreHistory deserialize(std::istream& in);

 private:
  struct Ring {
    double vals[5];
    std::uint8_t len = 0;
    std::uint8_t head = 0;  // index of oldest entry
  };
  std::unordered_map<std::uint64_t, Ring> rings_;
};

/// Shared inputs for pool construction. `universe` is the random-candidate
/// draw set (destination side for bipartite graphs, all nodes otherwise); the
/// graph supplies current-positive exclusion at the anchor time.
struct PoolContext {
  const TemporalGraph* graph = nullptr;
  const HistoricalNeighborIndex* index = nullptr;
  std::vector<NodeId> universe;
};

/// Early-phase pool: round(gamma_hist*M) historical neighbors (uniform without
/// replacement from H_{u,t}) and random negatives for the rest; historical
/// shortage is backfilled randomly so the pool is always exactly M.
NegativePool build_early_pool(const PoolContext& ctx, NodeId u, double t,
                              std::int64_t M, double gamma_hist,
                              std::mt19937_64& rng);

/// Late-phase pool: the cached hard set (current positives evicted, capped at
/// M/2) plus a hist/rand mixture at the gamma_hist ratio over the remainder.
NegativePool build_late_pool(const PoolContext& ctx, NodeId u, double t,
                             std::int64_t M, double gamma_hist,
                             const std::vector<NodeId>& hard_cache,
                             std::mt19937_64& rng);

/// Draws k candidates without replacement, proportionally to weights
/// w_v = p_v - alpha_e * std(P_uv). Non-positive raw minima are shifted by
/// -min(w)+1e-8 first; degenerate weight vectors fall back to uniform.
/// Returns min(k, pool size) candidate ids.
std::vector<NodeId> sample_hard_cache(const NegativePool& pool,
                                      std::span<const double> fresh_scores,
                                      const ScoreHistory& history, double alpha_e,
                                      std::mt19937_64& rng);

/// Successive proportional draws without replacement; exposed for the
/// distribution oracle in tests. Returns selected indices in draw order.
std::vector<std::int64_t> weighted_sample_indices(std::span<const double> weights,
                                                  std::int64_t k,
                                                  std::mt19937_64& rng);

void dump_pool_jsonl(std::ostream& out, const NegativePool& pool);

}  // namespace curnm
