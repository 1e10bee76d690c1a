#pragma once

#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "curnm/graph.hpp"
#include "curnm/host_model.hpp"
#include "curnm/types.hpp"

namespace curnm {

struct EvalProtocol {
  enum class Mode { transductive, inductive };
  Mode mode = Mode::transductive;
  std::int64_t negatives_per_positive = 1;
  std::uint64_t seed = 7;
  double historical_fraction = 0.5;  // transductive mix
  bool exact_stratification = false; // alternate hist/random deterministically
  bool both_endpoints_unseen = false;

  void validate() const;
};

/// Standard AP over the score-descending ranking; ties keep input order.
/// Throws EvalError when no positive label is present.
double average_precision(std::span<const int> labels, std::span<const double> scores);

/// One transductive negative for positive (u, ·, t): historical neighbor with
/// probability `hist_fraction` (uniform from H_{u,t}; falls back to random
/// when empty), uniform random otherwise. Current positives at (u, t) are
/// never returned. nullopt when no eligible node exists.
std::optional<NodeId> transductive_negative(
    const TemporalGraph& g, const HistoricalNeighborIndex& idx, NodeId u, double t,
    const std::vector<NodeId>& universe, double hist_fraction, std::mt19937_64& rng,
    std::optional<bool> force_historical = std::nullopt);

/// Test events with at least one endpoint (or both, by flag) absent from the
/// train range.
std::vector<EventIdx> inductive_filter(const TemporalGraph& g,
                                       const ChronologicalSplit& split,
                                       bool both_endpoints_unseen = false);

/// Per-dataset sampler APs -> average rank per sampler (rank 1 = best AP,
/// ties share the mean rank, missing entries are skipped).
std::vector<double> average_rank(
    const std::vector<std::vector<std::optional<double>>>& ap_rows);

double runtime_ratio(std::span<const double> epoch_times_a,
                     std::span<const double> epoch_times_b);

struct StreamEvalResult {
  double ap = std::numeric_limits<double>::quiet_NaN();
  std::int64_t scored_positives = 0;
  std::int64_t skipped_positives = 0;  // no eligible negative
  bool empty_filter_warning = false;
};

/// Observe events [begin, end) without scoring (state preparation).
void replay_range(TgnLite& host, HistoricalNeighborIndex& idx, const TemporalGraph& g,
                  EventIdx begin, EventIdx end);

/// Streaming protocol over [begin, end): each scored positive is ranked
/// against freshly drawn negatives, then the event is observed. The inductive
/// mode scores only filtered events but observes all of them.
StreamEvalResult evaluate_stream(TgnLite& host, HistoricalNeighborIndex& idx,
                                 const TemporalGraph& g, EventIdx begin, EventIdx end,
                                 const EvalProtocol& proto,
                                 const ChronologicalSplit& split);

}  // namespace curnm
