#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "curnm/types.hpp"

namespace curnm {

/// Column mapping for plain CSV/TSV edge lists.
struct EdgeListSchema {
  int src_col = 0;
  int dst_col = 1;
  int time_col = 2;
  std::vector<int> feature_cols;
  char delimiter = ',';
  bool has_header = false;
  bool bipartite = false;

  // dense:  observed external ids are compacted to 0..num_nodes-1 in first-
  //         appearance order and the mapping is persisted alongside.
  // as_is:  ids are taken literally and num_nodes = max_id + 1. For datasets
  //         that ship pre-indexed (e.g. with a reserved padding id 0) whose
  //         companion artifacts are aligned to the raw ids.
  enum class IdPolicy { dense, as_is };
  IdPolicy id_policy = IdPolicy::dense;
};

/// Timestamp-ordered interaction store, columnar (src/dst/t arrays).
/// Events are sorted stably by timestamp at load; equal-timestamp events keep
/// their input order, and that processing order is what "historical" means
/// throughout (an event is never its own history).
struct TemporalGraph {
  std::vector<NodeId> src;
  std::vector<NodeId> dst;
  std::vector<double> t;
  std::vector<std::vector<double>> edge_features;  // empty, or one row per event
  std::vector<std::vector<double>> node_features;  // empty, or one row per node
  std::int64_t num_nodes = 0;
  bool bipartite = false;
  // bipartite only: which side each node was observed on (0 = source side).
  std::vector<std::uint8_t> on_dst_side;
  // external -> internal mapping as persisted (empty under IdPolicy::as_is).
  std::vector<std::pair<std::int64_t, NodeId>> id_mapping;

  std::int64_t num_events() const { return static_cast<std::int64_t>(t.size()); }

  TemporalEdgeEvent event(EventIdx i) const {
    return TemporalEdgeEvent{src[static_cast<std::size_t>(i)],
                             dst[static_cast<std::size_t>(i)],
                             t[static_cast<std::size_t>(i)]};
  }

  double time_span() const { return t.empty() ? 0.0 : t.back() - t.front(); }

  /// Destination-side node ids (bipartite) or all ids (otherwise). This is the
  /// candidate universe for random negatives.
  std::vector<NodeId> destination_universe() const;

  /// All v such that (u, v, t) is a stored interaction at exactly time `time`.
  /// Used for negative-candidate exclusion; requires build_positive_lookup().
  std::vector<NodeId> positives_at(NodeId u, double time) const;
  bool is_positive_at(NodeId u, NodeId v, double time) const;
  void build_positive_lookup() const;

  /// Throws ValidationError if the stored invariants are broken.
  void validate() const;

 private:
  // (u, t) -> current neighbors at exactly t. Keyed by source id; each entry
  // is the source's events sorted by time, so equal-t runs are contiguous.
  mutable std::vector<std::vector<std::pair<double, NodeId>>> by_source_;
  mutable bool positive_lookup_built_ = false;
};

TemporalGraph load_edge_list(const std::string& path, const EdgeListSchema& schema);

/// Builds a graph directly from triples (tests, synthetic generator). Applies
/// the same stable timestamp sort as the loader. num_nodes = max id + 1 unless
/// given explicitly.
TemporalGraph make_graph(std::vector<NodeId> src, std::vector<NodeId> dst,
                         std::vector<double> t, std::int64_t num_nodes = -1,
                         bool bipartite = false);

void save_id_mapping(const TemporalGraph& g, const std::string& path);
std::unordered_map<std::int64_t, NodeId> load_id_mapping(const std::string& path);

/// Per-source record of unique past neighbors with their latest interaction
/// timestamps. Append-only; observe events in processing order.
class HistoricalNeighborIndex {
 public:
  explicit HistoricalNeighborIndex(std::int64_t num_nodes);

  static HistoricalNeighborIndex build(const TemporalGraph& g);
  /// Index over the event prefix [0, end).
  static HistoricalNeighborIndex build_prefix(const TemporalGraph& g, EventIdx end);

  void observe(NodeId src, NodeId dst, double t);

  /// H_{u,t}: unique v with some (u,v,t') observed, t' <= t, minus current
  /// neighbors at exactly t; each v carries its latest t'. Unknown u -> empty.
  std::vector<std::pair<NodeId, double>> query(NodeId u, double t) const;

  /// Everything observed so far for u (streaming anchor: "now"). v -> latest t.
  const std::unordered_map<NodeId, double>& neighbors_of(NodeId u) const;
  std::int64_t neighbor_count(NodeId u) const;

  /// Most recent time the node appeared as either endpoint; nullopt if never.
  std::optional<double> last_seen(NodeId n) const;

  std::int64_t num_nodes() const { return static_cast<std::int64_t>(latest_.size()); }
  std::int64_t num_observed() const { return num_observed_; }

 private:
  // chronological per-source log (t, v) plus latest-timestamp dedup map
  std::vector<std::vector<std::pair<double, NodeId>>> log_;
  std::vector<std::unordered_map<NodeId, double>> latest_;
  std::vector<double> last_seen_;  // NaN = never
  std::int64_t num_observed_ = 0;
};

/// Contiguous [0,train_end) [train_end,val_end) [val_end,test_end) ranges.
struct ChronologicalSplit {
  EventIdx train_end = 0;
  EventIdx val_end = 0;
  EventIdx test_end = 0;
  double t_val = 0.0;   // first validation timestamp
  double t_test = 0.0;  // first test timestamp
};

/// Boundaries at the first event reaching each cumulative fraction; a boundary
/// falling inside an equal-timestamp run moves forward to the first strictly
/// greater timestamp. Throws SplitError if any range ends up empty.
ChronologicalSplit split_chronological(const TemporalGraph& g,
                                       std::array<double, 3> ratios);

struct DatasetStats {
  std::int64_t num_nodes = 0;
  std::int64_t num_edges = 0;
  double average_proximity = 0.0;
  double recency = 0.0;
  double repetition = 0.0;
  double density = 0.0;
  std::int64_t d_max = 0;
  double time_span = 0.0;
};

/// recency    = fraction of events whose destination equals the source's most
///              recent prior interaction partner (either endpoint role);
/// repetition = fraction of events whose unordered (u,v) pair occurred before;
/// average_proximity = mean, over recurring-pair events, of the source's
///              interaction count since the pair's previous occurrence;
/// density    = unique unordered pairs / possible pairs (bipartite: |U|*|I|);
/// d_max      = max per-node event participation.
DatasetStats compute_stats(const TemporalGraph& g);

std::string stats_to_json(const DatasetStats& s);

}  // namespace curnm
