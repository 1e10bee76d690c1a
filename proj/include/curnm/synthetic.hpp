#pragma once

#include <string>

#include "curnm/config.hpp"
#include "curnm/graph.hpp"

namespace curnm {

/// Bipartite interaction stream with drifting source preferences: each source
/// follows one destination cluster at a time and resamples it with probability
/// drift_rate per own event; recency_strength repeats recent neighbors; some
/// nodes activate late, so the test period naturally contains unseen nodes.
/// Ordinal timestamps (t = event index). Deterministic for a fixed spec.
TemporalGraph generate_synthetic(const SyntheticSpec& spec,
                                 std::string* drift_trace_csv = nullptr);

void write_edge_list_csv(const TemporalGraph& g, const std::string& path);

}  // namespace curnm
