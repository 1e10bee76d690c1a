#include "curnm/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

namespace curnm {

TemporalGraph generate_synthetic(const SyntheticSpec& spec, std::string* drift_trace_csv) {
  {
    std::vector<std::string> errors;
    spec.validate(errors);
    if (!errors.empty()) throw ValidationError("invalid synthetic spec: " + errors.front());
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  const std::int64_t n_src = std::max<std::int64_t>(
      2, static_cast<std::int64_t>(spec.source_fraction * static_cast<double>(spec.num_nodes)));
  const std::int64_t n_dst = std::max<std::int64_t>(2, spec.num_nodes - n_src);
  const std::int64_t K = std::min<std::int64_t>(spec.clusters, n_dst);
  const std::int64_t T = spec.num_events;

  // destinations: cluster by id, popularity Zipf-ish within cluster
  auto dst_id = [&](std::int64_t j) { return n_src + j; };
  std::vector<std::int64_t> cluster_of(static_cast<std::size_t>(n_dst));
  std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(K));
  for (std::int64_t j = 0; j < n_dst; ++j) {
    cluster_of[static_cast<std::size_t>(j)] = j % K;
    members[static_cast<std::size_t>(j % K)].push_back(j);
  }

  // activation: half the nodes are live from the start, the rest arrive
  // uniformly over the first 85% of the stream
  auto draw_activation = [&]() {
    return U(rng) < 0.5 ? std::int64_t{0}
                        : static_cast<std::int64_t>(U(rng) * 0.85 * static_cast<double>(T));
  };
  std::vector<std::int64_t> src_act(static_cast<std::size_t>(n_src));
  std::vector<std::int64_t> dst_act(static_cast<std::size_t>(n_dst));
  for (auto& a : src_act) a = draw_activation();
  for (auto& a : dst_act) a = draw_activation();

  // per-cluster active members with popularity weights (w ~ 1/(1+rank))
  std::vector<std::vector<std::int64_t>> active_members(static_cast<std::size_t>(K));
  std::vector<std::vector<double>> active_cum(static_cast<std::size_t>(K));
  auto add_active_dst = [&](std::int64_t j) {
    const auto c = static_cast<std::size_t>(cluster_of[static_cast<std::size_t>(j)]);
    active_members[c].push_back(j);
    const double w = 1.0 / (1.0 + static_cast<double>(active_members[c].size() - 1));
    active_cum[c].push_back((active_cum[c].empty() ? 0.0 : active_cum[c].back()) + w);
  };
  std::vector<std::pair<std::int64_t, std::int64_t>> dst_by_act;  // (activation, j)
  for (std::int64_t j = 0; j < n_dst; ++j) dst_by_act.emplace_back(dst_act[static_cast<std::size_t>(j)], j);
  std::sort(dst_by_act.begin(), dst_by_act.end());
  std::size_t next_dst = 0;

  std::vector<std::int64_t> src_by_act_order(static_cast<std::size_t>(n_src));
  {
    std::vector<std::pair<std::int64_t, std::int64_t>> tmp;
    for (std::int64_t s = 0; s < n_src; ++s) tmp.emplace_back(src_act[static_cast<std::size_t>(s)], s);
    std::sort(tmp.begin(), tmp.end());
    for (std::size_t i = 0; i < tmp.size(); ++i) src_by_act_order[i] = tmp[i].second;
  }
  std::size_t next_src = 0;
  std::vector<std::int64_t> active_src;
  std::vector<double> active_src_cum;  // activity weights ~ 1/(1+rank)

  // per-source state
  std::vector<std::int64_t> pref(static_cast<std::size_t>(n_src));
  std::vector<std::int64_t> initial_pref(static_cast<std::size_t>(n_src));
  std::vector<std::int64_t> own_events(static_cast<std::size_t>(n_src), 0);
  std::vector<std::array<std::int64_t, 3>> recents(static_cast<std::size_t>(n_src),
                                                   {-1, -1, -1});
  for (std::int64_t s = 0; s < n_src; ++s) {
    pref[static_cast<std::size_t>(s)] = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(K));
    initial_pref[static_cast<std::size_t>(s)] = pref[static_cast<std::size_t>(s)];
  }

  std::unordered_map<std::uint64_t, std::int64_t> pair_count;
  std::vector<NodeId> src_col, dst_col;
  std::vector<double> t_col;
  src_col.reserve(static_cast<std::size_t>(T));
  std::string trace;
  if (drift_trace_csv) trace = "event,source,cluster\n";

  auto pick_weighted = [&](const std::vector<double>& cum) {
    const double x = U(rng) * cum.back();
    const auto it = std::lower_bound(cum.begin(), cum.end(), x);
    return static_cast<std::size_t>(std::distance(cum.begin(), it));
  };

  const std::int64_t rec_period = static_cast<std::int64_t>(std::llround(spec.recurrence_period));

  for (std::int64_t i = 0; i < T; ++i) {
    // admit newly active nodes
    while (next_src < src_by_act_order.size() &&
           src_act[static_cast<std::size_t>(src_by_act_order[next_src])] <= i) {
      active_src.push_back(src_by_act_order[next_src]);
      const double w = 1.0 / (1.0 + static_cast<double>(active_src.size() - 1));
      active_src_cum.push_back((active_src_cum.empty() ? 0.0 : active_src_cum.back()) + w);
      ++next_src;
    }
    while (next_dst < dst_by_act.size() && dst_by_act[next_dst].first <= i) {
      add_active_dst(dst_by_act[next_dst].second);
      ++next_dst;
    }

    const std::int64_t s = active_src[pick_weighted(active_src_cum)];
    auto& rec = recents[static_cast<std::size_t>(s)];

    // preference drift, one check per own event
    if (U(rng) < spec.drift_rate)
      pref[static_cast<std::size_t>(s)] =
          static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(K));

    std::int64_t chosen = -1;
    for (int attempt = 0; attempt < 8 && chosen < 0; ++attempt) {
      std::int64_t candidate = -1;
      if (rec[0] >= 0 && U(rng) < spec.recency_strength) {
        const double x = U(rng);
        candidate = x < 0.6 ? rec[0] : (x < 0.85 && rec[1] >= 0) ? rec[1] : (rec[2] >= 0 ? rec[2] : rec[0]);
      } else {
        std::int64_t c = pref[static_cast<std::size_t>(s)];
        if (rec_period > 0 && own_events[static_cast<std::size_t>(s)] > 0 &&
            own_events[static_cast<std::size_t>(s)] % rec_period == 0)
          c = initial_pref[static_cast<std::size_t>(s)];
        if (U(rng) < 0.1) c = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(K));
        const auto& cum = active_cum[static_cast<std::size_t>(c)];
        if (cum.empty()) continue;
        candidate = active_members[static_cast<std::size_t>(c)][pick_weighted(cum)];
      }
      if (candidate < 0) continue;
      if (spec.max_events_per_pair > 0) {
        const auto key = ordered_pair_key(s, dst_id(candidate));
        if (pair_count[key] >= spec.max_events_per_pair) continue;
        ++pair_count[key];
      }
      chosen = candidate;
    }
    if (chosen < 0) {
      // fall back to any active destination
      std::int64_t c = 0;
      while (active_cum[static_cast<std::size_t>(c)].empty()) ++c;
      chosen = active_members[static_cast<std::size_t>(c)][pick_weighted(active_cum[static_cast<std::size_t>(c)])];
    }

    src_col.push_back(s);
    dst_col.push_back(dst_id(chosen));
    t_col.push_back(static_cast<double>(i));
    ++own_events[static_cast<std::size_t>(s)];
    if (rec[0] != chosen) {
      rec[2] = rec[1];
      rec[1] = rec[0];
      rec[0] = chosen;
    }
    if (drift_trace_csv)
      trace += std::to_string(i) + "," + std::to_string(s) + "," +
               std::to_string(pref[static_cast<std::size_t>(s)]) + "\n";
  }

  if (drift_trace_csv) *drift_trace_csv = std::move(trace);
  return make_graph(std::move(src_col), std::move(dst_col), std::move(t_col),
                    spec.num_nodes, /*bipartite=*/true);
}

void write_edge_list_csv(const TemporalGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  for (std::int64_t i = 0; i < g.num_events(); ++i) {
    const auto s = static_cast<std::size_t>(i);
    out << g.src[s] << ',' << g.dst[s] << ',' << g.t[s] << '\n';
  }
}

}  // namespace curnm
