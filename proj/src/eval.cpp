#include "curnm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <unordered_set>

namespace curnm {

void EvalProtocol::validate() const {
  std::string err;
  if (negatives_per_positive < 1) err += "  negatives_per_positive must be >= 1\n";
  if (!(historical_fraction >= 0.0 && historical_fraction <= 1.0))
    err += "  historical_fraction must be in [0,1]\n";
  if (!err.empty()) throw ValidationError("invalid eval protocol:\n" + err);
}

double average_precision(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size())
    throw EvalError("labels and scores length mismatch");
  const std::size_t n = labels.size();
  std::int64_t total_pos = 0;
  for (int y : labels) total_pos += (y != 0);
  if (total_pos == 0) throw EvalError("average_precision undefined without positives");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::int64_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[order[k]] != 0) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(total_pos);
}

std::optional<NodeId> transductive_negative(
    const TemporalGraph& g, const HistoricalNeighborIndex& idx, NodeId u, double t,
    const std::vector<NodeId>& universe, double hist_fraction, std::mt19937_64& rng,
    std::optional<bool> force_historical) {
  std::unordered_set<NodeId> blocked;
  for (NodeId v : g.positives_at(u, t)) blocked.insert(v);
  blocked.insert(u);

  bool go_historical;
  if (force_historical.has_value()) {
    go_historical = *force_historical;
  } else {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    go_historical = coin(rng) < hist_fraction;
  }

  if (go_historical) {
    std::vector<NodeId> hist;
    for (const auto& [v, tv] : idx.query(u, t))
      if (!blocked.count(v)) hist.push_back(v);
    if (!hist.empty()) {
      std::uniform_int_distribution<std::size_t> d(0, hist.size() - 1);
      return hist[d(rng)];
    }
    // fall through to random when the historical set is empty
  }

  if (universe.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> d(0, universe.size() - 1);
  for (int attempt = 0; attempt < 200; ++attempt) {
    const NodeId v = universe[d(rng)];
    if (!blocked.count(v)) return v;
  }
  std::vector<NodeId> rest;
  for (NodeId v : universe)
    if (!blocked.count(v)) rest.push_back(v);
  if (rest.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> d2(0, rest.size() - 1);
  return rest[d2(rng)];
}

std::vector<EventIdx> inductive_filter(const TemporalGraph& g,
                                       const ChronologicalSplit& split,
                                       bool both_endpoints_unseen) {
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(g.num_nodes), 0);
  for (EventIdx i = 0; i < split.train_end; ++i) {
    seen[static_cast<std::size_t>(g.src[static_cast<std::size_t>(i)])] = 1;
    seen[static_cast<std::size_t>(g.dst[static_cast<std::size_t>(i)])] = 1;
  }
  std::vector<EventIdx> out;
  for (EventIdx i = split.val_end; i < split.test_end; ++i) {
    const bool u_unseen = !seen[static_cast<std::size_t>(g.src[static_cast<std::size_t>(i)])];
    const bool v_unseen = !seen[static_cast<std::size_t>(g.dst[static_cast<std::size_t>(i)])];
    const bool keep = both_endpoints_unseen ? (u_unseen && v_unseen) : (u_unseen || v_unseen);
    if (keep) out.push_back(i);
  }
  if (out.empty())
    std::cerr << "[eval] warning: inductive filter kept no test events (all nodes seen in training)\n";
  return out;
}

std::vector<double> average_rank(
    const std::vector<std::vector<std::optional<double>>>& ap_rows) {
  if (ap_rows.empty()) throw EvalError("average_rank requires at least one dataset row");
  const std::size_t n_samplers = ap_rows.front().size();
  std::vector<double> sum(n_samplers, 0.0);
  std::vector<std::int64_t> count(n_samplers, 0);
  for (const auto& row : ap_rows) {
    if (row.size() != n_samplers) throw EvalError("ragged average_rank input");
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < n_samplers; ++i)
      if (row[i].has_value()) present.push_back(i);
    // rank present entries by AP descending; ties share the mean rank
    std::vector<std::size_t> order = present;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return *row[a] > *row[b]; });
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t end = pos;
      while (end + 1 < order.size() && *row[order[end + 1]] == *row[order[pos]]) ++end;
      const double mean_rank =
          (static_cast<double>(pos + 1) + static_cast<double>(end + 1)) / 2.0;
      for (std::size_t j = pos; j <= end; ++j) {
        sum[order[j]] += mean_rank;
        ++count[order[j]];
      }
      pos = end + 1;
    }
  }
  std::vector<double> avg(n_samplers, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < n_samplers; ++i)
    if (count[i] > 0) avg[i] = sum[i] / static_cast<double>(count[i]);
  return avg;
}

double runtime_ratio(std::span<const double> epoch_times_a,
                     std::span<const double> epoch_times_b) {
  if (epoch_times_a.empty() || epoch_times_b.empty())
    throw EvalError("runtime_ratio requires non-empty timing samples");
  const double ma = std::accumulate(epoch_times_a.begin(), epoch_times_a.end(), 0.0) /
                    static_cast<double>(epoch_times_a.size());
  const double mb = std::accumulate(epoch_times_b.begin(), epoch_times_b.end(), 0.0) /
                    static_cast<double>(epoch_times_b.size());
  if (mb <= 0.0) throw EvalError("runtime_ratio denominator is zero");
  return ma / mb;
}

void replay_range(TgnLite& host, HistoricalNeighborIndex& idx, const TemporalGraph& g,
                  EventIdx begin, EventIdx end) {
  if (begin < 0 || end > g.num_events() || begin > end)
    throw EvalError("replay_range outside event bounds");
  for (EventIdx i = begin; i < end; ++i) {
    const auto s = static_cast<std::size_t>(i);
    host.observe(g.src[s], g.dst[s], g.t[s], i);
    idx.observe(g.src[s], g.dst[s], g.t[s]);
  }
}

StreamEvalResult evaluate_stream(TgnLite& host, HistoricalNeighborIndex& idx,
                                 const TemporalGraph& g, EventIdx begin, EventIdx end,
                                 const EvalProtocol& proto,
                                 const ChronologicalSplit& split) {
  proto.validate();
  if (begin < 0 || end > g.num_events() || begin > end)
    throw EvalError("evaluation range outside event bounds");

  StreamEvalResult res;
  std::mt19937_64 rng(proto.seed);
  const bool inductive = proto.mode == EvalProtocol::Mode::inductive;

  std::vector<std::uint8_t> score_mask;
  std::vector<NodeId> universe;
  if (inductive) {
    score_mask.assign(static_cast<std::size_t>(g.num_events()), 0);
    for (EventIdx i : inductive_filter(g, split, proto.both_endpoints_unseen))
      score_mask[static_cast<std::size_t>(i)] = 1;
    // unseen-eligible candidate universe on the destination side
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(g.num_nodes), 0);
    for (EventIdx i = 0; i < split.train_end; ++i) {
      seen[static_cast<std::size_t>(g.src[static_cast<std::size_t>(i)])] = 1;
      seen[static_cast<std::size_t>(g.dst[static_cast<std::size_t>(i)])] = 1;
    }
    for (NodeId v : g.destination_universe())
      if (!seen[static_cast<std::size_t>(v)]) universe.push_back(v);
    if (universe.empty()) {
      res.empty_filter_warning = true;
      std::cerr << "[eval] warning: no unseen-eligible negative candidates\n";
    }
  } else {
    universe = g.destination_universe();
  }

  std::vector<int> labels;
  std::vector<double> scores;
  std::int64_t positive_counter = 0;

  for (EventIdx i = begin; i < end; ++i) {
    const auto s = static_cast<std::size_t>(i);
    const NodeId u = g.src[s];
    const NodeId v = g.dst[s];
    const double t = g.t[s];

    const bool score_this = inductive ? (score_mask[s] != 0) : true;
    if (score_this && !universe.empty()) {
      std::vector<NodeId> negs;
      for (std::int64_t j = 0; j < proto.negatives_per_positive; ++j) {
        std::optional<NodeId> neg;
        if (inductive) {
          std::unordered_set<NodeId> blocked;
          for (NodeId c : g.positives_at(u, t)) blocked.insert(c);
          blocked.insert(u);
          std::uniform_int_distribution<std::size_t> d(0, universe.size() - 1);
          for (int attempt = 0; attempt < 200 && !neg; ++attempt) {
            const NodeId cand = universe[d(rng)];
            if (!blocked.count(cand)) neg = cand;
          }
        } else {
          std::optional<bool> force;
          if (proto.exact_stratification) force = (positive_counter % 2) == 0;
          neg = transductive_negative(g, idx, u, t, universe,
                                      proto.historical_fraction, rng, force);
        }
        if (neg) negs.push_back(*neg);
      }
      if (!negs.empty()) {
        std::vector<NodeId> batch{u, v};
        batch.insert(batch.end(), negs.begin(), negs.end());
        const auto fb = host.embed_fresh(batch);
        const auto cu = fb.col.at(u);
        labels.push_back(1);
        scores.push_back(host.score(fb.H.col(cu), fb.H.col(fb.col.at(v))));
        for (NodeId n : negs) {
          labels.push_back(0);
          scores.push_back(host.score(fb.H.col(cu), fb.H.col(fb.col.at(n))));
        }
        ++res.scored_positives;
      } else {
        ++res.skipped_positives;
      }
      ++positive_counter;
    }

    host.observe(u, v, t, i);
    idx.observe(u, v, t);
  }

  if (res.scored_positives > 0) res.ap = average_precision(labels, scores);
  return res;
}

}  // namespace curnm
