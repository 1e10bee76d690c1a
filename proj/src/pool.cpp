#include "curnm/pool.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

namespace curnm {

namespace {

/// Uniform draw without replacement of k items from `items` (partial
/// Fisher-Yates on a scratch copy).
template <typename T>
std::vector<T> draw_without_replacement(std::vector<T> items, std::int64_t k,
                                        std::mt19937_64& rng) {
  const std::int64_t n = static_cast<std::int64_t>(items.size());
  k = std::min(k, n);
  for (std::int64_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::int64_t> d(i, n - 1);
    std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(d(rng))]);
  }
  items.resize(static_cast<std::size_t>(k));
  return items;
}

struct Exclusions {
  std::unordered_set<NodeId> blocked;  // current positives at (u,t) plus u itself
};

Exclusions make_exclusions(const PoolContext& ctx, NodeId u, double t) {
  Exclusions ex;
  for (NodeId v : ctx.graph->positives_at(u, t)) ex.blocked.insert(v);
  ex.blocked.insert(u);
  return ex;
}

std::int64_t eligible_count(const PoolContext& ctx, const Exclusions& ex) {
  std::int64_t blocked_in_universe = 0;
  if (ctx.graph->bipartite) {
    for (NodeId b : ex.blocked)
      if (b >= 0 && b < ctx.graph->num_nodes &&
          ctx.graph->on_dst_side[static_cast<std::size_t>(b)])
        ++blocked_in_universe;
  } else {
    for (NodeId b : ex.blocked)
      if (b >= 0 && b < ctx.graph->num_nodes) ++blocked_in_universe;
  }
  return static_cast<std::int64_t>(ctx.universe.size()) - blocked_in_universe;
}

/// Eligible historical neighbors, most recent first not required -- the
/// query() output is id-sorted, giving deterministic sampling.
std::vector<NodeId> eligible_historical(const PoolContext& ctx, NodeId u, double t,
                                        const Exclusions& ex) {
  std::vector<NodeId> out;
  for (const auto& [v, tv] : ctx.index->query(u, t))
    if (!ex.blocked.count(v)) out.push_back(v);
  return out;
}

void fill_random(const PoolContext& ctx, const Exclusions& ex,
                 std::unordered_set<NodeId>& taken, std::int64_t n,
                 std::mt19937_64& rng, NegativePool& pool) {
  const std::int64_t universe_size = static_cast<std::int64_t>(ctx.universe.size());
  std::int64_t added = 0;
  // Fast path: rejection sampling; small universes enumerate the complement.
  if (universe_size >= 4 * (n + static_cast<std::int64_t>(taken.size()) +
                            static_cast<std::int64_t>(ex.blocked.size()))) {
    std::uniform_int_distribution<std::int64_t> d(0, universe_size - 1);
    std::int64_t attempts = 0;
    const std::int64_t max_attempts = 100 * n + 1000;
    while (added < n && attempts < max_attempts) {
      ++attempts;
      const NodeId v = ctx.universe[static_cast<std::size_t>(d(rng))];
      if (ex.blocked.count(v) || taken.count(v)) continue;
      taken.insert(v);
      pool.candidates.push_back(v);
      pool.tags.push_back(CandidateTag::rand);
      ++added;
    }
    if (added == n) return;
  }
  std::vector<NodeId> rest;
  for (NodeId v : ctx.universe)
    if (!ex.blocked.count(v) && !taken.count(v)) rest.push_back(v);
  auto picked = draw_without_replacement(std::move(rest), n - added, rng);
  if (static_cast<std::int64_t>(picked.size()) < n - added)
    throw PoolError("pool size exceeds eligible candidate count for source " +
                    std::to_string(pool.source));
  for (NodeId v : picked) {
    taken.insert(v);
    pool.candidates.push_back(v);
    pool.tags.push_back(CandidateTag::rand);
  }
}

void check_feasible(const PoolContext& ctx, const Exclusions& ex, std::int64_t M,
                    NodeId u) {
  if (eligible_count(ctx, ex) < M)
    throw PoolError("pool size " + std::to_string(M) +
                    " exceeds eligible candidates for source " + std::to_string(u));
}

}  // namespace

std::int64_t NegativePool::count(CandidateTag tag) const {
  std::int64_t n = 0;
  for (CandidateTag t : tags) n += (t == tag) ? 1 : 0;
  return n;
}

void ScoreHistory::record(NodeId u, NodeId v, double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ValidationError("score " + std::to_string(p) + " for pair (" +
                          std::to_string(u) + "," + std::to_string(v) +
                          ") outside [0,1]");
  Ring& r = rings_[ordered_pair_key(u, v)];
  if (r.len < 5) {
    r.vals[(r.head + r.len) % 5] = p;
    ++r.len;
  } else {
    r.vals[r.head] = p;
    r.head = static_cast<std::uint8_t>((r.head + 1) % 5);
  }
}

void ScoreHistory::record_epoch(const std::unordered_map<std::uint64_t, double>& scores) {
  for (const auto& [key, p] : scores) {
    const NodeId u = static_cast<NodeId>(key >> 32);
    const NodeId v = static_cast<NodeId>(key & 0xffffffffull);
    record(u, v, p);
  }
}

std::int64_t ScoreHistory::count(NodeId u, NodeId v) const {
  auto it = rings_.find(ordered_pair_key(u, v));
  return it == rings_.end() ? 0 : it->second.len;
}

double ScoreHistory::std_dev(NodeId u, NodeId v) const {
  auto it = rings_.find(ordered_pair_key(u, v));
  if (it == rings_.end() || it->second.len < 2) return 0.0;
  const Ring& r = it->second;
  double mean = 0.0;
  for (std::uint8_t i = 0; i < r.len; ++i) mean += r.vals[i];
  mean /= r.len;
  double var = 0.0;
  for (std::uint8_t i = 0; i < r.len; ++i) {
    const double d = r.vals[i] - mean;
    var += d * d;
  }
  return std::sqrt(var / r.len);
}

void ScoreHistory::serialize(std::ostream& out) const {
  const std::uint64_t n = rings_.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  // sorted for byte-stable checkpoints
  std::vector<std::uint64_t> keys;
  keys.reserve(rings_.size());
  for (const auto& [k, _] : rings_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (std::uint64_t k : keys) {
    const Ring& r = rings_.at(k);
    out.write(reinterpret_cast<const char*>(&k), sizeof(k));
    out.write(reinterpret_cast<const char*>(&r.len), sizeof(r.len));
    for (std::uint8_t i = 0; i < r.len; ++i) {
      const double v = r.vals[(r.head + i) % 5];
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

ScoreHistory ScoreHistory::deserialize(std::istream& in) {
  ScoreHistory h;
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t k = 0;
    std::uint8_t len = 0;
    in.read(reinterpret_cast<char*>(&k), sizeof(k));
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    Ring r;
    r.len = len;
    r.head = 0;
    for (std::uint8_t j = 0; j < len; ++j)
      in.read(reinterpret_cast<char*>(&r.vals[j]), sizeof(double));
    h.rings_[k] = r;
  }
  if (!in) throw ValidationError("truncated score-history block");
  return h;
}

NegativePool build_early_pool(const PoolContext& ctx, NodeId u, double t,
                              std::int64_t M, double gamma_hist,
                              std::mt19937_64& rng) {
  if (M < 2) throw PoolError("pool size must be >= 2");
  NegativePool pool;
  pool.source = u;
  pool.anchor_time = t;
  const Exclusions ex = make_exclusions(ctx, u, t);
  check_feasible(ctx, ex, M, u);

  const std::int64_t hist_target = std::llround(gamma_hist * static_cast<double>(M));
  auto hist = draw_without_replacement(eligible_historical(ctx, u, t, ex),
                                       hist_target, rng);
  std::unordered_set<NodeId> taken;
  for (NodeId v : hist) {
    taken.insert(v);
    pool.candidates.push_back(v);
    pool.tags.push_back(CandidateTag::hist);
  }
  fill_random(ctx, ex, taken, M - static_cast<std::int64_t>(hist.size()), rng, pool);
  return pool;
}

NegativePool build_late_pool(const PoolContext& ctx, NodeId u, double t,
                             std::int64_t M, double gamma_hist,
                             const std::vector<NodeId>& hard_cache,
                             std::mt19937_64& rng) {
  if (M < 2) throw PoolError("pool size must be >= 2");
  NegativePool pool;
  pool.source = u;
  pool.anchor_time = t;
  const Exclusions ex = make_exclusions(ctx, u, t);
  check_feasible(ctx, ex, M, u);

  std::unordered_set<NodeId> taken;
  const std::int64_t hard_cap = M / 2;
  for (NodeId v : hard_cache) {
    if (pool.size() >= hard_cap) break;
    if (ex.blocked.count(v) || taken.count(v)) continue;  // evict current positives
    taken.insert(v);
    pool.candidates.push_back(v);
    pool.tags.push_back(CandidateTag::hard);
  }

  const std::int64_t remaining = M - pool.size();
  const std::int64_t hist_target = std::llround(gamma_hist * static_cast<double>(remaining));
  std::vector<NodeId> hist_pool;
  for (NodeId v : eligible_historical(ctx, u, t, ex))
    if (!taken.count(v)) hist_pool.push_back(v);
  for (NodeId v : draw_without_replacement(std::move(hist_pool), hist_target, rng)) {
    taken.insert(v);
    pool.candidates.push_back(v);
    pool.tags.push_back(CandidateTag::hist);
  }
  fill_random(ctx, ex, taken, M - pool.size(), rng, pool);
  return pool;
}

std::vector<std::int64_t> weighted_sample_indices(std::span<const double> weights,
                                                  std::int64_t k,
                                                  std::mt19937_64& rng) {
  const std::int64_t n = static_cast<std::int64_t>(weights.size());
  k = std::min(k, n);
  std::vector<double> w(weights.begin(), weights.end());

  double min_w = std::numeric_limits<double>::infinity();
  bool finite = true;
  for (double x : w) {
    if (!std::isfinite(x)) finite = false;
    min_w = std::min(min_w, x);
  }
  if (finite && min_w <= 0.0)
    for (double& x : w) x += -min_w + 1e-8;
  double total = 0.0;
  if (finite)
    for (double x : w) total += x;
  if (!finite || !(total > 0.0)) {
    w.assign(static_cast<std::size_t>(n), 1.0);
    total = static_cast<double>(n);
  }

  std::vector<std::int64_t> picked;
  std::vector<std::int64_t> alive(static_cast<std::size_t>(n));
  std::iota(alive.begin(), alive.end(), 0);
  for (std::int64_t draw = 0; draw < k; ++draw) {
    std::uniform_real_distribution<double> d(0.0, total);
    double x = d(rng);
    std::size_t chosen = alive.size() - 1;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      x -= w[static_cast<std::size_t>(alive[i])];
      if (x <= 0.0) {
        chosen = i;
        break;
      }
    }
    const std::int64_t idx = alive[chosen];
    picked.push_back(idx);
    total -= w[static_cast<std::size_t>(idx)];
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(chosen));
    if (!(total > 0.0) && draw + 1 < k) {
      // numeric exhaustion: finish uniformly over the remainder
      for (auto& rest : draw_without_replacement(alive, k - draw - 1, rng))
        picked.push_back(rest);
      break;
    }
  }
  return picked;
}

std::vector<NodeId> sample_hard_cache(const NegativePool& pool,
                                      std::span<const double> fresh_scores,
                                      const ScoreHistory& history, double alpha_e,
                                      std::mt19937_64& rng) {
  if (static_cast<std::int64_t>(fresh_scores.size()) != pool.size())
    throw ValidationError("fresh score count does not match pool size");
  std::vector<double> w(static_cast<std::size_t>(pool.size()));
  for (std::int64_t i = 0; i < pool.size(); ++i) {
    const NodeId v = pool.candidates[static_cast<std::size_t>(i)];
    w[static_cast<std::size_t>(i)] =
        fresh_scores[static_cast<std::size_t>(i)] -
        alpha_e * history.std_dev(pool.source, v);
  }
  const std::int64_t k = std::min<std::int64_t>(pool.size(), std::max<std::int64_t>(1, pool.size() / 2));
  std::vector<NodeId> out;
  for (std::int64_t idx : weighted_sample_indices(w, k, rng))
    out.push_back(pool.candidates[static_cast<std::size_t>(idx)]);
  return out;
}

void dump_pool_jsonl(std::ostream& out, const NegativePool& pool) {
  nlohmann::json j;
  j["u"] = pool.source;
  j["t"] = pool.anchor_time;
  j["candidates"] = pool.candidates;
  std::vector<std::string> tags;
  tags.reserve(pool.tags.size());
  for (CandidateTag t : pool.tags)
    tags.push_back(t == CandidateTag::hard ? "hard"
                   : t == CandidateTag::hist ? "hist"
                                             : "rand");
  j["tags"] = tags;
  out << j.dump() << '\n';
}

}  // namespace curnm
