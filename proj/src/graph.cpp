#include "curnm/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace curnm {

namespace {

std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  if (delim == ' ') {
    // whitespace mode: collapse runs of spaces/tabs
    while (start < line.size()) {
      while (start < line.size() && (line[start] == ' ' || line[start] == '\t')) ++start;
      if (start >= line.size()) break;
      std::size_t end = start;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
      out.push_back(line.substr(start, end - start));
      start = end;
    }
    return out;
  }
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::int64_t parse_int(std::string_view tok, std::int64_t line_no, const char* what) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw LoadError("line " + std::to_string(line_no) + ": malformed " + what +
                    " '" + std::string(tok) + "'");
  }
  return v;
}

double parse_real(std::string_view tok, std::int64_t line_no, const char* what) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v)) {
    throw LoadError("line " + std::to_string(line_no) + ": non-numeric " +
                    std::string(what) + " '" + std::string(tok) + "'");
  }
  return v;
}

void stable_sort_by_time(TemporalGraph& g) {
  const std::size_t n = g.t.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return g.t[a] < g.t[b]; });
  auto apply = [&](auto& col) {
    using Col = std::decay_t<decltype(col)>;
    Col out;
    out.reserve(n);
    for (std::size_t i : perm) out.push_back(std::move(col[i]));
    col = std::move(out);
  };
  apply(g.src);
  apply(g.dst);
  apply(g.t);
  if (!g.edge_features.empty()) apply(g.edge_features);
}

void finalize_sides(TemporalGraph& g) {
  if (!g.bipartite) return;
  g.on_dst_side.assign(static_cast<std::size_t>(g.num_nodes), 0);
  for (std::size_t i = 0; i < g.dst.size(); ++i)
    g.on_dst_side[static_cast<std::size_t>(g.dst[i])] = 1;
}

}  // namespace

std::vector<NodeId> TemporalGraph::destination_universe() const {
  std::vector<NodeId> out;
  if (bipartite) {
    for (NodeId v = 0; v < num_nodes; ++v)
      if (on_dst_side[static_cast<std::size_t>(v)]) out.push_back(v);
  } else {
    out.resize(static_cast<std::size_t>(num_nodes));
    std::iota(out.begin(), out.end(), NodeId{0});
  }
  return out;
}

void TemporalGraph::build_positive_lookup() const {
  by_source_.assign(static_cast<std::size_t>(num_nodes), {});
  for (std::size_t i = 0; i < src.size(); ++i)
    by_source_[static_cast<std::size_t>(src[i])].emplace_back(t[i], dst[i]);
  for (auto& v : by_source_)
    std::stable_sort(v.begin(), v.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  positive_lookup_built_ = true;
}

std::vector<NodeId> TemporalGraph::positives_at(NodeId u, double time) const {
  if (!positive_lookup_built_)
    throw ValidationError("positive lookup not built; call build_positive_lookup()");
  std::vector<NodeId> out;
  if (u < 0 || u >= num_nodes) return out;
  const auto& evs = by_source_[static_cast<std::size_t>(u)];
  auto lo = std::lower_bound(evs.begin(), evs.end(), time,
                             [](const auto& e, double x) { return e.first < x; });
  for (auto it = lo; it != evs.end() && it->first == time; ++it)
    out.push_back(it->second);
  return out;
}

bool TemporalGraph::is_positive_at(NodeId u, NodeId v, double time) const {
  if (!positive_lookup_built_)
    throw ValidationError("positive lookup not built; call build_positive_lookup()");
  if (u < 0 || u >= num_nodes) return false;
  const auto& evs = by_source_[static_cast<std::size_t>(u)];
  auto lo = std::lower_bound(evs.begin(), evs.end(), time,
                             [](const auto& e, double x) { return e.first < x; });
  for (auto it = lo; it != evs.end() && it->first == time; ++it)
    if (it->second == v) return true;
  return false;
}

void TemporalGraph::validate() const {
  if (t.empty()) throw ValidationError("graph has no events");
  if (src.size() != t.size() || dst.size() != t.size())
    throw ValidationError("column length mismatch");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (src[i] < 0 || src[i] >= num_nodes || dst[i] < 0 || dst[i] >= num_nodes)
      throw ValidationError("node id out of range at event " + std::to_string(i));
    if (i > 0 && t[i] < t[i - 1])
      throw ValidationError("timestamps decrease at event " + std::to_string(i));
  }
}

TemporalGraph load_edge_list(const std::string& path, const EdgeListSchema& schema) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");

  TemporalGraph g;
  g.bipartite = schema.bipartite;

  std::unordered_map<std::int64_t, NodeId> remap;
  std::vector<std::int64_t> externals;  // in first-appearance order
  const bool dense = schema.id_policy == EdgeListSchema::IdPolicy::dense;
  std::int64_t max_id = -1;

  auto intern = [&](std::int64_t ext, std::int64_t line_no) -> NodeId {
    if (!dense) {
      if (ext < 0)
        throw LoadError("line " + std::to_string(line_no) +
                        ": negative node id under as_is policy");
      max_id = std::max(max_id, ext);
      return ext;
    }
    auto [it, inserted] = remap.emplace(ext, static_cast<NodeId>(externals.size()));
    if (inserted) externals.push_back(ext);
    return it->second;
  };

  const int max_col = std::max({schema.src_col, schema.dst_col, schema.time_col,
                                schema.feature_cols.empty()
                                    ? 0
                                    : *std::max_element(schema.feature_cols.begin(),
                                                        schema.feature_cols.end())});
  std::string line;
  std::int64_t line_no = 0;
  bool skipped_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (schema.has_header && !skipped_header) {
      skipped_header = true;
      continue;
    }
    if (line[0] == '#' || line[0] == '%') continue;
    auto cols = split_line(line, schema.delimiter);
    if (static_cast<int>(cols.size()) <= max_col)
      throw LoadError("line " + std::to_string(line_no) + ": expected at least " +
                      std::to_string(max_col + 1) + " columns, got " +
                      std::to_string(cols.size()));
    const NodeId u = intern(parse_int(cols[schema.src_col], line_no, "source id"), line_no);
    const NodeId v = intern(parse_int(cols[schema.dst_col], line_no, "destination id"), line_no);
    const double ts = parse_real(cols[schema.time_col], line_no, "timestamp");
    g.src.push_back(u);
    g.dst.push_back(v);
    g.t.push_back(ts);
    if (!schema.feature_cols.empty()) {
      std::vector<double> f;
      f.reserve(schema.feature_cols.size());
      for (int c : schema.feature_cols) f.push_back(parse_real(cols[c], line_no, "feature"));
      g.edge_features.push_back(std::move(f));
    }
  }
  if (g.t.empty()) throw LoadError("'" + path + "' contains no events");

  g.num_nodes = dense ? static_cast<std::int64_t>(externals.size()) : max_id + 1;
  if (dense) {
    g.id_mapping.reserve(externals.size());
    for (std::size_t i = 0; i < externals.size(); ++i)
      g.id_mapping.emplace_back(externals[i], static_cast<NodeId>(i));
  }

  stable_sort_by_time(g);
  finalize_sides(g);
  g.validate();
  return g;
}

TemporalGraph make_graph(std::vector<NodeId> src, std::vector<NodeId> dst,
                         std::vector<double> t, std::int64_t num_nodes,
                         bool bipartite) {
  TemporalGraph g;
  g.src = std::move(src);
  g.dst = std::move(dst);
  g.t = std::move(t);
  g.bipartite = bipartite;
  if (num_nodes >= 0) {
    g.num_nodes = num_nodes;
  } else {
    NodeId mx = -1;
    for (NodeId x : g.src) mx = std::max(mx, x);
    for (NodeId x : g.dst) mx = std::max(mx, x);
    g.num_nodes = mx + 1;
  }
  stable_sort_by_time(g);
  finalize_sides(g);
  g.validate();
  return g;
}

void save_id_mapping(const TemporalGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  out << "external_id,internal_id\n";
  for (const auto& [ext, internal] : g.id_mapping)
    out << ext << ',' << internal << '\n';
}

std::unordered_map<std::int64_t, NodeId> load_id_mapping(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");
  std::unordered_map<std::int64_t, NodeId> out;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;  // header
    auto cols = split_line(line, ',');
    if (cols.size() != 2)
      throw LoadError("id mapping line " + std::to_string(line_no) + ": expected 2 columns");
    out[parse_int(cols[0], line_no, "external id")] =
        parse_int(cols[1], line_no, "internal id");
  }
  return out;
}

HistoricalNeighborIndex::HistoricalNeighborIndex(std::int64_t num_nodes)
    : log_(static_cast<std::size_t>(num_nodes)),
      latest_(static_cast<std::size_t>(num_nodes)),
      last_seen_(static_cast<std::size_t>(num_nodes),
                 std::numeric_limits<double>::quiet_NaN()) {}

HistoricalNeighborIndex HistoricalNeighborIndex::build(const TemporalGraph& g) {
  return build_prefix(g, g.num_events());
}

HistoricalNeighborIndex HistoricalNeighborIndex::build_prefix(const TemporalGraph& g,
                                                              EventIdx end) {
  HistoricalNeighborIndex idx(g.num_nodes);
  for (EventIdx i = 0; i < end; ++i)
    idx.observe(g.src[static_cast<std::size_t>(i)], g.dst[static_cast<std::size_t>(i)],
                g.t[static_cast<std::size_t>(i)]);
  return idx;
}

void HistoricalNeighborIndex::observe(NodeId src, NodeId dst, double t) {
  auto& lg = log_[static_cast<std::size_t>(src)];
  if (!lg.empty() && t < lg.back().first)
    throw ValidationError("historical index observed events out of order");
  lg.emplace_back(t, dst);
  auto& lat = latest_[static_cast<std::size_t>(src)];
  auto [it, inserted] = lat.emplace(dst, t);
  if (!inserted) it->second = t;
  last_seen_[static_cast<std::size_t>(src)] = t;
  last_seen_[static_cast<std::size_t>(dst)] = t;
  ++num_observed_;
}

std::vector<std::pair<NodeId, double>> HistoricalNeighborIndex::query(NodeId u,
                                                                      double t) const {
  std::vector<std::pair<NodeId, double>> out;
  if (u < 0 || u >= num_nodes()) return out;
  const auto& lg = log_[static_cast<std::size_t>(u)];
  auto end = std::upper_bound(lg.begin(), lg.end(), t,
                              [](double x, const auto& e) { return x < e.first; });
  std::unordered_map<NodeId, double> acc;
  for (auto it = lg.begin(); it != end; ++it) {
    auto [mapped, inserted] = acc.emplace(it->second, it->first);
    if (!inserted) mapped->second = std::max(mapped->second, it->first);
  }
  out.reserve(acc.size());
  for (const auto& [v, tv] : acc)
    if (tv != t) out.emplace_back(v, tv);  // current neighbors excluded
  std::sort(out.begin(), out.end());
  return out;
}

const std::unordered_map<NodeId, double>& HistoricalNeighborIndex::neighbors_of(
    NodeId u) const {
  static const std::unordered_map<NodeId, double> kEmpty;
  if (u < 0 || u >= num_nodes()) return kEmpty;
  return latest_[static_cast<std::size_t>(u)];
}

std::int64_t HistoricalNeighborIndex::neighbor_count(NodeId u) const {
  return static_cast<std::int64_t>(neighbors_of(u).size());
}

std::optional<double> HistoricalNeighborIndex::last_seen(NodeId n) const {
  if (n < 0 || n >= num_nodes()) return std::nullopt;
  const double v = last_seen_[static_cast<std::size_t>(n)];
  if (std::isnan(v)) return std::nullopt;
  return v;
}

ChronologicalSplit split_chronological(const TemporalGraph& g,
                                       std::array<double, 3> ratios) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw SplitError("split ratios must sum to 1, got " + std::to_string(sum));
  const std::int64_t n = g.num_events();
  if (n == 0) throw SplitError("cannot split an empty graph");

  auto boundary = [&](double frac) {
    return static_cast<EventIdx>(std::floor(frac * static_cast<double>(n) + 1e-9));
  };
  EventIdx b1 = boundary(ratios[0]);
  EventIdx b2 = boundary(ratios[0] + ratios[1]);

  // Equal-timestamp runs may not straddle a boundary: push it past the run.
  auto push_forward = [&](EventIdx b) {
    while (b > 0 && b < n &&
           g.t[static_cast<std::size_t>(b)] == g.t[static_cast<std::size_t>(b - 1)])
      ++b;
    return b;
  };
  b1 = push_forward(b1);
  b2 = push_forward(std::max(b1, b2));

  if (b1 <= 0 || b1 >= n) throw SplitError("train split is degenerate");
  if (b2 <= b1) throw SplitError("validation split is empty");
  if (b2 >= n) throw SplitError("test split is empty");

  ChronologicalSplit s;
  s.train_end = b1;
  s.val_end = b2;
  s.test_end = n;
  s.t_val = g.t[static_cast<std::size_t>(b1)];
  s.t_test = g.t[static_cast<std::size_t>(b2)];
  return s;
}

DatasetStats compute_stats(const TemporalGraph& g) {
  g.validate();
  DatasetStats s;
  s.num_nodes = g.num_nodes;
  s.num_edges = g.num_events();
  s.time_span = g.time_span();

  const std::size_t n_nodes = static_cast<std::size_t>(g.num_nodes);
  std::vector<std::int64_t> participation(n_nodes, 0);
  std::vector<NodeId> last_partner(n_nodes, -1);
  // unordered pair -> source-side participation counts at its last occurrence
  std::unordered_map<std::uint64_t, std::pair<std::int64_t, std::int64_t>> pair_last;
  pair_last.reserve(g.t.size());

  std::int64_t recency_hits = 0;
  std::int64_t repeated = 0;
  double proximity_sum = 0.0;
  std::int64_t proximity_n = 0;

  for (std::size_t i = 0; i < g.t.size(); ++i) {
    const NodeId u = g.src[i];
    const NodeId v = g.dst[i];
    const auto su = static_cast<std::size_t>(u);
    const auto sv = static_cast<std::size_t>(v);

    if (last_partner[su] == v) ++recency_hits;

    const std::uint64_t key = unordered_pair_key(u, v);
    auto it = pair_last.find(key);
    if (it != pair_last.end()) {
      ++repeated;
      const std::int64_t prev_u_count =
          (u <= v) ? it->second.first : it->second.second;
      proximity_sum += static_cast<double>(participation[su] - prev_u_count);
      ++proximity_n;
    }
    pair_last[key] = (u <= v)
                         ? std::make_pair(participation[su], participation[sv])
                         : std::make_pair(participation[sv], participation[su]);

    ++participation[su];
    if (v != u) ++participation[sv];
    last_partner[su] = v;
    last_partner[sv] = u;
  }

  const double n_events = static_cast<double>(g.num_events());
  s.recency = static_cast<double>(recency_hits) / n_events;
  s.repetition = static_cast<double>(repeated) / n_events;
  s.average_proximity = proximity_n > 0 ? proximity_sum / static_cast<double>(proximity_n) : 0.0;
  s.d_max = *std::max_element(participation.begin(), participation.end());

  const double unique_pairs = static_cast<double>(pair_last.size());
  double possible = 0.0;
  if (g.bipartite) {
    double n_src = 0, n_dst = 0;
    for (std::uint8_t b : g.on_dst_side) (b ? n_dst : n_src) += 1.0;
    possible = n_src * n_dst;
  } else {
    possible = 0.5 * static_cast<double>(g.num_nodes) *
               static_cast<double>(g.num_nodes - 1);
  }
  s.density = possible > 0 ? unique_pairs / possible : 0.0;
  return s;
}

std::string stats_to_json(const DatasetStats& s) {
  nlohmann::json j;
  j["num_nodes"] = s.num_nodes;
  j["num_edges"] = s.num_edges;
  j["average_proximity"] = s.average_proximity;
  j["recency"] = s.recency;
  j["repetition"] = s.repetition;
  j["density"] = s.density;
  j["d_max"] = s.d_max;
  j["time_span"] = s.time_span;
  return j.dump(2);
}

}  // namespace curnm
