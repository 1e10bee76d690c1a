#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <unordered_map>

#include "curnm/graph.hpp"
#include "test_util.hpp"

using namespace curnm;

TEST_CASE("load_edge_list sorts by timestamp, ties keep input order") {
  testutil::TempDir tmp;
  const auto path = tmp.file("edges.csv");
  testutil::write_file(path, "0,1,10\n0,2,20\n1,2,15\n");
  auto g = load_edge_list(path, EdgeListSchema{});
  REQUIRE(g.num_events() == 3);
  CHECK(g.t == std::vector<double>{10, 15, 20});
  CHECK(g.src == std::vector<NodeId>{0, 1, 0});
  CHECK(g.dst == std::vector<NodeId>{1, 2, 2});
  CHECK(g.num_nodes == 3);

  const auto path2 = tmp.file("ties.csv");
  testutil::write_file(path2, "3,4,5\n1,2,5\n0,1,4\n");
  auto g2 = load_edge_list(path2, EdgeListSchema{});
  CHECK(g2.t == std::vector<double>{4, 5, 5});
  // first-appearance remap: 3->0, 4->1, 1->2, 2->3, 0->4; ties keep input order
  CHECK(g2.src == std::vector<NodeId>{4, 0, 2});
  CHECK(g2.dst == std::vector<NodeId>{2, 1, 3});
}

TEST_CASE("load_edge_list errors") {
  testutil::TempDir tmp;
  const auto empty = tmp.file("empty.csv");
  testutil::write_file(empty, "");
  CHECK_THROWS_AS(load_edge_list(empty, EdgeListSchema{}), LoadError);

  const auto bad = tmp.file("bad.csv");
  testutil::write_file(bad, "0,1,10\n0,oops,20\n");
  try {
    load_edge_list(bad, EdgeListSchema{});
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  const auto badts = tmp.file("badts.csv");
  testutil::write_file(badts, "0,1,notatime\n");
  CHECK_THROWS_AS(load_edge_list(badts, EdgeListSchema{}), LoadError);

  CHECK_THROWS_AS(load_edge_list(tmp.file("missing.csv"), EdgeListSchema{}), LoadError);
}

TEST_CASE("dense reindexing and id-mapping round trip") {
  testutil::TempDir tmp;
  const auto path = tmp.file("edges.csv");
  testutil::write_file(path, "100,7,1\n7,42,2\n100,42,3\n");
  auto g = load_edge_list(path, EdgeListSchema{});
  CHECK(g.num_nodes == 3);
  CHECK(g.src == std::vector<NodeId>{0, 1, 0});
  CHECK(g.dst == std::vector<NodeId>{1, 2, 2});

  const auto map_path = tmp.file("idmap.csv");
  save_id_mapping(g, map_path);
  auto mapping = load_id_mapping(map_path);
  REQUIRE(mapping.size() == 3);
  for (const auto& [ext, internal] : g.id_mapping) CHECK(mapping.at(ext) == internal);
}

TEST_CASE("as_is id policy keeps literal ids and sizes by max id") {
  testutil::TempDir tmp;
  const auto path = tmp.file("edges.csv");
  testutil::write_file(path, "1,5,1\n2,5,2\n");
  EdgeListSchema schema;
  schema.id_policy = EdgeListSchema::IdPolicy::as_is;
  auto g = load_edge_list(path, schema);
  CHECK(g.num_nodes == 6);
  CHECK(g.src == std::vector<NodeId>{1, 2});
  CHECK(g.id_mapping.empty());
}

TEST_CASE("split_chronological basic ranges") {
  std::vector<NodeId> src(10, 0), dst(10, 1);
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(i);
  auto g = make_graph(src, dst, t);
  auto s = split_chronological(g, {0.7, 0.15, 0.15});
  CHECK(s.train_end == 7);
  CHECK(s.val_end == 8);
  CHECK(s.test_end == 10);
  CHECK(s.t_val == 7.0);
  CHECK(s.t_test == 8.0);
}

TEST_CASE("split_chronological rejects degenerate inputs") {
  std::vector<NodeId> src(100, 0), dst(100, 1);
  std::vector<double> t_same(100, 42.0);
  auto g = make_graph(src, dst, t_same);
  CHECK_THROWS_AS(split_chronological(g, {0.7, 0.15, 0.15}), SplitError);

  std::vector<double> t_inc;
  for (int i = 0; i < 100; ++i) t_inc.push_back(i);
  auto g2 = make_graph(src, dst, t_inc);
  CHECK_THROWS_AS(split_chronological(g2, {1.0, 0.0, 0.0}), SplitError);
  CHECK_THROWS_AS(split_chronological(g2, {0.5, 0.2, 0.2}), SplitError);
}

TEST_CASE("split boundary moves past equal-timestamp runs") {
  std::vector<NodeId> src(20, 0), dst(20, 1);
  std::vector<double> t{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 13, 15, 16, 17, 18, 19};
  auto g = make_graph(src, dst, t);
  auto s = split_chronological(g, {0.7, 0.15, 0.15});
  // initial b1=14 splits the 13,13 run -> pushed to the first strictly greater t
  CHECK(s.train_end == 15);
  CHECK(s.val_end == 17);
  CHECK(s.t_val == 15.0);
  CHECK(s.t_test == 17.0);

  // pushing the boundary may empty a split; that is an error
  std::vector<NodeId> src2(10, 0), dst2(10, 1);
  std::vector<double> t2{0, 1, 2, 3, 4, 5, 6, 6, 6, 9};
  auto g2 = make_graph(src2, dst2, t2);
  CHECK_THROWS_AS(split_chronological(g2, {0.7, 0.15, 0.15}), SplitError);
}

TEST_CASE("split monotone boundaries property") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 50 + static_cast<int>(rng() % 100);
    std::vector<NodeId> src, dst;
    std::vector<double> t;
    double cur = 0;
    for (int i = 0; i < n; ++i) {
      src.push_back(static_cast<NodeId>(rng() % 10));
      dst.push_back(static_cast<NodeId>(rng() % 10));
      cur += static_cast<double>(rng() % 3);  // repeats allowed
      t.push_back(cur);
    }
    auto g = make_graph(src, dst, t);
    ChronologicalSplit s;
    try {
      s = split_chronological(g, {0.7, 0.15, 0.15});
    } catch (const SplitError&) {
      continue;
    }
    const double max_train = *std::max_element(g.t.begin(), g.t.begin() + s.train_end);
    const double min_val = g.t[static_cast<std::size_t>(s.train_end)];
    const double max_val = *std::max_element(g.t.begin() + s.train_end, g.t.begin() + s.val_end);
    const double min_test = g.t[static_cast<std::size_t>(s.val_end)];
    CHECK(max_train <= min_val);
    CHECK(max_val <= min_test);
    CHECK(max_train < min_val);  // D3 guarantees strict separation
    CHECK(max_val < min_test);
  }
}

TEST_CASE("query_historical latest-timestamp and current-exclusion rules") {
  auto g = make_graph({0, 0, 0}, {1, 1, 2}, {5, 9, 7});
  auto idx = HistoricalNeighborIndex::build(g);
  auto h = idx.query(0, 10);
  REQUIRE(h.size() == 2);
  CHECK(h[0] == std::pair<NodeId, double>{1, 9.0});
  CHECK(h[1] == std::pair<NodeId, double>{2, 7.0});

  auto g2 = make_graph({0}, {1}, {5});
  auto idx2 = HistoricalNeighborIndex::build(g2);
  CHECK(idx2.query(0, 5).empty());   // current neighbor excluded
  CHECK(idx2.query(0, 4.9).empty()); // nothing earlier
  CHECK(idx2.query(0, 6).size() == 1);
  CHECK(idx2.query(99, 6).empty());  // unknown source -> empty, not an error
}

TEST_CASE("query_historical equals brute-force scan on random graphs") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    const int n_events = 50;
    const int n_nodes = 8;
    std::vector<NodeId> src, dst;
    std::vector<double> t;
    double cur = 0;
    for (int i = 0; i < n_events; ++i) {
      src.push_back(static_cast<NodeId>(rng() % n_nodes));
      dst.push_back(static_cast<NodeId>(rng() % n_nodes));
      cur += static_cast<double>(rng() % 2);  // generate timestamp ties
      t.push_back(cur);
    }
    auto g = make_graph(src, dst, t, n_nodes);
    auto idx = HistoricalNeighborIndex::build(g);

    for (NodeId u = 0; u < n_nodes; ++u) {
      for (double q : {0.0, cur / 3.0, cur / 2.0, cur, cur + 1.0}) {
        std::unordered_map<NodeId, double> latest;
        for (std::int64_t i = 0; i < g.num_events(); ++i) {
          if (g.src[static_cast<std::size_t>(i)] != u) continue;
          const double ti = g.t[static_cast<std::size_t>(i)];
          if (ti > q) continue;
          auto [it, ins] = latest.emplace(g.dst[static_cast<std::size_t>(i)], ti);
          if (!ins) it->second = std::max(it->second, ti);
        }
        std::vector<std::pair<NodeId, double>> want;
        for (auto& [v, tv] : latest)
          if (tv != q) want.emplace_back(v, tv);
        std::sort(want.begin(), want.end());
        CHECK(idx.query(u, q) == want);
      }
    }
  }
}

TEST_CASE("compute_stats hand counts") {
  auto g = make_graph({0, 0, 0}, {1, 1, 2}, {1, 2, 3});
  auto s = compute_stats(g);
  CHECK(s.repetition == doctest::Approx(1.0 / 3.0));
  CHECK(s.recency == doctest::Approx(1.0 / 3.0));
  CHECK(s.num_edges == 3);
  CHECK(s.d_max == 3);  // node 0 takes part in all three events
  CHECK(s.average_proximity == doctest::Approx(1.0));  // immediate repeat

  auto g2 = make_graph({0, 1, 2}, {3, 4, 5}, {1, 2, 3});
  auto s2 = compute_stats(g2);
  CHECK(s2.repetition == 0.0);
  CHECK(s2.recency == 0.0);
  CHECK(s2.average_proximity == 0.0);
}

TEST_CASE("compute_stats invariant under reordering of distinct-timestamp rows") {
  testutil::TempDir tmp;
  const auto a = tmp.file("a.csv");
  const auto b = tmp.file("b.csv");
  testutil::write_file(a, "0,1,1\n0,2,2\n1,2,3\n0,1,4\n2,1,5\n");
  testutil::write_file(b, "2,1,5\n0,1,1\n0,1,4\n1,2,3\n0,2,2\n");
  EdgeListSchema schema;
  schema.id_policy = EdgeListSchema::IdPolicy::as_is;
  auto sa = compute_stats(load_edge_list(a, schema));
  auto sb = compute_stats(load_edge_list(b, schema));
  CHECK(sa.recency == sb.recency);
  CHECK(sa.repetition == sb.repetition);
  CHECK(sa.average_proximity == sb.average_proximity);
  CHECK(sa.d_max == sb.d_max);
  CHECK(sa.density == sb.density);
}

TEST_CASE("stats JSON emission") {
  auto g = make_graph({0, 0}, {1, 2}, {1, 2});
  auto json = stats_to_json(compute_stats(g));
  CHECK(json.find("\"num_edges\": 2") != std::string::npos);
  CHECK(json.find("\"recency\"") != std::string::npos);
}

TEST_CASE("bipartite destination universe and density") {
  auto g = make_graph({0, 0, 1}, {2, 3, 2}, {1, 2, 3}, 4, /*bipartite=*/true);
  auto uni = g.destination_universe();
  CHECK(uni == std::vector<NodeId>{2, 3});
  auto s = compute_stats(g);
  // unique pairs {0,2},{0,3},{1,2} over |U|*|I| = 2*2
  CHECK(s.density == doctest::Approx(0.75));
}

TEST_CASE("positives_at returns currents at exactly t") {
  auto g = make_graph({0, 0, 0, 1}, {1, 2, 1, 2}, {5, 5, 7, 5});
  g.build_positive_lookup();
  auto cur = g.positives_at(0, 5);
  std::sort(cur.begin(), cur.end());
  CHECK(cur == std::vector<NodeId>{1, 2});
  CHECK(g.is_positive_at(0, 1, 7));
  CHECK_FALSE(g.is_positive_at(0, 2, 7));
}
