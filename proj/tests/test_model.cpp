#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "curnm/eval.hpp"
#include "curnm/host_model.hpp"
#include "curnm/trainer.hpp"
#include "test_util.hpp"

using namespace curnm;

namespace {

TemporalGraph random_graph(int n_nodes, int n_events, std::uint64_t seed,
                           bool bipartite = false, int n_src = 0) {
  std::mt19937_64 rng(seed);
  std::vector<NodeId> src, dst;
  std::vector<double> t;
  for (int i = 0; i < n_events; ++i) {
    if (bipartite) {
      src.push_back(static_cast<NodeId>(rng() % static_cast<std::uint64_t>(n_src)));
      dst.push_back(static_cast<NodeId>(
          n_src + static_cast<NodeId>(rng() % static_cast<std::uint64_t>(n_nodes - n_src))));
    } else {
      const NodeId u = static_cast<NodeId>(rng() % static_cast<std::uint64_t>(n_nodes));
      NodeId v = static_cast<NodeId>(rng() % static_cast<std::uint64_t>(n_nodes));
      if (v == u) v = (v + 1) % n_nodes;
      src.push_back(u);
      dst.push_back(v);
    }
    t.push_back(static_cast<double>(i));
  }
  return make_graph(src, dst, t, n_nodes, bipartite);
}

}  // namespace

TEST_CASE("gru cell gradients match finite differences") {
  ParameterStore store(3);
  auto cell = GruCell::create(store, "gru", 4, 6);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> dist(0.0, 1.0);
  MatrixXd S(4, 2), M(6, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) S(i, j) = dist(rng);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 2; ++j) M(i, j) = dist(rng);

  auto objective = [&]() { return cell.forward(store, S, M).sum(); };

  GruCell::Cache cache;
  cell.forward(store, S, M, &cache);
  store.zero_grad();
  MatrixXd dM = MatrixXd::Zero(6, 2), dS = MatrixXd::Zero(4, 2);
  cell.backward(store, cache, MatrixXd::Ones(4, 2), &dM, &dS);

  for (const auto& b : store.blocks()) {
    for (std::int64_t i = 0; i < b.size(); i += std::max<std::int64_t>(1, b.size() / 6)) {
      const double analytic = store.raw_grad()[static_cast<std::size_t>(b.offset + i)];
      const double fd =
          testutil::central_diff(objective, store.raw(), static_cast<std::size_t>(b.offset + i));
      INFO("block " << b.name << " i " << i);
      CHECK(testutil::rel_err(analytic, fd) < 1e-4);
    }
  }
  // input gradients
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 2; ++j) {
      const double orig = M(i, j);
      M(i, j) = orig + 1e-6;
      const double fp = objective();
      M(i, j) = orig - 1e-6;
      const double fm = objective();
      M(i, j) = orig;
      CHECK(testutil::rel_err(dM(i, j), (fp - fm) / 2e-6) < 1e-4);
    }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) {
      const double orig = S(i, j);
      S(i, j) = orig + 1e-6;
      const double fp = objective();
      S(i, j) = orig - 1e-6;
      const double fm = objective();
      S(i, j) = orig;
      CHECK(testutil::rel_err(dS(i, j), (fp - fm) / 2e-6) < 1e-4);
    }
}

TEST_CASE("pair scorer and time2vec gradients match finite differences") {
  ParameterStore store(4);
  auto scorer = PairScorer::create(store, "dec", 4);
  auto t2v = Time2Vec::create(store, "t2v", 5);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> dist(0.0, 1.0);
  MatrixXd X(4, 3), Y(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      X(i, j) = dist(rng);
      Y(i, j) = dist(rng);
    }
  const double t_in = 0.37;

  auto objective = [&]() {
    return scorer.forward(store, X, Y).sum() + t2v.forward(store, t_in).sum();
  };

  MatrixXd H;
  scorer.forward(store, X, Y, &H);
  store.zero_grad();
  MatrixXd dX = MatrixXd::Zero(4, 3), dY = MatrixXd::Zero(4, 3);
  scorer.backward(store, X, Y, H, VectorXd::Ones(3), &dX, &dY);
  t2v.backward(store, t_in, VectorXd::Ones(5));

  for (const auto& b : store.blocks()) {
    for (std::int64_t i = 0; i < b.size(); i += std::max<std::int64_t>(1, b.size() / 6)) {
      const double analytic = store.raw_grad()[static_cast<std::size_t>(b.offset + i)];
      const double fd =
          testutil::central_diff(objective, store.raw(), static_cast<std::size_t>(b.offset + i));
      INFO("block " << b.name << " i " << i);
      CHECK(testutil::rel_err(analytic, fd) < 1e-4);
    }
  }
}

TEST_CASE("time2vec evaluates to ones at t=0 with fresh parameters") {
  ParameterStore store(5);
  auto t2v = Time2Vec::create(store, "t2v", 6);
  VectorXd v = t2v.forward(store, 0.0);
  for (int i = 0; i < 6; ++i) CHECK(v(i) == doctest::Approx(1.0));
}

TEST_CASE("cold start embedding equals the base embedding") {
  ParameterStore store(6);
  TgnLite host(HostConfig{8, 4}, 10, store);
  host.set_time_origin(0.0, 1.0);
  const VectorXd base_col = store.mat(host.base_block()).col(3);
  CHECK((host.embed_stored(3) - base_col).norm() == 0.0);
  auto fb = host.embed_fresh(std::vector<NodeId>{3});
  CHECK((fb.H.col(0) - base_col).norm() == 0.0);
}

TEST_CASE("replaying the same stream after reset reproduces embeddings") {
  ParameterStore store(7);
  TgnLite host(HostConfig{8, 4}, 12, store);
  host.set_time_origin(0.0, 10.0);
  auto run = [&]() {
    host.reset_state();
    host.observe(0, 1, 1.0, 0);
    host.observe(2, 3, 2.0, 1);
    host.observe(0, 3, 4.0, 2);
    std::vector<NodeId> nodes{0, 1, 2, 3};
    return host.embed_fresh(nodes).H.eval();
  };
  const MatrixXd a = run();
  const MatrixXd b = run();
  CHECK((a - b).norm() == 0.0);

  // observe is order-sensitive and idempotent per event ordinal
  host.reset_state();
  host.observe(0, 1, 1.0, 0);
  host.observe(0, 1, 1.0, 0);  // replayed ordinal: no-op
  std::vector<NodeId> probe{0, 1};
  const MatrixXd once = host.embed_fresh(probe).H.eval();
  host.reset_state();
  host.observe(0, 1, 1.0, 0);
  const MatrixXd again = host.embed_fresh(probe).H.eval();
  CHECK((once - again).norm() == 0.0);
}

TEST_CASE("fresh-embedding backward matches finite differences through the cell") {
  ParameterStore store(8);
  TgnLite host(HostConfig{4, 3}, 6, store);
  host.set_time_origin(0.0, 10.0);
  auto replay = [&]() {
    host.reset_state();
    host.observe(0, 1, 1.0, 0);
    host.observe(1, 2, 3.0, 1);
    host.observe(0, 2, 5.0, 2);
  };
  auto objective = [&]() {
    replay();
    std::vector<NodeId> nodes{0, 1, 2, 3};
    return host.embed_fresh(nodes).H.sum();
  };
  replay();
  std::vector<NodeId> nodes{0, 1, 2, 3};
  auto fb = host.embed_fresh(nodes);
  store.zero_grad();
  host.backward_fresh(fb, MatrixXd::Ones(4, 4));
  for (const auto& b : store.blocks()) {
    if (b.name.rfind("host.dec", 0) == 0) continue;  // decoder not in this path
    for (std::int64_t i = 0; i < b.size(); i += std::max<std::int64_t>(1, b.size() / 5)) {
      const double analytic = store.raw_grad()[static_cast<std::size_t>(b.offset + i)];
      const double fd =
          testutil::central_diff(objective, store.raw(), static_cast<std::size_t>(b.offset + i));
      if (std::abs(analytic) < 1e-12 && std::abs(fd) < 1e-7) continue;
      INFO("block " << b.name << " i " << i);
      // memory values are recomputed in the objective, so only the one-step
      // path is compared; stored-memory dependence on parameters is truncated
      if (b.name.rfind("host.base", 0) == 0) {
        CHECK(testutil::rel_err(analytic, fd) < 1e-4);
      }
    }
  }
}

TEST_CASE("composite loss: endpoints, closed forms, independent oracle") {
  // delta = 1: selected negatives only contribute through lambda * L_con
  std::vector<double> pos{0.8, 0.7}, rnd{0.3, 0.4}, sel{0.9, 0.99};
  std::vector<double> lcon{0.5, 0.7};
  auto b1 = composite_loss(pos, rnd, sel, lcon, 1.0, 0.0, 0.0, 0.0);
  std::vector<double> other_sel{0.1, 0.2};
  auto b1b = composite_loss(pos, rnd, other_sel, lcon, 1.0, 0.0, 0.0, 0.0);
  CHECK(b1.total == doctest::Approx(b1b.total));  // p_sel has zero weight

  // p = 0.5 everywhere -> each BCE term is ln 2
  std::vector<double> half{0.5, 0.5, 0.5};
  auto b2 = composite_loss(half, half, half, {}, 0.4, 0.0, 0.0, 0.0);
  CHECK(b2.l_pos == doctest::Approx(std::log(2.0)));
  CHECK(b2.l_rand == doctest::Approx(std::log(2.0)));
  CHECK(b2.l_sel == doctest::Approx(std::log(2.0)));
  CHECK(b2.total == doctest::Approx(std::log(2.0) * (1.0 + 0.4 + 0.6)));

  // random fixture vs an independently coded direct sum of the loss formula
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.01, 0.99);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(5), r(4), s(4), lc(4);
    for (auto& x : p) x = U(rng);
    for (auto& x : r) x = U(rng);
    for (auto& x : s) x = U(rng);
    for (auto& x : lc) x = 2.0 * U(rng) - 1.0;
    const double delta = U(rng), lambda = U(rng), mu = 0.01 * U(rng), sq = 10.0 * U(rng);
    auto got = composite_loss(p, r, s, lc, delta, lambda, mu, sq);
    double lp = 0, lr = 0, ls = 0, lcm = 0;
    for (double x : p) lp += -std::log(x);
    lp /= 5;
    for (double x : r) lr += -std::log(1 - x);
    lr /= 4;
    for (double x : s) ls += -std::log(1 - x);
    ls /= 4;
    for (double x : lc) lcm += x;
    lcm /= 4;
    const double want = lp + delta * lr + (1 - delta) * ls + lambda * lcm + mu * sq;
    CHECK(got.total == doctest::Approx(want).epsilon(1e-12));
  }

  CHECK_THROWS_AS(composite_loss({}, rnd, sel, lcon, 0.5, 0.1, 0.0, 0.0), TrainError);
  std::vector<double> short_sel{0.1};
  CHECK_THROWS_AS(composite_loss(pos, rnd, short_sel, lcon, 0.5, 0.1, 0.0, 0.0), TrainError);
}

TEST_CASE("random sampler: uniformity, exclusion, determinism") {
  auto g = random_graph(12, 60, 21);
  g.build_positive_lookup();
  auto idx = HistoricalNeighborIndex::build(g);
  PoolContext ctx{&g, &idx, g.destination_universe()};

  // two eligible nodes -> each picked ~50%
  auto g2 = make_graph({0, 0}, {1, 1}, {1.0, 2.0}, 4);
  g2.build_positive_lookup();
  auto idx2 = HistoricalNeighborIndex::build(g2);
  PoolContext ctx2{&g2, &idx2, g2.destination_universe()};
  std::mt19937_64 rng(5);
  int first = 0;
  for (int i = 0; i < 10000; ++i) {
    auto v = random_sampler(ctx2, 0, 2.0, 1, rng)[0];  // eligible: {2, 3}
    CHECK(v != 0);
    CHECK(v != 1);
    if (v == 2) ++first;
  }
  CHECK(std::abs(first / 10000.0 - 0.5) < 0.02);

  // all nodes current positives -> error
  auto g3 = make_graph({0, 0}, {1, 2}, {5.0, 5.0}, 3);
  g3.build_positive_lookup();
  auto idx3 = HistoricalNeighborIndex::build(g3);
  PoolContext ctx3{&g3, &idx3, g3.destination_universe()};
  std::mt19937_64 r3(1);
  CHECK_THROWS_AS(random_sampler(ctx3, 0, 5.0, 1, r3), TrainError);

  std::mt19937_64 a(77), b(77);
  CHECK(random_sampler(ctx, 0, 10.0, 5, a) == random_sampler(ctx, 0, 10.0, 5, b));
}

TEST_CASE("recent sampler: latest-first with random backfill") {
  // H_{0,10} = {(1, t=9), (2, t=7)}
  auto g = make_graph({0, 0, 1}, {1, 2, 2}, {9, 7, 11}, 8);
  g.build_positive_lookup();
  auto idx = HistoricalNeighborIndex::build(g);
  PoolContext ctx{&g, &idx, g.destination_universe()};
  std::mt19937_64 rng(2);
  auto negs = recent_sampler(ctx, 0, 10.0, 1, rng);
  CHECK(negs == std::vector<NodeId>{1});  // t=9 beats t=7

  auto two = recent_sampler(ctx, 0, 10.0, 2, rng);
  CHECK(two[0] == 1);
  CHECK(two[1] == 2);

  // empty history: fully random backfill, never the source itself
  auto backfill = recent_sampler(ctx, 5, 10.0, 3, rng);
  CHECK(backfill.size() == 3);
  for (auto v : backfill) CHECK(v != 5);

  // matches a sort-by-timestamp oracle on random graphs
  std::mt19937_64 gen(31);
  auto gr = random_graph(10, 80, 31);
  gr.build_positive_lookup();
  auto idxr = HistoricalNeighborIndex::build(gr);
  PoolContext ctxr{&gr, &idxr, gr.destination_universe()};
  for (int trial = 0; trial < 20; ++trial) {
    const NodeId u = static_cast<NodeId>(gen() % 10);
    const double t = static_cast<double>(gen() % 80);
    auto hist = idxr.query(u, t);
    std::unordered_set<NodeId> currents;
    for (NodeId v : gr.positives_at(u, t)) currents.insert(v);
    std::vector<std::pair<double, NodeId>> elig;
    for (auto& [v, tv] : hist)
      if (!currents.count(v) && v != u) elig.emplace_back(tv, v);
    std::sort(elig.begin(), elig.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const std::int64_t n = std::min<std::int64_t>(2, static_cast<std::int64_t>(elig.size()));
    if (n == 0) continue;
    std::mt19937_64 r2(0);
    auto got = recent_sampler(ctxr, u, t, n, r2);
    for (std::int64_t i = 0; i < n; ++i)
      CHECK(got[static_cast<std::size_t>(i)] == elig[static_cast<std::size_t>(i)].second);
  }
}

namespace {

TrainerConfig small_tcfg(std::uint64_t seed) {
  TrainerConfig t;
  t.batch_size = 50;
  t.max_epochs = 5;
  t.learning_rate = 1e-3;
  t.lambda_con = 0.1;
  t.mu_l2 = 0.0;
  t.seed = seed;
  t.patience = 50;
  return t;
}

CurriculumConfig small_ccfg() {
  CurriculumConfig c;
  c.e_prime = 3;
  c.e_double_prime = 3;
  return c;
}

}  // namespace

TEST_CASE("training smoke: smoothed loss does not increase (random sampler)") {
  auto g = random_graph(30, 500, 55);
  auto split = split_chronological(g, {0.7, 0.15, 0.15});
  Trainer tr(g, split, SamplerKind::random, small_tcfg(1), small_ccfg(), PoolConfig{4, 0.5},
             SelectorConfig{16, 4}, HostConfig{16, 4});
  auto res = tr.train();
  REQUIRE(res.trace.size() == 5);
  auto smooth = [&](std::size_t i) {
    double s = 0;
    for (std::size_t j = i; j < i + 3; ++j) s += res.trace[j].train_loss;
    return s / 3.0;
  };
  CHECK(smooth(2) <= smooth(0) + 1e-6);
}

TEST_CASE("curnm with tau=1: cache active from epoch 1, hard tags appear") {
  testutil::TempDir tmp;
  auto g = random_graph(30, 300, 56);
  auto split = split_chronological(g, {0.7, 0.15, 0.15});
  auto tcfg = small_tcfg(2);
  tcfg.max_epochs = 3;
  tcfg.pool_dump_path = tmp.file("pools.jsonl");
  auto ccfg = small_ccfg();
  ccfg.tau = 1.0;
  Trainer tr(g, split, SamplerKind::curnm, tcfg, ccfg, PoolConfig{4, 0.5},
             SelectorConfig{16, 4}, HostConfig{16, 4});
  auto res = tr.train();
  CHECK(tr.curriculum().cache_active);
  std::ifstream in(tmp.file("pools.jsonl"));
  std::string line;
  int hard_lines = 0, total = 0;
  while (std::getline(in, line)) {
    ++total;
    if (line.find("\"hard\"") != std::string::npos) ++hard_lines;
  }
  CHECK(total > 0);
  CHECK(hard_lines > 0);
}

TEST_CASE("identical seed and config give bit-identical traces") {
  auto g = random_graph(30, 400, 57);
  auto split = split_chronological(g, {0.7, 0.15, 0.15});
  auto run = [&]() {
    Trainer tr(g, split, SamplerKind::curnm, small_tcfg(3), small_ccfg(),
               PoolConfig{4, 0.5}, SelectorConfig{16, 4}, HostConfig{16, 4});
    return tr.train();
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].train_loss == b.trace[i].train_loss);
    CHECK(a.trace[i].val_ap == b.trace[i].val_ap);
    CHECK(a.trace[i].pi == b.trace[i].pi);
  }
  CHECK(a.best_params == b.best_params);
}

TEST_CASE("curnm with delta=1, lambda=mu=0 reduces to random-negative training") {
  auto g = random_graph(40, 400, 58);
  auto split = split_chronological(g, {0.7, 0.15, 0.15});

  auto tcfg = small_tcfg(4);
  tcfg.max_epochs = 3;
  tcfg.lambda_con = 0.0;
  tcfg.mu_l2 = 0.0;
  tcfg.negatives_per_positive = 1;

  auto ccfg = small_ccfg();
  ccfg.delta_min = 1.0;           // delta = max(pi, 1) = 1
  ccfg.pi_init = 0.25;            // n_b = 0.25 * |b| * 4 = |b|
  ccfg.pi_min = 0.25;
  ccfg.ablate_adaptive_pi = true; // keep n_b = |b| across epochs

  Trainer curnm(g, split, SamplerKind::curnm, tcfg, ccfg, PoolConfig{4, 0.5},
                SelectorConfig{16, 4}, HostConfig{16, 4});
  auto a = curnm.train();
  Trainer baseline(g, split, SamplerKind::random, tcfg, ccfg, PoolConfig{4, 0.5},
                   SelectorConfig{16, 4}, HostConfig{16, 4});
  auto b = baseline.train();
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].train_loss == b.trace[i].train_loss);
    CHECK(a.trace[i].val_ap == b.trace[i].val_ap);
  }
}

TEST_CASE("checkpoint round trip preserves validation AP") {
  testutil::TempDir tmp;
  auto g = random_graph(30, 300, 59);
  auto split = split_chronological(g, {0.7, 0.15, 0.15});
  auto tcfg = small_tcfg(5);
  tcfg.max_epochs = 2;
  Trainer tr(g, split, SamplerKind::curnm, tcfg, small_ccfg(), PoolConfig{4, 0.5},
             SelectorConfig{16, 4}, HostConfig{16, 4});
  auto res = tr.train();
  tr.restore_params(res.best_params);
  const auto ckpt = tmp.file("model.ckpt");
  tr.save_checkpoint(ckpt);

  auto eval_val = [&](Trainer& t) {
    t.host().reset_state();
    HistoricalNeighborIndex idx(g.num_nodes);
    replay_range(t.host(), idx, g, 0, split.train_end);
    EvalProtocol proto;
    proto.seed = 123;
    return evaluate_stream(t.host(), idx, g, split.train_end, split.val_end, proto, split).ap;
  };
  const double ap1 = eval_val(tr);

  Trainer tr2(g, split, SamplerKind::curnm, tcfg, small_ccfg(), PoolConfig{4, 0.5},
              SelectorConfig{16, 4}, HostConfig{16, 4});
  tr2.load_checkpoint(ckpt);
  const double ap2 = eval_val(tr2);
  CHECK(ap1 == ap2);
}
