#include "curnm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <unordered_set>

#include <json.hpp>

namespace curnm {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x43524e4d;  // "CRNM"
constexpr std::uint32_t kCheckpointVersion = 1;

double clamp(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

}  // namespace

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::random: return "random";
    case SamplerKind::recent: return "recent";
    case SamplerKind::curnm: return "curnm";
  }
  return "?";
}

SamplerKind sampler_from_string(const std::string& s) {
  if (s == "random") return SamplerKind::random;
  if (s == "recent") return SamplerKind::recent;
  if (s == "curnm") return SamplerKind::curnm;
  throw ValidationError("unknown sampler '" + s + "' (random|recent|curnm)");
}

void PoolConfig::validate() const {
  std::string err;
  if (M < 2) err += "  pool M must be >= 2\n";
  if (M % 2 != 0) err += "  pool M must be even (hard cache is M/2)\n";
  if (!(gamma_hist > 0.0 && gamma_hist < 1.0)) err += "  gamma_hist must be in (0,1)\n";
  if (!err.empty()) throw ValidationError("invalid pool config:\n" + err);
}

void TrainerConfig::validate() const {
  std::string err;
  if (batch_size < 1) err += "  batch_size must be >= 1\n";
  if (max_epochs < 1) err += "  max_epochs must be >= 1\n";
  if (!(learning_rate > 0.0)) err += "  learning_rate must be > 0\n";
  if (mu_l2 < 0.0) err += "  mu_l2 must be >= 0\n";
  if (patience < 1) err += "  patience must be >= 1\n";
  if (precision != "double") err += "  precision must be 'double'\n";
  if (negatives_per_positive < 1) err += "  negatives_per_positive must be >= 1\n";
  if (!err.empty()) throw ValidationError("invalid trainer config:\n" + err);
}

LossBreakdown composite_loss(std::span<const double> p_pos, std::span<const double> p_rand,
                             std::span<const double> p_sel,
                             std::span<const double> l_con_pairs, double delta,
                             double lambda, double mu, double theta_squared_norm) {
  if (p_pos.empty()) throw TrainError("composite loss requires a non-empty positive batch");
  if (p_rand.size() != p_sel.size())
    throw TrainError("random and selected negative sets must have equal size n_b");
  LossBreakdown out;
  for (double p : p_pos) out.l_pos += bce(p, 1.0);
  out.l_pos /= static_cast<double>(p_pos.size());
  for (double p : p_rand) out.l_rand += bce(p, 0.0);
  if (!p_rand.empty()) out.l_rand /= static_cast<double>(p_rand.size());
  for (double p : p_sel) out.l_sel += bce(p, 0.0);
  if (!p_sel.empty()) out.l_sel /= static_cast<double>(p_sel.size());
  for (double l : l_con_pairs) out.l_con += l;
  if (!l_con_pairs.empty()) out.l_con /= static_cast<double>(l_con_pairs.size());
  out.l2 = mu * theta_squared_norm;
  out.total = out.l_pos + delta * out.l_rand + (1.0 - delta) * out.l_sel +
              lambda * out.l_con + out.l2;
  return out;
}

std::vector<NodeId> random_sampler(const PoolContext& ctx, NodeId u, double t,
                                   std::int64_t n, std::mt19937_64& rng) {
  std::unordered_set<NodeId> blocked;
  for (NodeId v : ctx.graph->positives_at(u, t)) blocked.insert(v);
  blocked.insert(u);
  std::int64_t eligible = static_cast<std::int64_t>(ctx.universe.size());
  for (NodeId b : blocked) {
    const bool in_universe =
        ctx.graph->bipartite
            ? (b >= 0 && b < ctx.graph->num_nodes &&
               ctx.graph->on_dst_side[static_cast<std::size_t>(b)])
            : (b >= 0 && b < ctx.graph->num_nodes);
    if (in_universe) --eligible;
  }
  if (eligible <= 0)
    throw TrainError("random sampler: no eligible negatives for source " + std::to_string(u));
  std::vector<NodeId> out;
  out.reserve(static_cast<std::size_t>(n));
  std::uniform_int_distribution<std::size_t> d(0, ctx.universe.size() - 1);
  while (static_cast<std::int64_t>(out.size()) < n) {
    const NodeId v = ctx.universe[d(rng)];
    if (!blocked.count(v)) out.push_back(v);
  }
  return out;
}

std::vector<NodeId> recent_sampler(const PoolContext& ctx, NodeId u, double t,
                                   std::int64_t n, std::mt19937_64& rng) {
  std::unordered_set<NodeId> blocked;
  for (NodeId v : ctx.graph->positives_at(u, t)) blocked.insert(v);
  blocked.insert(u);
  auto hist = ctx.index->query(u, t);
  // latest first; id ascending inside a timestamp tie
  std::sort(hist.begin(), hist.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<NodeId> out;
  std::unordered_set<NodeId> taken;
  for (const auto& [v, tv] : hist) {
    if (static_cast<std::int64_t>(out.size()) >= n) break;
    if (blocked.count(v)) continue;
    out.push_back(v);
    taken.insert(v);
  }
  if (static_cast<std::int64_t>(out.size()) < n) {
    std::uniform_int_distribution<std::size_t> d(0, ctx.universe.size() - 1);
    std::int64_t attempts = 0;
    const std::int64_t need = n - static_cast<std::int64_t>(out.size());
    const std::int64_t max_attempts = 200 * need + 1000;
    while (static_cast<std::int64_t>(out.size()) < n && attempts++ < max_attempts) {
      const NodeId v = ctx.universe[d(rng)];
      if (blocked.count(v) || taken.count(v)) continue;
      out.push_back(v);
      taken.insert(v);
    }
    if (static_cast<std::int64_t>(out.size()) < n)
      throw TrainError("recent sampler: cannot backfill negatives for source " +
                       std::to_string(u));
  }
  return out;
}

Trainer::Trainer(const TemporalGraph& g, const ChronologicalSplit& split,
                 SamplerKind sampler, const TrainerConfig& tcfg,
                 const CurriculumConfig& ccfg, const PoolConfig& pcfg,
                 const SelectorConfig& scfg, const HostConfig& hcfg)
    : g_(&g),
      split_(split),
      sampler_(sampler),
      tcfg_(tcfg),
      ccfg_(ccfg),
      pcfg_(pcfg),
      scfg_(scfg),
      hcfg_(hcfg),
      index_(g.num_nodes) {
  tcfg_.validate();
  ccfg_.validate();
  pcfg_.validate();
  hcfg_.validate();
  if (scfg_.d != hcfg_.d)
    throw ValidationError("selector dimension must match the host embedding dimension");

  store_ = std::make_unique<ParameterStore>(tcfg_.seed);
  host_ = std::make_unique<TgnLite>(hcfg_, g.num_nodes, *store_);
  selector_.emplace(SelectorParams::create(*store_, scfg_));

  const auto train_end = static_cast<std::size_t>(split_.train_end);
  t_origin_ = g.t.front();
  t_span_ = std::max(g.t[train_end - 1] - t_origin_, 1e-12);
  host_->set_time_origin(t_origin_, t_span_);

  ctx_.graph = g_;
  ctx_.index = &index_;
  ctx_.universe = g.destination_universe();

  state_ = make_curriculum_state(ccfg_);
  rng_rand_.seed(tcfg_.seed ^ 0x9e3779b97f4a7c15ull);
  rng_pool_.seed(tcfg_.seed ^ 0x517cc1b727220a95ull);
  lambda_ = tcfg_.lambda_con;
  if (scfg_.ablate_disentangle) lambda_ = 0.0;

  if (!tcfg_.pool_dump_path.empty())
    pool_dump_ = std::make_unique<std::ofstream>(tcfg_.pool_dump_path);
  if (!tcfg_.selector_dump_path.empty())
    selector_dump_ = std::make_unique<std::ofstream>(tcfg_.selector_dump_path);
}

double Trainer::validation_ap() {
  EvalProtocol proto;
  proto.mode = EvalProtocol::Mode::transductive;
  proto.negatives_per_positive = 1;
  proto.seed = tcfg_.val_seed;
  const auto res =
      evaluate_stream(*host_, index_, *g_, split_.train_end, split_.val_end, proto, split_);
  return res.ap;
}

TrainResult Trainer::train() {
  g_->validate();
  g_->build_positive_lookup();

  TrainResult result;
  std::vector<double> val_history;
  std::int64_t epochs_since_best = 0;

  for (std::int64_t epoch = 1; epoch <= tcfg_.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    state_.epoch = epoch;
    state_ = step_schedules(state_);

    // memories are recomputed from scratch every epoch with current parameters
    host_->reset_state();
    index_ = HistoricalNeighborIndex(g_->num_nodes);
    epoch_scores_.clear();

    double loss_sum = 0.0;
    std::int64_t batches = 0;
    std::int64_t nb_last = 0;
    for (EventIdx b0 = 0; b0 < split_.train_end; b0 += tcfg_.batch_size) {
      const EventIdx b1 = std::min<EventIdx>(b0 + tcfg_.batch_size, split_.train_end);
      const auto out = process_batch(b0, b1);
      if (!std::isfinite(out.loss))
        throw TrainError("divergent loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batches));
      loss_sum += out.loss;
      nb_last = out.n_b;
      ++batches;
      for (EventIdx i = b0; i < b1; ++i) {
        const auto s = static_cast<std::size_t>(i);
        host_->observe(g_->src[s], g_->dst[s], g_->t[s], i);
        index_.observe(g_->src[s], g_->dst[s], g_->t[s]);
      }
    }
    const auto train_done = std::chrono::steady_clock::now();

    if (sampler_ == SamplerKind::curnm) score_history_.record_epoch(epoch_scores_);

    const double val_ap = validation_ap();
    val_history.push_back(val_ap);
    const bool improved = judge_improvement(val_history, ccfg_.improvement_tolerance);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.pi = state_.pi;
    rec.delta = state_.delta;
    rec.alpha = state_.alpha;
    rec.beta = state_.beta;
    rec.cache_active = state_.cache_active;
    rec.train_loss = loss_sum / static_cast<double>(std::max<std::int64_t>(batches, 1));
    rec.val_ap = val_ap;
    rec.n_b = nb_last;
    rec.train_seconds =
        std::chrono::duration<double>(train_done - epoch_start).count();
    rec.epoch_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.trace.push_back(rec);

    if (result.trace.size() == 1 || val_ap > result.best_val_ap) {
      result.best_val_ap = val_ap;
      result.best_epoch = epoch;
      result.best_params = store_->raw();
      state_.best_metric = val_ap;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }

    state_ = update_pi(state_, improved);
    result.epochs_run = epoch;
    if (epochs_since_best >= tcfg_.patience) break;
  }
  result.lambda_used = lambda_;
  return result;
}

Trainer::BatchOutcome Trainer::process_batch(EventIdx begin, EventIdx end) {
  return sampler_ == SamplerKind::curnm ? process_batch_curnm(begin, end)
                                        : process_batch_baseline(begin, end);
}

Trainer::BatchOutcome Trainer::process_batch_baseline(EventIdx begin, EventIdx end) {
  const auto B = end - begin;
  std::vector<NodeId> touched;
  touched.reserve(static_cast<std::size_t>(2 * B));
  for (EventIdx i = begin; i < end; ++i) {
    touched.push_back(g_->src[static_cast<std::size_t>(i)]);
    touched.push_back(g_->dst[static_cast<std::size_t>(i)]);
  }
  auto fb = host_->embed_fresh(touched);
  const auto d = hcfg_.d;

  MatrixXd HuPos(d, B), HvPos(d, B);
  for (EventIdx i = begin; i < end; ++i) {
    const auto li = static_cast<Eigen::Index>(i - begin);
    HuPos.col(li) = fb.H.col(fb.col.at(g_->src[static_cast<std::size_t>(i)]));
    HvPos.col(li) = fb.H.col(fb.col.at(g_->dst[static_cast<std::size_t>(i)]));
  }

  // negatives: n per positive, cycling the batch in order
  const std::int64_t n_neg = B * tcfg_.negatives_per_positive;
  std::vector<NodeId> negs(static_cast<std::size_t>(n_neg));
  std::vector<Eigen::Index> neg_owner(static_cast<std::size_t>(n_neg));
  for (std::int64_t j = 0; j < n_neg; ++j) {
    const EventIdx i = begin + (j % B);
    const auto s = static_cast<std::size_t>(i);
    const NodeId u = g_->src[s];
    const double t = g_->t[s];
    negs[static_cast<std::size_t>(j)] =
        (sampler_ == SamplerKind::recent ? recent_sampler(ctx_, u, t, 1, rng_rand_)
                                         : random_sampler(ctx_, u, t, 1, rng_rand_))[0];
    neg_owner[static_cast<std::size_t>(j)] = static_cast<Eigen::Index>(i - begin);
  }
  MatrixXd HuNeg(d, n_neg);
  for (std::int64_t j = 0; j < n_neg; ++j) HuNeg.col(j) = HuPos.col(neg_owner[static_cast<std::size_t>(j)]);
  MatrixXd HvNeg = host_->embed_stored_batch(negs);

  MatrixXd Hpos_cache, Hneg_cache;
  VectorXd logit_pos = host_->decoder().forward(*store_, HuPos, HvPos, &Hpos_cache);
  VectorXd logit_neg = host_->decoder().forward(*store_, HuNeg, HvNeg, &Hneg_cache);
  VectorXd p_pos = (1.0 / (1.0 + (-logit_pos.array()).exp())).matrix();
  VectorXd p_neg = (1.0 / (1.0 + (-logit_neg.array()).exp())).matrix();

  double l_pos = 0.0, l_neg = 0.0;
  for (Eigen::Index i = 0; i < p_pos.size(); ++i) l_pos += bce(p_pos(i), 1.0);
  l_pos /= static_cast<double>(B);
  for (Eigen::Index j = 0; j < p_neg.size(); ++j) l_neg += bce(p_neg(j), 0.0);
  l_neg /= static_cast<double>(n_neg);
  const double l2 = tcfg_.mu_l2 * store_->squared_norm();
  const double total = l_pos + l_neg + l2;

  // backward
  store_->zero_grad();
  MatrixXd dHfresh = MatrixXd::Zero(d, fb.H.cols());
  auto scatter_fresh = [&](const MatrixXd& dcols, auto owner_col_of) {
    for (Eigen::Index c = 0; c < dcols.cols(); ++c) dHfresh.col(owner_col_of(c)) += dcols.col(c);
  };

  VectorXd g_pos = (p_pos.array() - 1.0).matrix() / static_cast<double>(B);
  MatrixXd dHuPos = MatrixXd::Zero(d, B), dHvPos = MatrixXd::Zero(d, B);
  host_->decoder().backward(*store_, HuPos, HvPos, Hpos_cache, g_pos, &dHuPos, &dHvPos);
  scatter_fresh(dHuPos, [&](Eigen::Index c) {
    return fb.col.at(g_->src[static_cast<std::size_t>(begin + c)]);
  });
  scatter_fresh(dHvPos, [&](Eigen::Index c) {
    return fb.col.at(g_->dst[static_cast<std::size_t>(begin + c)]);
  });

  VectorXd g_neg = p_neg / static_cast<double>(n_neg);
  MatrixXd dHuNeg = MatrixXd::Zero(d, n_neg), dHvNeg = MatrixXd::Zero(d, n_neg);
  host_->decoder().backward(*store_, HuNeg, HvNeg, Hneg_cache, g_neg, &dHuNeg, &dHvNeg);
  scatter_fresh(dHuNeg, [&](Eigen::Index c) {
    return fb.col.at(g_->src[static_cast<std::size_t>(begin + neg_owner[static_cast<std::size_t>(c)])]);
  });
  {
    auto base_grad = store_->grad(host_->base_block());
    for (Eigen::Index c = 0; c < dHvNeg.cols(); ++c)
      base_grad.col(negs[static_cast<std::size_t>(c)]) += dHvNeg.col(c);
  }

  store_->add_l2_gradient(tcfg_.mu_l2);
  host_->backward_fresh(fb, dHfresh);
  store_->adam_step(tcfg_.learning_rate);

  BatchOutcome out;
  out.loss = total;
  out.n_b = n_neg;
  return out;
}

Trainer::BatchOutcome Trainer::process_batch_curnm(EventIdx begin, EventIdx end) {
  const auto B = end - begin;
  const auto d = hcfg_.d;
  std::vector<NodeId> touched;
  touched.reserve(static_cast<std::size_t>(2 * B));
  for (EventIdx i = begin; i < end; ++i) {
    touched.push_back(g_->src[static_cast<std::size_t>(i)]);
    touched.push_back(g_->dst[static_cast<std::size_t>(i)]);
  }
  auto fb = host_->embed_fresh(touched);

  // pools, one per positive
  std::vector<NegativePool> pools;
  pools.reserve(static_cast<std::size_t>(B));
  std::vector<NodeId> cand_v;
  std::vector<EventIdx> cand_event;
  for (EventIdx i = begin; i < end; ++i) {
    const auto s = static_cast<std::size_t>(i);
    const NodeId u = g_->src[s];
    const double t = g_->t[s];
    NegativePool pool;
    if (state_.cache_active) {
      auto it = hard_cache_.find(u);
      static const std::vector<NodeId> kEmpty;
      pool = build_late_pool(ctx_, u, t, pcfg_.M, pcfg_.gamma_hist,
                             it == hard_cache_.end() ? kEmpty : it->second, rng_pool_);
    } else {
      pool = build_early_pool(ctx_, u, t, pcfg_.M, pcfg_.gamma_hist, rng_pool_);
    }
    if (pool_dump_) dump_pool_jsonl(*pool_dump_, pool);
    for (NodeId v : pool.candidates) {
      cand_v.push_back(v);
      cand_event.push_back(i);
    }
    pools.push_back(std::move(pool));
  }
  const auto C = static_cast<Eigen::Index>(cand_v.size());

  // candidate scoring inputs
  MatrixXd HuC(d, C), HvPosC(d, C);
  VectorXd tpos(C), tni(C), tls(C);
  for (Eigen::Index j = 0; j < C; ++j) {
    const auto s = static_cast<std::size_t>(cand_event[static_cast<std::size_t>(j)]);
    HuC.col(j) = fb.H.col(fb.col.at(g_->src[s]));
    HvPosC.col(j) = fb.H.col(fb.col.at(g_->dst[s]));
    const double t = g_->t[s];
    tpos(j) = (t - t_origin_) / t_span_;
    const auto& nbrs = index_.neighbors_of(g_->src[s]);
    const auto it = nbrs.find(cand_v[static_cast<std::size_t>(j)]);
    tni(j) = it == nbrs.end() ? 0.0 : (it->second - t_origin_) / t_span_;
    const auto seen = index_.last_seen(cand_v[static_cast<std::size_t>(j)]);
    tls(j) = seen ? (*seen - t_origin_) / t_span_ : 0.0;
  }
  MatrixXd HvC = host_->embed_stored_batch(cand_v);

  // host probabilities p_uv, recorded for the cache machinery
  VectorXd p_cand = host_->score_batch(HuC, HvC);
  for (Eigen::Index j = 0; j < C; ++j) {
    const auto s = static_cast<std::size_t>(cand_event[static_cast<std::size_t>(j)]);
    epoch_scores_[ordered_pair_key(g_->src[s], cand_v[static_cast<std::size_t>(j)])] =
        p_cand(j);
  }

  // temporal selection scores over all candidates
  SelectorPairGraph lean;
  lean.forward(*store_, *selector_, HuC, HvPosC, HvC, tpos, tni, tls, state_.beta);

  const std::int64_t n_b = negatives_budget(state_.pi, B, pcfg_.M);
  std::vector<ScoredPair> scored(static_cast<std::size_t>(C));
  for (Eigen::Index j = 0; j < C; ++j) {
    const auto s = static_cast<std::size_t>(cand_event[static_cast<std::size_t>(j)]);
    scored[static_cast<std::size_t>(j)] =
        ScoredPair{g_->src[s], cand_v[static_cast<std::size_t>(j)], lean.s_hat()(j)};
  }
  const auto selected = select_topk_indices(scored, n_b);
  const auto n_sel = static_cast<std::int64_t>(selected.size());

  if (selector_dump_) {
    std::vector<std::uint8_t> is_sel(static_cast<std::size_t>(C), 0);
    for (auto idx : selected) is_sel[static_cast<std::size_t>(idx)] = 1;
    for (Eigen::Index j = 0; j < C; ++j) {
      nlohmann::json rec;
      rec["u"] = scored[static_cast<std::size_t>(j)].u;
      rec["v"] = scored[static_cast<std::size_t>(j)].v;
      rec["s_uv"] = lean.s_uv()(j);
      rec["s_hat"] = lean.s_hat()(j);
      rec["selected"] = static_cast<bool>(is_sel[static_cast<std::size_t>(j)]);
      *selector_dump_ << rec.dump() << '\n';
    }
  }

  // random negatives, n_sel of them, cycling the batch
  std::vector<NodeId> rand_v(static_cast<std::size_t>(n_sel));
  std::vector<EventIdx> rand_event(static_cast<std::size_t>(n_sel));
  for (std::int64_t j = 0; j < n_sel; ++j) {
    const EventIdx i = begin + (j % B);
    const auto s = static_cast<std::size_t>(i);
    rand_v[static_cast<std::size_t>(j)] =
        random_sampler(ctx_, g_->src[s], g_->t[s], 1, rng_rand_)[0];
    rand_event[static_cast<std::size_t>(j)] = i;
  }

  // gathered training views
  MatrixXd HuPos(d, B), HvPos(d, B);
  for (EventIdx i = begin; i < end; ++i) {
    const auto li = static_cast<Eigen::Index>(i - begin);
    HuPos.col(li) = fb.H.col(fb.col.at(g_->src[static_cast<std::size_t>(i)]));
    HvPos.col(li) = fb.H.col(fb.col.at(g_->dst[static_cast<std::size_t>(i)]));
  }
  MatrixXd HuRand(d, n_sel), HvRand = host_->embed_stored_batch(rand_v);
  for (std::int64_t j = 0; j < n_sel; ++j)
    HuRand.col(j) = fb.H.col(fb.col.at(
        g_->src[static_cast<std::size_t>(rand_event[static_cast<std::size_t>(j)])]));

  MatrixXd HuSel(d, n_sel), HvPosSel(d, n_sel), HvSel(d, n_sel);
  VectorXd tpos_s(n_sel), tni_s(n_sel), tls_s(n_sel);
  std::vector<NodeId> sel_v(static_cast<std::size_t>(n_sel));
  for (std::int64_t j = 0; j < n_sel; ++j) {
    const auto cj = static_cast<Eigen::Index>(selected[static_cast<std::size_t>(j)]);
    HuSel.col(j) = HuC.col(cj);
    HvPosSel.col(j) = HvPosC.col(cj);
    HvSel.col(j) = HvC.col(cj);
    tpos_s(j) = tpos(cj);
    tni_s(j) = tni(cj);
    tls_s(j) = tls(cj);
    sel_v[static_cast<std::size_t>(j)] = cand_v[static_cast<std::size_t>(cj)];
  }

  // decoder forward with caches
  MatrixXd Hc_pos, Hc_rand, Hc_sel;
  VectorXd lg_pos = host_->decoder().forward(*store_, HuPos, HvPos, &Hc_pos);
  VectorXd lg_rand = host_->decoder().forward(*store_, HuRand, HvRand, &Hc_rand);
  VectorXd lg_sel = host_->decoder().forward(*store_, HuSel, HvSel, &Hc_sel);
  VectorXd p_pos = (1.0 / (1.0 + (-lg_pos.array()).exp())).matrix();
  VectorXd p_rand = (1.0 / (1.0 + (-lg_rand.array()).exp())).matrix();
  VectorXd p_sel = (1.0 / (1.0 + (-lg_sel.array()).exp())).matrix();

  // selector graph over the selected pairs (contrastive loss pathway)
  SelectorPairGraph graph;
  graph.forward(*store_, *selector_, HuSel, HvPosSel, HvSel, tpos_s, tni_s, tls_s,
                state_.beta);

  // one-time lambda calibration on the first batch
  if (lambda_ < 0.0) {
    double l_pos0 = 0.0;
    for (Eigen::Index i = 0; i < p_pos.size(); ++i) l_pos0 += bce(p_pos(i), 1.0);
    l_pos0 /= static_cast<double>(B);
    const double l_con0 = n_sel > 0 ? std::abs(graph.l_con().mean()) : 0.0;
    lambda_ = clamp(l_pos0 / std::max(l_con0, 0.1), 0.01, 100.0);
  }

  const auto breakdown = composite_loss(
      std::span<const double>(p_pos.data(), static_cast<std::size_t>(p_pos.size())),
      std::span<const double>(p_rand.data(), static_cast<std::size_t>(p_rand.size())),
      std::span<const double>(p_sel.data(), static_cast<std::size_t>(p_sel.size())),
      std::span<const double>(graph.l_con().data(),
                              static_cast<std::size_t>(graph.l_con().size())),
      state_.delta, lambda_, tcfg_.mu_l2, store_->squared_norm());

  // backward
  store_->zero_grad();
  MatrixXd dHfresh = MatrixXd::Zero(d, fb.H.cols());
  auto base_grad_scatter = [&](const MatrixXd& dcols, const std::vector<NodeId>& ids) {
    auto base_grad = store_->grad(host_->base_block());
    for (Eigen::Index c = 0; c < dcols.cols(); ++c)
      base_grad.col(ids[static_cast<std::size_t>(c)]) += dcols.col(c);
  };

  VectorXd g_pos = (p_pos.array() - 1.0).matrix() / static_cast<double>(B);
  MatrixXd dHuPos = MatrixXd::Zero(d, B), dHvPos = MatrixXd::Zero(d, B);
  host_->decoder().backward(*store_, HuPos, HvPos, Hc_pos, g_pos, &dHuPos, &dHvPos);
  for (Eigen::Index c = 0; c < B; ++c) {
    const auto s = static_cast<std::size_t>(begin + c);
    dHfresh.col(fb.col.at(g_->src[s])) += dHuPos.col(c);
    dHfresh.col(fb.col.at(g_->dst[s])) += dHvPos.col(c);
  }

  if (n_sel > 0) {
    VectorXd g_rand = state_.delta * p_rand / static_cast<double>(n_sel);
    MatrixXd dHuRand = MatrixXd::Zero(d, n_sel), dHvRand = MatrixXd::Zero(d, n_sel);
    host_->decoder().backward(*store_, HuRand, HvRand, Hc_rand, g_rand, &dHuRand, &dHvRand);
    for (Eigen::Index c = 0; c < n_sel; ++c)
      dHfresh.col(fb.col.at(g_->src[static_cast<std::size_t>(
          rand_event[static_cast<std::size_t>(c)])])) += dHuRand.col(c);
    base_grad_scatter(dHvRand, rand_v);

    VectorXd g_sel = (1.0 - state_.delta) * p_sel / static_cast<double>(n_sel);
    MatrixXd dHuSel = MatrixXd::Zero(d, n_sel), dHvSel = MatrixXd::Zero(d, n_sel);
    host_->decoder().backward(*store_, HuSel, HvSel, Hc_sel, g_sel, &dHuSel, &dHvSel);
    base_grad_scatter(dHvSel, sel_v);

    const VectorXd dcon = VectorXd::Constant(n_sel, lambda_ / static_cast<double>(n_sel));
    MatrixXd dHvPosSel = MatrixXd::Zero(d, n_sel), dHvNegSel = MatrixXd::Zero(d, n_sel);
    graph.backward(*store_, *selector_, dcon, VectorXd(), &dHuSel, &dHvPosSel, &dHvNegSel);
    base_grad_scatter(dHvNegSel, sel_v);

    for (Eigen::Index c = 0; c < n_sel; ++c) {
      const auto cj = selected[static_cast<std::size_t>(c)];
      const auto s = static_cast<std::size_t>(cand_event[static_cast<std::size_t>(cj)]);
      dHfresh.col(fb.col.at(g_->src[s])) += dHuSel.col(c);
      dHfresh.col(fb.col.at(g_->dst[s])) += dHvPosSel.col(c);
    }
  }

  store_->add_l2_gradient(tcfg_.mu_l2);
  host_->backward_fresh(fb, dHfresh);
  store_->adam_step(tcfg_.learning_rate);

  // hard-cache refresh from this batch's fresh scores
  if (state_.cache_active) {
    Eigen::Index off = 0;
    for (std::size_t pi = 0; pi < pools.size(); ++pi) {
      const auto& pool = pools[pi];
      std::vector<double> fresh(static_cast<std::size_t>(pool.size()));
      for (std::int64_t c = 0; c < pool.size(); ++c)
        fresh[static_cast<std::size_t>(c)] = p_cand(off + c);
      hard_cache_[pool.source] =
          sample_hard_cache(pool, fresh, score_history_, state_.alpha, rng_pool_);
      off += pool.size();
    }
  }

  BatchOutcome out;
  out.loss = breakdown.total;
  out.n_b = n_sel;
  return out;
}

void Trainer::save_checkpoint(const std::string& path) const {
  write_checkpoint(path, *store_, state_, score_history_);
}

void Trainer::load_checkpoint(const std::string& path) {
  read_checkpoint(path, *store_, state_, score_history_);
}

void write_checkpoint(const std::string& path, const ParameterStore& store,
                      const CurriculumState& state, const ScoreHistory& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrainError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(&kCheckpointMagic), sizeof(kCheckpointMagic));
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof(kCheckpointVersion));
  store.serialize(out);
  out.write(reinterpret_cast<const char*>(&state.epoch), sizeof(state.epoch));
  out.write(reinterpret_cast<const char*>(&state.pi), sizeof(state.pi));
  out.write(reinterpret_cast<const char*>(&state.delta), sizeof(state.delta));
  out.write(reinterpret_cast<const char*>(&state.alpha), sizeof(state.alpha));
  out.write(reinterpret_cast<const char*>(&state.beta), sizeof(state.beta));
  const std::uint8_t cache = state.cache_active ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&cache), sizeof(cache));
  out.write(reinterpret_cast<const char*>(&state.best_metric), sizeof(state.best_metric));
  history.serialize(out);
}

void read_checkpoint(const std::string& path, ParameterStore& store,
                     CurriculumState& state, ScoreHistory& history) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainError("cannot open checkpoint '" + path + "'");
  std::uint32_t magic = 0, version = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (magic != kCheckpointMagic) throw TrainError("not a checkpoint file: " + path);
  if (version != kCheckpointVersion)
    throw TrainError("unsupported checkpoint version " + std::to_string(version));
  store.deserialize(in);
  in.read(reinterpret_cast<char*>(&state.epoch), sizeof(state.epoch));
  in.read(reinterpret_cast<char*>(&state.pi), sizeof(state.pi));
  in.read(reinterpret_cast<char*>(&state.delta), sizeof(state.delta));
  in.read(reinterpret_cast<char*>(&state.alpha), sizeof(state.alpha));
  in.read(reinterpret_cast<char*>(&state.beta), sizeof(state.beta));
  std::uint8_t cache = 0;
  in.read(reinterpret_cast<char*>(&cache), sizeof(cache));
  state.cache_active = cache != 0;
  in.read(reinterpret_cast<char*>(&state.best_metric), sizeof(state.best_metric));
  history = ScoreHistory::deserialize(in);
  if (!in) throw TrainError("truncated checkpoint: " + path);
}

}  // namespace curnm
