#include "curnm/host_model.hpp"

#include <algorithm>
#include <cmath>

namespace curnm {

void HostConfig::validate() const {
  std::string err;
  if (d < 1) err += "  d must be >= 1\n";
  if (time_dim < 1) err += "  time_dim must be >= 1\n";
  if (!err.empty()) throw ValidationError("invalid host config:\n" + err);
}

TgnLite::TgnLite(const HostConfig& cfg, std::int64_t num_nodes, ParameterStore& store)
    : cfg_(cfg), num_nodes_(num_nodes), store_(&store) {
  cfg.validate();
  base_ = store.add("host.base", cfg.d, num_nodes, InitSpec::normal(0.1));
  cell_ = GruCell::create(store, "host.gru", cfg.d, message_dim());
  t2v_ = Time2Vec::create(store, "host.t2v", cfg.time_dim);
  decoder_ = PairScorer::create(store, "host.dec", cfg.d);
  memory_ = MatrixXd::Zero(cfg.d, num_nodes);
  pending_.resize(static_cast<std::size_t>(num_nodes));
  last_update_.assign(static_cast<std::size_t>(num_nodes), 0.0);
}

void TgnLite::set_time_origin(double t0, double span) {
  time_origin_ = t0;
  time_span_ = span > 0.0 ? span : 1.0;
  reset_state();
}

void TgnLite::reset_state() {
  memory_.setZero();
  for (auto& p : pending_) p = Pending{};
  std::fill(last_update_.begin(), last_update_.end(), time_origin_);
  last_ordinal_ = -1;
}

VectorXd TgnLite::message_for(NodeId n, const Pending& p) const {
  VectorXd m(message_dim());
  m.head(cfg_.d) = memory_.col(n);
  m.segment(cfg_.d, cfg_.d) = p.other_memory;
  m.tail(cfg_.time_dim) = t2v_.forward(*store_, p.dt_scaled);
  return m;
}

void TgnLite::flush_pending(NodeId n) {
  Pending& p = pending_[static_cast<std::size_t>(n)];
  if (!p.active) return;
  const MatrixXd S = memory_.col(n);
  const MatrixXd M = message_for(n, p);
  memory_.col(n) = cell_.forward(*store_, S, M);
  p.active = false;
}

void TgnLite::observe(NodeId u, NodeId v, double t, EventIdx ordinal) {
  if (ordinal >= 0 && ordinal <= last_ordinal_) return;  // idempotent per event
  flush_pending(u);
  flush_pending(v);
  Pending& pu = pending_[static_cast<std::size_t>(u)];
  pu.active = true;
  pu.other_memory = memory_.col(v);
  pu.dt_scaled = scale_dt(t - last_update_[static_cast<std::size_t>(u)]);
  Pending& pv = pending_[static_cast<std::size_t>(v)];
  pv.active = true;
  pv.other_memory = memory_.col(u);
  pv.dt_scaled = scale_dt(t - last_update_[static_cast<std::size_t>(v)]);
  last_update_[static_cast<std::size_t>(u)] = t;
  last_update_[static_cast<std::size_t>(v)] = t;
  if (ordinal >= 0) last_ordinal_ = ordinal;
}

VectorXd TgnLite::embed_stored(NodeId n) const {
  return memory_.col(n) + store_->mat(base_).col(n);
}

MatrixXd TgnLite::embed_stored_batch(std::span<const NodeId> nodes) const {
  MatrixXd out(cfg_.d, static_cast<Eigen::Index>(nodes.size()));
  const auto base = store_->mat(base_);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = memory_.col(nodes[i]) + base.col(nodes[i]);
  return out;
}

TgnLite::FreshBatch TgnLite::embed_fresh(std::span<const NodeId> nodes) const {
  FreshBatch fb;
  for (NodeId n : nodes) {
    if (fb.col.count(n)) continue;
    fb.col.emplace(n, static_cast<Eigen::Index>(fb.nodes.size()));
    fb.nodes.push_back(n);
  }
  const auto N = static_cast<Eigen::Index>(fb.nodes.size());
  fb.H.resize(cfg_.d, N);
  const auto base = store_->mat(base_);

  // pending subset goes through the cell as one batch
  std::vector<Eigen::Index> plain_cols;
  for (Eigen::Index c = 0; c < N; ++c) {
    const NodeId n = fb.nodes[static_cast<std::size_t>(c)];
    if (pending_[static_cast<std::size_t>(n)].active)
      fb.gru_cols.push_back(c);
    else
      plain_cols.push_back(c);
  }
  if (!fb.gru_cols.empty()) {
    const auto G = static_cast<Eigen::Index>(fb.gru_cols.size());
    MatrixXd S(cfg_.d, G), M(message_dim(), G);
    for (Eigen::Index j = 0; j < G; ++j) {
      const NodeId n = fb.nodes[static_cast<std::size_t>(fb.gru_cols[static_cast<std::size_t>(j)])];
      const Pending& p = pending_[static_cast<std::size_t>(n)];
      S.col(j) = memory_.col(n);
      M.col(j) = message_for(n, p);
      fb.gru_dt.push_back(p.dt_scaled);
    }
    const MatrixXd Snew = cell_.forward(*store_, S, M, &fb.cache);
    for (Eigen::Index j = 0; j < G; ++j) {
      const Eigen::Index c = fb.gru_cols[static_cast<std::size_t>(j)];
      fb.H.col(c) = Snew.col(j) + base.col(fb.nodes[static_cast<std::size_t>(c)]);
    }
  }
  for (Eigen::Index c : plain_cols) {
    const NodeId n = fb.nodes[static_cast<std::size_t>(c)];
    fb.H.col(c) = memory_.col(n) + base.col(n);
  }
  return fb;
}

void TgnLite::backward_fresh(const FreshBatch& fb, const MatrixXd& dH) {
  auto base_grad = store_->grad(base_);
  for (Eigen::Index c = 0; c < dH.cols(); ++c)
    base_grad.col(fb.nodes[static_cast<std::size_t>(c)]) += dH.col(c);

  if (fb.gru_cols.empty()) return;
  const auto G = static_cast<Eigen::Index>(fb.gru_cols.size());
  MatrixXd dSnew(cfg_.d, G);
  for (Eigen::Index j = 0; j < G; ++j)
    dSnew.col(j) = dH.col(fb.gru_cols[static_cast<std::size_t>(j)]);
  MatrixXd dM = MatrixXd::Zero(message_dim(), G);
  cell_.backward(*store_, fb.cache, dSnew, &dM, nullptr);
  for (Eigen::Index j = 0; j < G; ++j)
    t2v_.backward(*store_, fb.gru_dt[static_cast<std::size_t>(j)],
                  dM.col(j).tail(cfg_.time_dim));
}

double TgnLite::score(const VectorXd& h_u, const VectorXd& h_v) const {
  return sigmoid(decoder_.forward1(*store_, h_u, h_v));
}

VectorXd TgnLite::score_batch(const MatrixXd& Hu, const MatrixXd& Hv) const {
  VectorXd logits = decoder_.forward(*store_, Hu, Hv);
  return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
}

}  // namespace curnm
