#include "curnm/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace curnm {

namespace {

MatrixXd sigmoid_mat(MatrixXd x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

}  // namespace

SelectorParams SelectorParams::create(ParameterStore& store, const SelectorConfig& cfg) {
  SelectorParams p;
  p.cfg = cfg;
  const auto d = cfg.d;
  p.W_src = store.add("sel.gate_pos.W_src", d, d, InitSpec::xavier());
  p.W_dst = store.add("sel.gate_pos.W_dst", d, d, InitSpec::xavier());
  p.b_p = store.add("sel.gate_pos.b", d, 1, InitSpec::zeros());
  p.W_p = store.add("sel.gate_neg.W_p", d, d, InitSpec::xavier());
  p.W_n = store.add("sel.gate_neg.W_n", d, d, InitSpec::xavier());
  p.b_n = store.add("sel.gate_neg.b", d, 1, InitSpec::zeros());
  p.mlp = PairScorer::create(store, "sel.mlp", d);
  p.t2v_pos = Time2Vec::create(store, "sel.t2v_pos", cfg.k);
  p.t2v_interact = Time2Vec::create(store, "sel.t2v_interact", cfg.k);
  p.t2v_lastseen = Time2Vec::create(store, "sel.t2v_lastseen", cfg.k);
  return p;
}

FactorPair positive_gate(const ParameterStore& store, const SelectorParams& p,
                         const VectorXd& h_u, const VectorXd& h_vpos) {
  if (!h_u.allFinite() || !h_vpos.allFinite())
    throw ValidationError("positive_gate received non-finite embeddings");
  const VectorXd a = store.mat(p.W_src) * h_u + store.mat(p.W_dst) * h_vpos +
                     store.vec(p.b_p);
  const VectorXd g = (1.0 / (1.0 + (-a.array()).exp())).matrix();
  FactorPair f;
  f.relevant = (h_vpos.array() * g.array()).matrix();
  f.irrelevant = h_vpos - f.relevant;
  return f;
}

FactorPair negative_gate(const ParameterStore& store, const SelectorParams& p,
                         const VectorXd& h_vpos_relevant, const VectorXd& h_vneg) {
  if (!h_vpos_relevant.allFinite() || !h_vneg.allFinite())
    throw ValidationError("negative_gate received non-finite embeddings");
  const VectorXd c = store.mat(p.W_p) * h_vpos_relevant + store.mat(p.W_n) * h_vneg +
                     store.vec(p.b_n);
  const VectorXd g = (1.0 / (1.0 + (-c.array()).exp())).matrix();
  FactorPair f;
  f.relevant = (h_vneg.array() * g.array()).matrix();
  f.irrelevant = h_vneg - f.relevant;
  return f;
}

double contrastive_loss(const ParameterStore& store, const SelectorParams& p,
                        const VectorXd& h_u, const FactorPair& pos,
                        const FactorPair& neg) {
  const double m_rp = p.mlp.forward1(store, h_u, pos.relevant);
  const double m_ip = p.mlp.forward1(store, h_u, pos.irrelevant);
  const double m_rn = p.mlp.forward1(store, h_u, neg.relevant);
  const double m_in = p.mlp.forward1(store, h_u, neg.irrelevant);
  const double s_r_ir_pp = m_rp - m_ip;
  const double s_r_r_pn = m_rp - m_rn;
  const double s_ir_r_nn = m_in - m_rn;
  const double s_ir_ir_np = m_in - m_ip;
  return -(s_r_ir_pp + s_r_r_pn + s_ir_r_nn + s_ir_ir_np);
}

double factor_score(const ParameterStore& store, const SelectorParams& p,
                    const VectorXd& h_u, const FactorPair& pos, const FactorPair& neg,
                    double beta) {
  const double s_rr = p.mlp.forward1(store, h_u, pos.relevant) -
                      p.mlp.forward1(store, h_u, neg.relevant);
  const double s_irir = p.mlp.forward1(store, h_u, pos.irrelevant) -
                        p.mlp.forward1(store, h_u, neg.irrelevant);
  return beta * s_rr - (1.0 - beta) * s_irir;
}

double temporal_score(const ParameterStore& store, const SelectorParams& p, double s_uv,
                      double t_pos, std::optional<double> t_neg_interaction,
                      std::optional<double> t_neg_lastseen) {
  if (p.cfg.ablate_temporal) return s_uv;
  const VectorXd a = p.t2v_pos.forward(store, t_pos);
  const VectorXd b = p.t2v_interact.forward(store, t_neg_interaction.value_or(0.0));
  const VectorXd c = p.t2v_lastseen.forward(store, t_neg_lastseen.value_or(0.0));
  const double factor = (a.array() * b.array() * c.array()).mean();
  return factor * s_uv;
}

std::vector<ScoredPair> select_topk(std::vector<ScoredPair> scores, std::int64_t n_b) {
  auto cmp = [](const ScoredPair& a, const ScoredPair& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.u != b.u) return a.u < b.u;
    return a.v < b.v;
  };
  std::sort(scores.begin(), scores.end(), cmp);
  if (n_b < static_cast<std::int64_t>(scores.size()))
    scores.resize(static_cast<std::size_t>(std::max<std::int64_t>(n_b, 0)));
  return scores;
}

std::vector<std::int64_t> select_topk_indices(const std::vector<ScoredPair>& scores,
                                              std::int64_t n_b) {
  std::vector<std::int64_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  auto cmp = [&](std::int64_t ia, std::int64_t ib) {
    const auto& a = scores[static_cast<std::size_t>(ia)];
    const auto& b = scores[static_cast<std::size_t>(ib)];
    if (a.score != b.score) return a.score > b.score;
    if (a.u != b.u) return a.u < b.u;
    if (a.v != b.v) return a.v < b.v;
    return ia < ib;
  };
  const auto k = std::min<std::int64_t>(n_b, static_cast<std::int64_t>(order.size()));
  std::partial_sort(order.begin(), order.begin() + k, order.end(), cmp);
  order.resize(static_cast<std::size_t>(std::max<std::int64_t>(k, 0)));
  return order;
}

void SelectorPairGraph::forward(const ParameterStore& store, const SelectorParams& p,
                                MatrixXd U, MatrixXd Vpos, MatrixXd Vneg, VectorXd t_pos,
                                VectorXd t_ni, VectorXd t_ls, double beta) {
  cfg_ = p.cfg;
  beta_ = beta;
  U_ = std::move(U);
  P_ = std::move(Vpos);
  N_ = std::move(Vneg);
  tpos_ = std::move(t_pos);
  tni_ = std::move(t_ni);
  tls_ = std::move(t_ls);
  const auto n_pairs = U_.cols();

  if (cfg_.ablate_disentangle) {
    m_rp_ = p.mlp.forward(store, U_, P_, &Hrp_);
    m_rn_ = p.mlp.forward(store, U_, N_, &Hrn_);
    s_uv_ = m_rp_ - m_rn_;
    l_con_ = VectorXd::Zero(n_pairs);
  } else {
    Gp_ = sigmoid_mat((store.mat(p.W_src) * U_ + store.mat(p.W_dst) * P_).colwise() +
                      store.vec(p.b_p));
    Rp_ = (P_.array() * Gp_.array()).matrix();
    Qp_ = P_ - Rp_;
    Gn_ = sigmoid_mat((store.mat(p.W_p) * Rp_ + store.mat(p.W_n) * N_).colwise() +
                      store.vec(p.b_n));
    Rn_ = (N_.array() * Gn_.array()).matrix();
    Qn_ = N_ - Rn_;

    m_rp_ = p.mlp.forward(store, U_, Rp_, &Hrp_);
    m_ip_ = p.mlp.forward(store, U_, Qp_, &Hip_);
    m_rn_ = p.mlp.forward(store, U_, Rn_, &Hrn_);
    m_in_ = p.mlp.forward(store, U_, Qn_, &Hin_);

    // -(s_{r,ir}^{+,+} + s_{r,r}^{+,-} + s_{ir,r}^{-,-} + s_{ir,ir}^{-,+})
    l_con_ = -((m_rp_ - m_ip_) + (m_rp_ - m_rn_) + (m_in_ - m_rn_) + (m_in_ - m_ip_));
    s_uv_ = beta * (m_rp_ - m_rn_) - (1.0 - beta) * (m_ip_ - m_in_);
  }

  if (cfg_.ablate_temporal) {
    phi_ = VectorXd::Ones(n_pairs);
  } else {
    const auto k = cfg_.k;
    T1_.resize(k, n_pairs);
    T2_.resize(k, n_pairs);
    T3_.resize(k, n_pairs);
    for (Eigen::Index j = 0; j < n_pairs; ++j) {
      T1_.col(j) = p.t2v_pos.forward(store, tpos_(j));
      T2_.col(j) = p.t2v_interact.forward(store, tni_(j));
      T3_.col(j) = p.t2v_lastseen.forward(store, tls_(j));
    }
    phi_ = (T1_.array() * T2_.array() * T3_.array()).colwise().mean().matrix().transpose();
  }
  s_hat_ = (phi_.array() * s_uv_.array()).matrix();
}

void SelectorPairGraph::backward(ParameterStore& store, const SelectorParams& p,
                                 const VectorXd& dcon, const VectorXd& dshat,
                                 MatrixXd* dU, MatrixXd* dVpos, MatrixXd* dVneg) {
  const auto n_pairs = U_.cols();
  const VectorXd zero = VectorXd::Zero(n_pairs);
  const VectorXd& gc = dcon.size() ? dcon : zero;
  const VectorXd& gs = dshat.size() ? dshat : zero;

  // s_hat = phi * s_uv
  VectorXd ds_uv = (gs.array() * phi_.array()).matrix();
  if (!cfg_.ablate_temporal && gs.size()) {
    const VectorXd dphi = (gs.array() * s_uv_.array()).matrix();
    const double inv_k = 1.0 / static_cast<double>(cfg_.k);
    for (Eigen::Index j = 0; j < n_pairs; ++j) {
      if (dphi(j) == 0.0) continue;
      const VectorXd g1 = dphi(j) * inv_k * (T2_.col(j).array() * T3_.col(j).array()).matrix();
      const VectorXd g2 = dphi(j) * inv_k * (T1_.col(j).array() * T3_.col(j).array()).matrix();
      const VectorXd g3 = dphi(j) * inv_k * (T1_.col(j).array() * T2_.col(j).array()).matrix();
      p.t2v_pos.backward(store, tpos_(j), g1);
      p.t2v_interact.backward(store, tni_(j), g2);
      p.t2v_lastseen.backward(store, tls_(j), g3);
    }
  }

  if (cfg_.ablate_disentangle) {
    // s_uv = m(u,p) - m(u,n); contrastive path inert
    MatrixXd dP = MatrixXd::Zero(P_.rows(), n_pairs);
    MatrixXd dN = MatrixXd::Zero(N_.rows(), n_pairs);
    MatrixXd dUacc = MatrixXd::Zero(U_.rows(), n_pairs);
    p.mlp.backward(store, U_, P_, Hrp_, ds_uv, &dUacc, &dP);
    p.mlp.backward(store, U_, N_, Hrn_, -ds_uv, &dUacc, &dN);
    if (dU) *dU += dUacc;
    if (dVpos) *dVpos += dP;
    if (dVneg) *dVneg += dN;
    return;
  }

  // l_con = -2*(m_rp - m_ip - m_rn + m_in); s_uv = beta*(m_rp - m_rn)
  //         - (1-beta)*(m_ip - m_in)
  VectorXd gm_rp = -2.0 * gc + beta_ * ds_uv;
  VectorXd gm_ip = 2.0 * gc - (1.0 - beta_) * ds_uv;
  VectorXd gm_rn = 2.0 * gc - beta_ * ds_uv;
  VectorXd gm_in = -2.0 * gc + (1.0 - beta_) * ds_uv;

  MatrixXd dUacc = MatrixXd::Zero(U_.rows(), n_pairs);
  MatrixXd dRp = MatrixXd::Zero(P_.rows(), n_pairs);
  MatrixXd dQp = MatrixXd::Zero(P_.rows(), n_pairs);
  MatrixXd dRn = MatrixXd::Zero(N_.rows(), n_pairs);
  MatrixXd dQn = MatrixXd::Zero(N_.rows(), n_pairs);
  p.mlp.backward(store, U_, Rp_, Hrp_, gm_rp, &dUacc, &dRp);
  p.mlp.backward(store, U_, Qp_, Hip_, gm_ip, &dUacc, &dQp);
  p.mlp.backward(store, U_, Rn_, Hrn_, gm_rn, &dUacc, &dRn);
  p.mlp.backward(store, U_, Qn_, Hin_, gm_in, &dUacc, &dQn);

  // q_n = n - r_n
  MatrixXd dN = dQn;
  dRn -= dQn;
  // negative gate: r_n = n ⊙ σ(c), c = W_p r_p + W_n n + b_n
  dN += (dRn.array() * Gn_.array()).matrix();
  MatrixXd dC =
      (dRn.array() * N_.array() * Gn_.array() * (1.0 - Gn_.array())).matrix();
  store.grad(p.W_p) += dC * Rp_.transpose();
  store.grad(p.W_n) += dC * N_.transpose();
  store.grad_vec(p.b_n) += dC.rowwise().sum();
  dRp += store.mat(p.W_p).transpose() * dC;
  dN += store.mat(p.W_n).transpose() * dC;

  // q_p = p - r_p
  MatrixXd dP = dQp;
  dRp -= dQp;
  // positive gate: r_p = p ⊙ σ(a), a = W_src u + W_dst p + b_p
  dP += (dRp.array() * Gp_.array()).matrix();
  MatrixXd dA =
      (dRp.array() * P_.array() * Gp_.array() * (1.0 - Gp_.array())).matrix();
  store.grad(p.W_src) += dA * U_.transpose();
  store.grad(p.W_dst) += dA * P_.transpose();
  store.grad_vec(p.b_p) += dA.rowwise().sum();
  dUacc += store.mat(p.W_src).transpose() * dA;
  dP += store.mat(p.W_dst).transpose() * dA;

  if (dU) *dU += dUacc;
  if (dVpos) *dVpos += dP;
  if (dVneg) *dVneg += dN;
}

}  // namespace curnm
