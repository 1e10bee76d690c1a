#pragma once

#include <optional>
#include <vector>

#include "curnm/nn.hpp"
#include "curnm/types.hpp"

namespace curnm {

struct SelectorConfig {
  std::int64_t d = 64;  // embedding dimension (matches the host model)
  std::int64_t k = 8;   // Time2Vec channels

  // Ablation toggles: disentanglement off scores pairs by the raw MLP
  // difference (contrastive loss inert); temporal off fixes the Eq.-12
  // weighting factor at 1.
  bool ablate_disentangle = false;
  bool ablate_temporal = false;
};

/// Trainable pieces of the negative-selection head: positive/negative gates,
/// the shared pair-scoring MLP, and three Time2Vec encoders (positive time,
/// source-candidate interaction time, candidate last-seen time).
struct SelectorParams {
  SelectorConfig cfg;
  Block W_src, W_dst, b_p;
  Block W_p, W_n, b_n;
  PairScorer mlp;
  Time2Vec t2v_pos, t2v_interact, t2v_lastseen;

  static SelectorParams create(ParameterStore& store, const SelectorConfig& cfg);
};

/// relevant + irrelevant == embedding, element-wise, always.
struct FactorPair {
  VectorXd relevant;
  VectorXd irrelevant;
};

FactorPair positive_gate(const ParameterStore& store, const SelectorParams& p,
                         const VectorXd& h_u, const VectorXd& h_vpos);

/// Gate input is W_p * (relevant factor of v+) + W_n * h_vneg + b_n.
FactorPair negative_gate(const ParameterStore& store, const SelectorParams& p,
                         const VectorXd& h_vpos_relevant, const VectorXd& h_vneg);

/// Four-component contrastive objective for one (positive, negative) pair.
double contrastive_loss(const ParameterStore& store, const SelectorParams& p,
                        const VectorXd& h_u, const FactorPair& pos,
                        const FactorPair& neg);

/// s_uv = beta * s_rr - (1-beta) * s_irir.
double factor_score(const ParameterStore& store, const SelectorParams& p,
                    const VectorXd& h_u, const FactorPair& pos, const FactorPair& neg,
                    double beta);

/// s_hat = mean_k(T2V(t_pos) ⊙ T2V(t_interact) ⊙ T2V(t_lastseen)) * s_uv;
/// missing timestamps enter the encoders as 0.
double temporal_score(const ParameterStore& store, const SelectorParams& p, double s_uv,
                      double t_pos, std::optional<double> t_neg_interaction,
                      std::optional<double> t_neg_lastseen);

struct ScoredPair {
  NodeId u = 0;
  NodeId v = 0;
  double score = 0.0;
};

/// Minibatch-level top-n_b pick; ties broken by (score desc, u asc, v asc).
std::vector<ScoredPair> select_topk(std::vector<ScoredPair> scores, std::int64_t n_b);
/// Index form used by the trainer: returns positions into `scores`, same order
/// rule, with the input position as the final tie-break.
std::vector<std::int64_t> select_topk_indices(const std::vector<ScoredPair>& scores,
                                              std::int64_t n_b);

/// Cached forward/backward over a set of (positive, candidate) pairs, one pair
/// per column. Produces the per-pair contrastive loss, the factor-balanced
/// score (Eq. 11 shape) and the temporally weighted score used for selection.
class SelectorPairGraph {
 public:
  /// U, Vpos, Vneg: d x P column batches; t_*: P timestamps (already
  /// normalized; missing values encoded as 0).
  void forward(const ParameterStore& store, const SelectorParams& p, MatrixXd U,
               MatrixXd Vpos, MatrixXd Vneg, VectorXd t_pos, VectorXd t_ni,
               VectorXd t_ls, double beta);

  const VectorXd& l_con() const { return l_con_; }
  const VectorXd& s_uv() const { return s_uv_; }
  const VectorXd& s_hat() const { return s_hat_; }
  std::int64_t pairs() const { return static_cast<std::int64_t>(s_uv_.size()); }

  /// dcon/dshat: upstream gradients per pair (pass an empty vector to skip a
  /// path). Accumulates parameter grads into the store; adds input grads into
  /// the optional matrices.
  void backward(ParameterStore& store, const SelectorParams& p, const VectorXd& dcon,
                const VectorXd& dshat, MatrixXd* dU, MatrixXd* dVpos, MatrixXd* dVneg);

 private:
  SelectorConfig cfg_;
  double beta_ = 0.0;
  MatrixXd U_, P_, N_;
  VectorXd tpos_, tni_, tls_;
  MatrixXd Gp_, Rp_, Qp_;       // positive gate, factors
  MatrixXd Gn_, Rn_, Qn_;       // negative gate, factors
  MatrixXd Hrp_, Hip_, Hrn_, Hin_;  // MLP hidden caches per stream
  VectorXd m_rp_, m_ip_, m_rn_, m_in_;
  MatrixXd T1_, T2_, T3_;       // Time2Vec values, k x P
  VectorXd phi_;                // temporal weighting factor per pair
  VectorXd l_con_, s_uv_, s_hat_;
};

}  // namespace curnm
