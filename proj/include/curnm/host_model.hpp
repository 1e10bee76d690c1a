#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "curnm/nn.hpp"
#include "curnm/types.hpp"

namespace curnm {

struct HostConfig {
  std::int64_t d = 64;         // memory & embedding dimension
  std::int64_t time_dim = 8;   // Time2Vec channels for the Δt message part

  void validate() const;
};

/// Compact temporal embedding model behind the host interface: a per-node
/// memory vector updated by a gated-recurrent cell on each interaction
/// (message = the two endpoint memories plus a Time2Vec encoding of Δt since
/// the node's last update), plus a static learned base embedding.
///
/// Memory values are detached state; gradients flow through one pending
/// message application per node (the usual truncation) plus the base
/// embedding and the decoder.
class TgnLite {
 public:
  TgnLite(const HostConfig& cfg, std::int64_t num_nodes, ParameterStore& store);

  /// Sets the timestamp origin/scale used for Δt normalization (train span).
  void set_time_origin(double t0, double span);
  void reset_state();

  /// Order-sensitive; calling again with an already-applied ordinal is a no-op.
  void observe(NodeId u, NodeId v, double t, EventIdx ordinal);

  /// Stored-state embedding: memory + base. Fast path for candidates.
  VectorXd embed_stored(NodeId n) const;
  /// Column-gathered stored embeddings.
  MatrixXd embed_stored_batch(std::span<const NodeId> nodes) const;

  /// Fresh embeddings apply the node's pending message through the cell
  /// in-graph, so the cell and time encoder receive gradients.
  struct FreshBatch {
    std::vector<NodeId> nodes;
    std::unordered_map<NodeId, Eigen::Index> col;
    MatrixXd H;  // d x N
    // backward bookkeeping for the pending subset
    std::vector<Eigen::Index> gru_cols;
    std::vector<double> gru_dt;  // scaled Δt per pending column
    GruCell::Cache cache;
  };
  FreshBatch embed_fresh(std::span<const NodeId> nodes) const;
  /// dH: d x N upstream gradient for a FreshBatch.
  void backward_fresh(const FreshBatch& fb, const MatrixXd& dH);

  double score(const VectorXd& h_u, const VectorXd& h_v) const;  // probability
  VectorXd score_batch(const MatrixXd& Hu, const MatrixXd& Hv) const;
  const PairScorer& decoder() const { return decoder_; }

  std::int64_t d() const { return cfg_.d; }
  std::int64_t num_nodes() const { return num_nodes_; }
  std::int64_t message_dim() const { return 2 * cfg_.d + cfg_.time_dim; }
  ParameterStore& store() { return *store_; }
  const ParameterStore& store() const { return *store_; }
  const Block& base_block() const { return base_; }
  double scale_dt(double dt) const { return dt / time_span_; }

 private:
  struct Pending {
    bool active = false;
    VectorXd other_memory;  // snapshot of the counterpart's memory
    double dt_scaled = 0.0;
  };

  VectorXd message_for(NodeId n, const Pending& p) const;
  void flush_pending(NodeId n);

  HostConfig cfg_;
  std::int64_t num_nodes_ = 0;
  ParameterStore* store_ = nullptr;
  Block base_;
  GruCell cell_;
  Time2Vec t2v_;
  PairScorer decoder_;

  MatrixXd memory_;  // d x num_nodes, detached values
  std::vector<Pending> pending_;
  std::vector<double> last_update_;
  EventIdx last_ordinal_ = -1;
  double time_origin_ = 0.0;
  double time_span_ = 1.0;
};

}  // namespace curnm
