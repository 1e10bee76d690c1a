#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "curnm/types.hpp"

namespace curnm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Block {
  std::int64_t offset = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::string name;
  std::int64_t size() const { return rows * cols; }
};

struct InitSpec {
  enum class Kind { zeros, constant, uniform, normal, xavier };
  Kind kind = Kind::zeros;
  double a = 0.0;  // constant value, uniform half-width, normal std; unused for xavier

  static InitSpec zeros() { return {Kind::zeros, 0.0}; }
  static InitSpec constant(double v) { return {Kind::constant, v}; }
  static InitSpec uniform(double half_width) { return {Kind::uniform, half_width}; }
  static InitSpec normal(double std) { return {Kind::normal, std}; }
  static InitSpec xavier() { return {Kind::xavier, 0.0}; }
};

/// Flat parameter/gradient storage with named blocks and an Adam update.
/// Every trainable parameter of a run lives in one store, so the L2 term and
/// the optimizer touch each parameter exactly once.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : seed_(seed) {}

  Block add(const std::string& name, std::int64_t rows, std::int64_t cols,
            const InitSpec& init);

  Eigen::Map<MatrixXd> mat(const Block& b) {
    return {values_.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<const MatrixXd> mat(const Block& b) const {
    return {values_.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<MatrixXd> grad(const Block& b) {
    return {grads_.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<VectorXd> vec(const Block& b) {
    return {values_.data() + b.offset, b.size()};
  }
  Eigen::Map<const VectorXd> vec(const Block& b) const {
    return {values_.data() + b.offset, b.size()};
  }
  Eigen::Map<VectorXd> grad_vec(const Block& b) {
    return {grads_.data() + b.offset, b.size()};
  }

  void zero_grad();
  double squared_norm() const;
  /// grads += 2*mu*theta (the L2 term of the loss, differentiated)
  void add_l2_gradient(double mu);
  void adam_step(double lr);

  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
  std::vector<double>& raw() { return values_; }
  const std::vector<double>& raw() const { return values_; }
  std::vector<double>& raw_grad() { return grads_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block* find(const std::string& name) const;

  /// Deterministic per-block generator (seed mixed with the block name).
  std::mt19937_64 block_rng(const std::string& name) const;

  void serialize(std::ostream& out) const;
  void deserialize(std::istream& in);  // shapes must match the registered blocks

 private:
  std::uint64_t seed_ = 0;
  std::vector<double> values_, grads_, adam_m_, adam_v_;
  std::int64_t adam_t_ = 0;
  std::vector<Block> blocks_;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Time2Vec: channel 0 linear (w0*t + phi0), channels 1..k-1 sin(wi*t + phii).
/// Fresh encoders evaluate to all-ones at t = 0.
struct Time2Vec {
  Block w, phi;
  std::int64_t k = 0;

  static Time2Vec create(ParameterStore& store, const std::string& prefix, std::int64_t k);
  VectorXd forward(const ParameterStore& store, double t) const;
  /// Accumulates dL/dw, dL/dphi for upstream gradient g at input t.
  void backward(ParameterStore& store, double t, const VectorXd& g) const;
};

/// Pairwise scorer MLP(x, y): concat -> hidden d (tanh) -> scalar, pre-sigmoid.
struct PairScorer {
  Block W1x, W1y, b1, w2, b2;
  std::int64_t d = 0;

  static PairScorer create(ParameterStore& store, const std::string& prefix, std::int64_t d);

  /// X, Y are d x N column batches; returns raw scores (N). Pass `hidden` to
  /// keep the tanh activations for backward.
  VectorXd forward(const ParameterStore& store, const MatrixXd& X, const MatrixXd& Y,
                   MatrixXd* hidden = nullptr) const;
  double forward1(const ParameterStore& store, const VectorXd& x, const VectorXd& y) const;
  /// gscore = dL/dscore per column; accumulates parameter grads and, when
  /// given, input grads into dX/dY.
  void backward(ParameterStore& store, const MatrixXd& X, const MatrixXd& Y,
                const MatrixXd& hidden, const VectorXd& gscore, MatrixXd* dX,
                MatrixXd* dY) const;
};

/// Gated-recurrent memory update. State d, message dm.
struct GruCell {
  Block Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;
  std::int64_t d = 0, dm = 0;

  static GruCell create(ParameterStore& store, const std::string& prefix,
                        std::int64_t d, std::int64_t dm);

  struct Cache {
    MatrixXd S, M, Z, R, RS, Ht;
  };

  /// S: d x N states, M: dm x N messages -> new states d x N.
  MatrixXd forward(const ParameterStore& store, const MatrixXd& S, const MatrixXd& M,
                   Cache* cache = nullptr) const;
  /// Accumulates parameter grads; optional input grads into dM (dm x N) and
  /// dS (d x N).
  void backward(ParameterStore& store, const Cache& cache, const MatrixXd& dSnew,
                MatrixXd* dM, MatrixXd* dS) const;
};

double bce(double p, double y);
/// d(BCE(sigmoid(z), y))/dz = sigmoid(z) - y
inline double bce_logit_grad(double p, double y) { return p - y; }

}  // namespace curnm
