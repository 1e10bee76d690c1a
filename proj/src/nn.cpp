#include "curnm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

namespace curnm {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

Block ParameterStore::add(const std::string& name, std::int64_t rows, std::int64_t cols,
                          const InitSpec& init) {
  for (const auto& b : blocks_)
    if (b.name == name) throw ValidationError("duplicate parameter block '" + name + "'");
  Block b;
  b.name = name;
  b.rows = rows;
  b.cols = cols;
  b.offset = static_cast<std::int64_t>(values_.size());
  values_.resize(values_.size() + static_cast<std::size_t>(b.size()));
  grads_.resize(values_.size(), 0.0);
  adam_m_.resize(values_.size(), 0.0);
  adam_v_.resize(values_.size(), 0.0);

  auto rng = block_rng(name);
  double* p = values_.data() + b.offset;
  switch (init.kind) {
    case InitSpec::Kind::zeros:
      std::fill(p, p + b.size(), 0.0);
      break;
    case InitSpec::Kind::constant:
      std::fill(p, p + b.size(), init.a);
      break;
    case InitSpec::Kind::uniform: {
      std::uniform_real_distribution<double> d(-init.a, init.a);
      for (std::int64_t i = 0; i < b.size(); ++i) p[i] = d(rng);
      break;
    }
    case InitSpec::Kind::normal: {
      std::normal_distribution<double> d(0.0, init.a);
      for (std::int64_t i = 0; i < b.size(); ++i) p[i] = d(rng);
      break;
    }
    case InitSpec::Kind::xavier: {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      std::uniform_real_distribution<double> d(-a, a);
      for (std::int64_t i = 0; i < b.size(); ++i) p[i] = d(rng);
      break;
    }
  }
  blocks_.push_back(b);
  return b;
}

void ParameterStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

double ParameterStore::squared_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s;
}

void ParameterStore::add_l2_gradient(double mu) {
  if (mu == 0.0) return;
  for (std::size_t i = 0; i < values_.size(); ++i) grads_[i] += 2.0 * mu * values_[i];
}

void ParameterStore::adam_step(double lr) {
  ++adam_t_;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_t_));
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double g = grads_[i];
    adam_m_[i] = kAdamBeta1 * adam_m_[i] + (1.0 - kAdamBeta1) * g;
    adam_v_[i] = kAdamBeta2 * adam_v_[i] + (1.0 - kAdamBeta2) * g * g;
    const double mhat = adam_m_[i] / c1;
    const double vhat = adam_v_[i] / c2;
    values_[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

const Block* ParameterStore::find(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return &b;
  return nullptr;
}

std::mt19937_64 ParameterStore::block_rng(const std::string& name) const {
  return std::mt19937_64(seed_ ^ fnv1a(name));
}

void ParameterStore::serialize(std::ostream& out) const {
  const std::uint64_t n_blocks = blocks_.size();
  out.write(reinterpret_cast<const char*>(&n_blocks), sizeof(n_blocks));
  for (const auto& b : blocks_) {
    const std::uint32_t len = static_cast<std::uint32_t>(b.name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(b.name.data(), len);
    out.write(reinterpret_cast<const char*>(&b.rows), sizeof(b.rows));
    out.write(reinterpret_cast<const char*>(&b.cols), sizeof(b.cols));
    out.write(reinterpret_cast<const char*>(values_.data() + b.offset),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(b.size())));
  }
}

void ParameterStore::deserialize(std::istream& in) {
  std::uint64_t n_blocks = 0;
  in.read(reinterpret_cast<char*>(&n_blocks), sizeof(n_blocks));
  if (n_blocks != blocks_.size())
    throw ValidationError("checkpoint block count mismatch");
  for (const auto& b : blocks_) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (name != b.name || rows != b.rows || cols != b.cols)
      throw ValidationError("checkpoint block '" + name + "' does not match '" + b.name + "'");
    in.read(reinterpret_cast<char*>(values_.data() + b.offset),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(b.size())));
  }
  if (!in) throw ValidationError("truncated parameter checkpoint");
}

Time2Vec Time2Vec::create(ParameterStore& store, const std::string& prefix, std::int64_t k) {
  Time2Vec t;
  t.k = k;
  t.w = store.add(prefix + ".w", k, 1, InitSpec::normal(1.0));
  t.phi = store.add(prefix + ".phi", k, 1, InitSpec::zeros());
  auto phi = store.vec(t.phi);
  phi(0) = 1.0;
  for (std::int64_t i = 1; i < k; ++i) phi(i) = std::numbers::pi / 2.0;
  return t;
}

VectorXd Time2Vec::forward(const ParameterStore& store, double t) const {
  const auto w = store.vec(this->w);
  const auto phi = store.vec(this->phi);
  VectorXd out(k);
  out(0) = w(0) * t + phi(0);
  for (std::int64_t i = 1; i < k; ++i) out(i) = std::sin(w(i) * t + phi(i));
  return out;
}

void Time2Vec::backward(ParameterStore& store, double t, const VectorXd& g) const {
  const auto w = store.vec(this->w);
  const auto phi = store.vec(this->phi);
  auto gw = store.grad_vec(this->w);
  auto gphi = store.grad_vec(this->phi);
  gw(0) += g(0) * t;
  gphi(0) += g(0);
  for (std::int64_t i = 1; i < k; ++i) {
    const double c = std::cos(w(i) * t + phi(i));
    gw(i) += g(i) * c * t;
    gphi(i) += g(i) * c;
  }
}

PairScorer PairScorer::create(ParameterStore& store, const std::string& prefix,
                              std::int64_t d) {
  PairScorer s;
  s.d = d;
  s.W1x = store.add(prefix + ".W1x", d, d, InitSpec::xavier());
  s.W1y = store.add(prefix + ".W1y", d, d, InitSpec::xavier());
  s.b1 = store.add(prefix + ".b1", d, 1, InitSpec::zeros());
  s.w2 = store.add(prefix + ".w2", d, 1, InitSpec::xavier());
  s.b2 = store.add(prefix + ".b2", 1, 1, InitSpec::zeros());
  return s;
}

VectorXd PairScorer::forward(const ParameterStore& store, const MatrixXd& X,
                             const MatrixXd& Y, MatrixXd* hidden) const {
  const auto W1x = store.mat(this->W1x);
  const auto W1y = store.mat(this->W1y);
  const auto b1 = store.vec(this->b1);
  const auto w2 = store.vec(this->w2);
  const double b2 = store.vec(this->b2)(0);
  MatrixXd H = ((W1x * X + W1y * Y).colwise() + b1).array().tanh().matrix();
  VectorXd out = ((H.transpose() * w2).array() + b2).matrix();
  if (hidden) *hidden = std::move(H);
  return out;
}

double PairScorer::forward1(const ParameterStore& store, const VectorXd& x,
                            const VectorXd& y) const {
  return forward(store, x, y)(0);
}

void PairScorer::backward(ParameterStore& store, const MatrixXd& X, const MatrixXd& Y,
                          const MatrixXd& hidden, const VectorXd& gscore, MatrixXd* dX,
                          MatrixXd* dY) const {
  const auto w2 = store.vec(this->w2);
  store.grad_vec(this->w2) += hidden * gscore;
  store.grad_vec(this->b2)(0) += gscore.sum();
  // pre-activation gradient: (w2 g^T) ⊙ (1 - H^2)
  MatrixXd G =
      ((w2 * gscore.transpose()).array() * (1.0 - hidden.array().square())).matrix();
  store.grad(this->W1x) += G * X.transpose();
  store.grad(this->W1y) += G * Y.transpose();
  store.grad_vec(this->b1) += G.rowwise().sum();
  const auto W1x = store.mat(this->W1x);
  const auto W1y = store.mat(this->W1y);
  if (dX) *dX += W1x.transpose() * G;
  if (dY) *dY += W1y.transpose() * G;
}

GruCell GruCell::create(ParameterStore& store, const std::string& prefix, std::int64_t d,
                        std::int64_t dm) {
  GruCell g;
  g.d = d;
  g.dm = dm;
  g.Wz = store.add(prefix + ".Wz", d, dm, InitSpec::xavier());
  g.Uz = store.add(prefix + ".Uz", d, d, InitSpec::xavier());
  g.bz = store.add(prefix + ".bz", d, 1, InitSpec::zeros());
  g.Wr = store.add(prefix + ".Wr", d, dm, InitSpec::xavier());
  g.Ur = store.add(prefix + ".Ur", d, d, InitSpec::xavier());
  g.br = store.add(prefix + ".br", d, 1, InitSpec::zeros());
  g.Wh = store.add(prefix + ".Wh", d, dm, InitSpec::xavier());
  g.Uh = store.add(prefix + ".Uh", d, d, InitSpec::xavier());
  g.bh = store.add(prefix + ".bh", d, 1, InitSpec::zeros());
  return g;
}

MatrixXd GruCell::forward(const ParameterStore& store, const MatrixXd& S,
                          const MatrixXd& M, Cache* cache) const {
  const auto Wz = store.mat(this->Wz);
  const auto Uz = store.mat(this->Uz);
  const auto bz = store.vec(this->bz);
  const auto Wr = store.mat(this->Wr);
  const auto Ur = store.mat(this->Ur);
  const auto br = store.vec(this->br);
  const auto Wh = store.mat(this->Wh);
  const auto Uh = store.mat(this->Uh);
  const auto bh = store.vec(this->bh);

  MatrixXd Z = ((Wz * M + Uz * S).colwise() + bz);
  Z = (1.0 / (1.0 + (-Z.array()).exp())).matrix();
  MatrixXd R = ((Wr * M + Ur * S).colwise() + br);
  R = (1.0 / (1.0 + (-R.array()).exp())).matrix();
  MatrixXd RS = (R.array() * S.array()).matrix();
  MatrixXd Ht = ((Wh * M + Uh * RS).colwise() + bh).array().tanh().matrix();
  MatrixXd Snew = ((1.0 - Z.array()) * S.array() + Z.array() * Ht.array()).matrix();
  if (cache) {
    cache->S = S;
    cache->M = M;
    cache->Z = std::move(Z);
    cache->R = std::move(R);
    cache->RS = std::move(RS);
    cache->Ht = std::move(Ht);
  }
  return Snew;
}

void GruCell::backward(ParameterStore& store, const Cache& c, const MatrixXd& dSnew,
                       MatrixXd* dM, MatrixXd* dS) const {
  const auto Uz = store.mat(this->Uz);
  const auto Ur = store.mat(this->Ur);
  const auto Uh = store.mat(this->Uh);
  const auto Wz = store.mat(this->Wz);
  const auto Wr = store.mat(this->Wr);
  const auto Wh = store.mat(this->Wh);

  MatrixXd dZ = (dSnew.array() * (c.Ht.array() - c.S.array())).matrix();
  MatrixXd dHt = (dSnew.array() * c.Z.array()).matrix();
  MatrixXd dSacc = (dSnew.array() * (1.0 - c.Z.array())).matrix();

  MatrixXd Gh = (dHt.array() * (1.0 - c.Ht.array().square())).matrix();
  store.grad(this->Wh) += Gh * c.M.transpose();
  store.grad(this->Uh) += Gh * c.RS.transpose();
  store.grad_vec(this->bh) += Gh.rowwise().sum();
  MatrixXd dRS = Uh.transpose() * Gh;
  MatrixXd dR = (dRS.array() * c.S.array()).matrix();
  dSacc += (dRS.array() * c.R.array()).matrix();

  MatrixXd Gz = (dZ.array() * c.Z.array() * (1.0 - c.Z.array())).matrix();
  store.grad(this->Wz) += Gz * c.M.transpose();
  store.grad(this->Uz) += Gz * c.S.transpose();
  store.grad_vec(this->bz) += Gz.rowwise().sum();
  dSacc += Uz.transpose() * Gz;

  MatrixXd Gr = (dR.array() * c.R.array() * (1.0 - c.R.array())).matrix();
  store.grad(this->Wr) += Gr * c.M.transpose();
  store.grad(this->Ur) += Gr * c.S.transpose();
  store.grad_vec(this->br) += Gr.rowwise().sum();
  dSacc += Ur.transpose() * Gr;

  if (dM) *dM += Wz.transpose() * Gz + Wr.transpose() * Gr + Wh.transpose() * Gh;
  if (dS) *dS += dSacc;
}

double bce(double p, double y) {
  constexpr double eps = 1e-12;
  p = std::min(1.0 - eps, std::max(eps, p));
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace curnm
