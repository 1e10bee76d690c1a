#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace curnm {

using NodeId = std::int64_t;
using EventIdx = std::int64_t;

/// One timestamped interaction (u, v, t). Optional per-edge features live in
/// the owning graph's columnar storage.
struct TemporalEdgeEvent {
  NodeId src = 0;
  NodeId dst = 0;
  double timestamp = 0.0;
};

struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PoolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Packs an unordered node pair into one key. Internal ids are dense and far
// below 2^32 for every dataset in scope.
inline std::uint64_t unordered_pair_key(NodeId a, NodeId b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

inline std::uint64_t ordered_pair_key(NodeId a, NodeId b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

}  // namespace curnm
