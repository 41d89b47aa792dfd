#pragma once

#include "ipg/dataset.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace ipg {

/// Server -> agents payload for one synchronous round.
struct Broadcast {
  int t = 0;
  Vector x;
  const Matrix* K = nullptr;  // read-only view of the server's pre-conditioner
};

/// Agent -> server payload. `vec` is the gradient g^i (or, for projection
/// consensus, the agent's local estimate); `mat` carries R^i_1..R^i_d as
/// columns when the method needs them.
struct Reply {
  Vector vec;
  std::optional<Matrix> mat;
  // Compact form: when non-empty, `mat` holds only these rows and the full
  // d x d reply is mat_diag * I plus those rows scattered into place.
  std::vector<Eigen::Index> mat_rows;
  double mat_diag = 0.0;
};

/// Server-side view of a finished round: fixed-order sums over agent ids.
struct Aggregate {
  Vector vec_sum;
  std::optional<Matrix> mat_sum;
  bool finite = true;
};

enum class AgentExecution { sequential, concurrent };

/// Per-agent computation. It only ever sees the broadcast and its own shard;
/// any agent-local memory must be indexed by `shard.agent_id`.
using AgentFn = std::function<Reply(const Broadcast&, const AgentShard&)>;

/// In-process simulation of the server-agent network. The network owns the
/// shards; server code only reaches them through `execute_round`.
class Network {
 public:
  explicit Network(std::vector<AgentShard> shards,
                   AgentExecution execution = AgentExecution::sequential);

  int agent_count() const { return static_cast<int>(shards_.size()); }
  Eigen::Index dim() const { return dim_; }

  /// Runs one round. `order` optionally permutes the order in which agents
  /// are evaluated; the aggregate never depends on it.
  Aggregate execute_round(const Broadcast& broadcast, const AgentFn& agent_fn,
                          std::span<const int> order = {}) const;

 private:
  std::vector<AgentShard> shards_;
  Eigen::Index dim_ = 0;
  AgentExecution execution_;
};

}  // namespace ipg
