#include "ipg/network.hpp"

#include <future>
#include <numeric>
#include <stdexcept>

namespace ipg {

Network::Network(std::vector<AgentShard> shards, AgentExecution execution)
    : shards_(std::move(shards)), execution_(execution) {
  if (shards_.empty()) throw std::invalid_argument("Network: no agents");
  dim_ = shards_.front().A.cols();
  for (std::size_t i = 0; i < shards_.size(); ++i) {
    if (shards_[i].A.cols() != dim_) throw std::invalid_argument("Network: ragged shard widths");
    if (shards_[i].agent_id != static_cast<int>(i) + 1) {
      throw std::invalid_argument("Network: shards must be in agent-id order");
    }
  }
}

Aggregate Network::execute_round(const Broadcast& broadcast, const AgentFn& agent_fn,
                                 std::span<const int> order) const {
  const auto m = shards_.size();
  std::vector<int> sequence(m);
  if (order.empty()) {
    std::iota(sequence.begin(), sequence.end(), 0);
  } else {
    if (order.size() != m) throw std::invalid_argument("execute_round: order has wrong length");
    sequence.assign(order.begin(), order.end());
    std::vector<bool> seen(m, false);
    for (int i : sequence) {
      if (i < 0 || static_cast<std::size_t>(i) >= m || seen[i]) {
        throw std::invalid_argument("execute_round: order is not a permutation of the agents");
      }
      seen[i] = true;
    }
  }

  // Replies land in their agent's slot; the round barrier is the join below.
  std::vector<Reply> replies(m);
  if (execution_ == AgentExecution::concurrent) {
    std::vector<std::future<void>> pending;
    pending.reserve(m);
    for (int i : sequence) {
      pending.push_back(std::async(std::launch::async, [&, i] {
        replies[i] = agent_fn(broadcast, shards_[i]);
      }));
    }
    for (auto& f : pending) f.get();
  } else {
    for (int i : sequence) replies[i] = agent_fn(broadcast, shards_[i]);
  }

  Aggregate agg;
  agg.vec_sum = Vector::Zero(dim_);
  const bool has_mat = replies.front().mat.has_value();
  if (has_mat) agg.mat_sum = Matrix::Zero(dim_, dim_);
  for (const auto& r : replies) {
    if (r.vec.size() != dim_) throw std::logic_error("execute_round: reply of wrong length");
    agg.vec_sum += r.vec;
    if (has_mat) {
      if (!r.mat) throw std::logic_error("execute_round: inconsistent reply payloads");
      if (r.mat_rows.empty()) {
        *agg.mat_sum += *r.mat;
      } else {
        agg.mat_sum->diagonal().array() += r.mat_diag;
        (*agg.mat_sum)(r.mat_rows, Eigen::placeholders::all) += *r.mat;
      }
    }
  }
  agg.finite = agg.vec_sum.allFinite() && (!has_mat || agg.mat_sum->allFinite());
  return agg;
}

}  // namespace ipg
