#pragma once

#include "ipg/network.hpp"
#include "ipg/noise.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ipg {

enum class Method { ipg, gd, nag, hbm, apc, bfgs };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);
inline constexpr Method kAllMethods[] = {Method::ipg, Method::gd,  Method::nag,
                                         Method::hbm, Method::apc, Method::bfgs};

struct SolverConfig {
  Method method = Method::ipg;
  double alpha = 0.1;    // IPG pre-conditioner rate, step size for GD/NAG/HBM
  double delta = 1.0;    // IPG estimate step
  double beta = 0.0;     // NAG/HBM momentum
  double gamma = 1.0;    // APC local projection weight
  double eta_apc = 1.0;  // APC server averaging weight
  // IPG with K(t) = I for every t. Only used to check the GD special case.
  bool freeze_preconditioner = false;
  // BFGS: exact minimizing step along -M G (one extra round), or the bare
  // unit step x+ = x - M G when false.
  bool bfgs_line_search = true;
  ProcessNoiseSpec process_noise;

  void validate() const;
};

/// Everything the server stores between rounds. Under process noise x, K, y
/// and M hold the corrupted values, which are what the server broadcasts.
struct ServerState {
  int t = 0;
  Vector x;
  Matrix K;       // IPG
  Vector x_prev;  // NAG, HBM, BFGS
  Vector y;       // NAG extrapolated point
  Matrix M;       // BFGS inverse-Hessian approximation
  Vector g_prev;  // BFGS
  bool has_prev_gradient = false;
  int skipped_updates = 0;
  bool diverged = false;
  int diverged_at = -1;
};

/// Divergence threshold on ||x||.
inline constexpr double kDivergenceNorm = 1e12;

// Agent-side computations.

/// (A^i)^T (A^i x - b^i), using the corrupted outputs when present.
Vector agent_gradient(const AgentShard& shard, const Vector& x);

/// (A^i)^T A^i p.
Vector agent_hessian_product(const AgentShard& shard, const Vector& p);

/// Columns R^i_j = (A^i)^T A^i k_j - e_j / m.
Matrix agent_r_vectors(const AgentShard& shard, const Matrix& K, int m);
/// The same as a compact reply: only the rows of (A^i)^T A^i K where A^i has
/// nonzero columns, plus the -1/m diagonal shift.
Reply agent_r_reply(const AgentShard& shard, const Matrix& K, int m);

// Server-side updates. `meter` (optional) collects the process-noise draws.

ServerState ipg_update(ServerState state, const Vector& G, const Matrix& R_sum,
                       const SolverConfig& config, NoiseMeter* meter = nullptr);
ServerState gd_update(ServerState state, const Vector& G, const SolverConfig& config,
                      NoiseMeter* meter = nullptr);
ServerState hbm_update(ServerState state, const Vector& G, const SolverConfig& config,
                       NoiseMeter* meter = nullptr);
/// `G` must be evaluated at `state.y`.
ServerState nag_update(ServerState state, const Vector& G, const SolverConfig& config,
                       NoiseMeter* meter = nullptr);
/// `local_sum` is the sum of the agents' refreshed local estimates.
ServerState apc_update(ServerState state, const Vector& local_sum, int m,
                       const SolverConfig& config, NoiseMeter* meter = nullptr);
/// BFGS in three parts: fold the last step's (s, y) pair into M, take the
/// direction p = -M G, then step along p to the exact minimizer of the
/// quadratic, using Hp = sum_i (A^i)^T A^i p from a second round. An empty
/// Hp means a unit step.
ServerState bfgs_refresh(ServerState state, const Vector& G);
Vector bfgs_direction(const ServerState& state, const Vector& G);
ServerState bfgs_update(ServerState state, const Vector& G, const Vector& p, const Vector& Hp,
                        const SolverConfig& config, NoiseMeter* meter = nullptr);

/// Initial server state: x(0) = 0, K(0) = 0, M(0) = I.
ServerState initial_state(Method method, Eigen::Index dim, const SolverConfig& config,
                          NoiseMeter* meter = nullptr);

/// Agent-local memory for projection consensus.
struct ApcAgentState {
  Vector x_local;
  Matrix gram_pinv;  // (A^i A^i^T)^+
};

ApcAgentState apc_agent_setup(const AgentShard& shard);
/// P v = v - A^T (A A^T)^+ A v, the projection onto null(A^i).
Vector apc_project(const AgentShard& shard, const ApcAgentState& agent, const Vector& v);

/// Drives one method over a network, round by round.
class Solver {
 public:
  Solver(SolverConfig config, const Network& network);

  void step();
  const ServerState& state() const { return state_; }
  const Vector& estimate() const { return state_.x; }
  const SolverConfig& config() const { return config_; }
  const NoiseMeter& noise_meter() const { return meter_; }

  /// Evaluation order for the next rounds (empty = agent-id order).
  void set_agent_order(std::vector<int> order) { order_ = std::move(order); }

 private:
  void mark_divergence(bool round_finite);

  SolverConfig config_;
  const Network* network_;
  ServerState state_;
  NoiseMeter meter_;
  std::vector<ApcAgentState> apc_agents_;
  std::vector<int> order_;
};

}  // namespace ipg
