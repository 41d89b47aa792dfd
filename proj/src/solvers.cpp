#include "ipg/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ipg {

namespace {

// Process-noise stream layout: x uses 0, matrix columns (K or M) or the NAG
// extrapolated point start at 1, agent-local APC estimates start at 2^32.
constexpr std::uint64_t kEstimateStream = 0;
constexpr std::uint64_t kMatrixStream = 1;
constexpr std::uint64_t kExtrapolatedStream = 1;
constexpr std::uint64_t kAgentStreamBase = 1ULL << 32;

void corrupt_estimate(Vector& v, const SolverConfig& config, std::uint64_t stream, int t,
                      NoiseMeter* meter) {
  if (config.process_noise.kind == ProcessNoiseKind::none) return;
  const Vector w = corrupt_vector(v, config.process_noise, stream, static_cast<std::uint64_t>(t));
  if (meter) meter->add(w);
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::ipg: return "ipg";
    case Method::gd: return "gd";
    case Method::nag: return "nag";
    case Method::hbm: return "hbm";
    case Method::apc: return "apc";
    case Method::bfgs: return "bfgs";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

void SolverConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("SolverConfig: " + what); };
  switch (method) {
    case Method::ipg:
      if (!(alpha > 0.0)) fail("alpha must be positive");
      if (!(delta > 0.0 && delta <= 1.0)) fail("delta must lie in (0, 1]");
      break;
    case Method::gd:
      if (!(alpha > 0.0)) fail("alpha must be positive");
      break;
    case Method::nag:
    case Method::hbm:
      if (!(alpha > 0.0)) fail("alpha must be positive");
      if (!(beta >= 0.0 && beta < 1.0)) fail("beta must lie in [0, 1)");
      break;
    case Method::apc:
      if (!(gamma > 0.0)) fail("gamma must be positive");
      if (!(eta_apc > 0.0)) fail("eta must be positive");
      break;
    case Method::bfgs:
      break;
  }
  if (process_noise.kind == ProcessNoiseKind::uniform_additive &&
      !(process_noise.hi >= process_noise.lo)) {
    fail("process noise range is empty");
  }
}

Vector agent_gradient(const AgentShard& shard, const Vector& x) {
  if (x.size() != shard.A.cols()) throw std::invalid_argument("agent_gradient: dimension mismatch");
  if (shard.A_sparse) {
    const Vector residual = *shard.A_sparse * x - shard.output();
    return shard.A_sparse->transpose() * residual;
  }
  const Vector residual = shard.A * x - shard.output();
  return shard.A.transpose() * residual;
}

Vector agent_hessian_product(const AgentShard& shard, const Vector& p) {
  if (p.size() != shard.A.cols()) throw std::invalid_argument("agent_hessian_product: dimension mismatch");
  if (shard.A_sparse) {
    const Vector Ap = *shard.A_sparse * p;
    return shard.A_sparse->transpose() * Ap;
  }
  const Vector Ap = shard.A * p;
  return shard.A.transpose() * Ap;
}

Matrix agent_r_vectors(const AgentShard& shard, const Matrix& K, int m) {
  if (K.rows() != shard.A.cols() || K.cols() != shard.A.cols()) {
    throw std::invalid_argument("agent_r_vectors: K must be d x d");
  }
  Matrix R;
  if (shard.A_sparse) {
    const Matrix AK = *shard.A_sparse * K;
    R = shard.A_sparse->transpose() * AK;
  } else {
    const Matrix AK = shard.A * K;
    R = shard.A.transpose() * AK;
  }
  R.diagonal().array() -= 1.0 / m;
  return R;
}

Reply agent_r_reply(const AgentShard& shard, const Matrix& K, int m) {
  if (!shard.support_gram) return Reply{Vector(), agent_r_vectors(shard, K, m)};
  if (K.rows() != shard.A.cols() || K.cols() != shard.A.cols()) {
    throw std::invalid_argument("agent_r_reply: K must be d x d");
  }
  const Matrix K_c = K(shard.support, Eigen::placeholders::all);
  Reply r;
  r.mat = Matrix(*shard.support_gram * K_c);
  r.mat_rows = shard.support;
  r.mat_diag = -1.0 / m;
  return r;
}

ServerState initial_state(Method method, Eigen::Index dim, const SolverConfig& config,
                          NoiseMeter* meter) {
  ServerState s;
  s.x = Vector::Zero(dim);
  if (method == Method::ipg) {
    s.K = config.freeze_preconditioner ? Matrix(Matrix::Identity(dim, dim)) : Matrix(Matrix::Zero(dim, dim));
    if (!config.freeze_preconditioner) {
      corrupt_matrix(s.K, config.process_noise, kMatrixStream, 0, meter);
    }
  }
  if (method == Method::bfgs) {
    s.M = Matrix::Identity(dim, dim);
    corrupt_matrix(s.M, config.process_noise, kMatrixStream, 0, meter);
  }
  corrupt_estimate(s.x, config, kEstimateStream, 0, meter);
  s.x_prev = s.x;
  if (method == Method::nag) s.y = s.x;
  return s;
}

ServerState ipg_update(ServerState state, const Vector& G, const Matrix& R_sum,
                       const SolverConfig& config, NoiseMeter* meter) {
  const int next = state.t + 1;
  if (!config.freeze_preconditioner) {
    // k_j(t+1) = k°_j(t) - alpha sum_i R^i_j(t), then corrupted to k°_j(t+1).
    state.K = state.K - config.alpha * R_sum;
    corrupt_matrix(state.K, config.process_noise, kMatrixStream, static_cast<std::uint64_t>(next),
                   meter);
  }
  // x(t+1) = x°(t) - delta K°(t+1) sum_i g^i(t), then corrupted to x°(t+1).
  const Vector KG = state.K * G;
  state.x = state.x - config.delta * KG;
  corrupt_estimate(state.x, config, kEstimateStream, next, meter);
  state.t = next;
  return state;
}

ServerState gd_update(ServerState state, const Vector& G, const SolverConfig& config,
                      NoiseMeter* meter) {
  const int next = state.t + 1;
  state.x_prev = state.x;
  state.x = state.x - config.alpha * G;
  corrupt_estimate(state.x, config, kEstimateStream, next, meter);
  state.t = next;
  return state;
}

ServerState hbm_update(ServerState state, const Vector& G, const SolverConfig& config,
                       NoiseMeter* meter) {
  const int next = state.t + 1;
  Vector x_next = state.x - config.alpha * G + config.beta * (state.x - state.x_prev);
  corrupt_estimate(x_next, config, kEstimateStream, next, meter);
  state.x_prev = std::move(state.x);
  state.x = std::move(x_next);
  state.t = next;
  return state;
}

ServerState nag_update(ServerState state, const Vector& G, const SolverConfig& config,
                       NoiseMeter* meter) {
  const int next = state.t + 1;
  Vector x_next = state.y - config.alpha * G;
  corrupt_estimate(x_next, config, kEstimateStream, next, meter);
  state.x_prev = std::move(state.x);
  state.x = std::move(x_next);
  state.y = state.x + config.beta * (state.x - state.x_prev);
  corrupt_estimate(state.y, config, kExtrapolatedStream, next, meter);
  state.t = next;
  return state;
}

ServerState apc_update(ServerState state, const Vector& local_sum, int m,
                       const SolverConfig& config, NoiseMeter* meter) {
  const int next = state.t + 1;
  state.x_prev = state.x;
  state.x = (config.eta_apc / m) * local_sum + (1.0 - config.eta_apc) * state.x;
  corrupt_estimate(state.x, config, kEstimateStream, next, meter);
  state.t = next;
  return state;
}

ServerState bfgs_refresh(ServerState state, const Vector& G) {
  if (state.has_prev_gradient) {
    const Vector s = state.x - state.x_prev;
    const Vector y = G - state.g_prev;
    const double sy = s.dot(y);
    if (sy > 0.0 && std::isfinite(sy)) {
      // M+ = (I - r s y^T) M (I - r y s^T) + r s s^T, without assuming M = M^T.
      const double r = 1.0 / sy;
      const Vector My = state.M * y;
      const Vector yM = state.M.transpose() * y;
      const double yMy = y.dot(My);
      state.M.noalias() -= r * (s * yM.transpose() + My * s.transpose());
      state.M.noalias() += (r * r * yMy + r) * (s * s.transpose());
    } else {
      ++state.skipped_updates;
    }
  }
  state.g_prev = G;
  state.has_prev_gradient = true;
  return state;
}

Vector bfgs_direction(const ServerState& state, const Vector& G) { return -(state.M * G); }

ServerState bfgs_update(ServerState state, const Vector& G, const Vector& p, const Vector& Hp,
                        const SolverConfig& config, NoiseMeter* meter) {
  const int next = state.t + 1;
  // Exact minimizer along p of the quadratic; unit step if the curvature
  // along p is not positive.
  double tau = 1.0;
  if (Hp.size() > 0) {
    const double curvature = p.dot(Hp);
    if (curvature > 0.0 && std::isfinite(curvature)) tau = -G.dot(p) / curvature;
  }
  state.x_prev = state.x;
  state.x = state.x + tau * p;
  corrupt_estimate(state.x, config, kEstimateStream, next, meter);
  corrupt_matrix(state.M, config.process_noise, kMatrixStream, static_cast<std::uint64_t>(next),
                 meter);
  state.t = next;
  return state;
}

ApcAgentState apc_agent_setup(const AgentShard& shard) {
  ApcAgentState agent;
  const Matrix gram = shard.A * shard.A.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const Vector& ev = eig.eigenvalues();
  const double cutoff = ev.size() == 0 ? 0.0
                                       : std::max(ev.cwiseAbs().maxCoeff(), 1.0) *
                                             static_cast<double>(gram.rows()) * 1e-13;
  Vector inv = Vector::Zero(ev.size());
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev(k) > cutoff) inv(k) = 1.0 / ev(k);
  }
  agent.gram_pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  // Minimum-norm solution of the local system A^i x = b^i.
  agent.x_local = shard.A.transpose() * (agent.gram_pinv * shard.output());
  return agent;
}

Vector apc_project(const AgentShard& shard, const ApcAgentState& agent, const Vector& v) {
  Vector Av;
  if (shard.A_sparse) {
    Av = *shard.A_sparse * v;
    const Vector coeff = agent.gram_pinv * Av;
    return v - shard.A_sparse->transpose() * coeff;
  }
  Av = shard.A * v;
  const Vector coeff = agent.gram_pinv * Av;
  return v - shard.A.transpose() * coeff;
}

Solver::Solver(SolverConfig config, const Network& network)
    : config_(std::move(config)), network_(&network) {
  config_.validate();
  const auto d = network.dim();
  state_ = initial_state(config_.method, d, config_, &meter_);
  if (config_.method == Method::apc) {
    // Pre-phase: every agent factors its local Gram matrix and reports its
    // minimum-norm local solution; the server starts from their average.
    apc_agents_.resize(static_cast<std::size_t>(network.agent_count()));
    const SolverConfig& cfg = config_;
    auto setup = [this, &cfg](const Broadcast&, const AgentShard& shard) {
      auto& agent = apc_agents_[static_cast<std::size_t>(shard.agent_id - 1)];
      agent = apc_agent_setup(shard);
      if (cfg.process_noise.kind != ProcessNoiseKind::none) {
        corrupt_vector(agent.x_local, cfg.process_noise,
                       kAgentStreamBase + static_cast<std::uint64_t>(shard.agent_id), 0);
      }
      return Reply{agent.x_local, std::nullopt};
    };
    const Aggregate agg = network.execute_round(Broadcast{0, state_.x, nullptr}, setup);
    state_.x = agg.vec_sum / network.agent_count();
    corrupt_estimate(state_.x, config_, kEstimateStream, 0, &meter_);
    state_.x_prev = state_.x;
    mark_divergence(agg.finite);
  }
}

void Solver::mark_divergence(bool round_finite) {
  if (state_.diverged) return;
  bool bad = !round_finite || !state_.x.allFinite() || state_.x.norm() > kDivergenceNorm;
  if (config_.method == Method::ipg && !state_.K.allFinite()) bad = true;
  if (config_.method == Method::bfgs && !state_.M.allFinite()) bad = true;
  if (bad) {
    state_.diverged = true;
    state_.diverged_at = state_.t;
  }
}

void Solver::step() {
  if (state_.diverged) return;
  const Network& net = *network_;
  const int m = net.agent_count();
  const SolverConfig& cfg = config_;
  switch (config_.method) {
    case Method::ipg: {
      const bool frozen = cfg.freeze_preconditioner;
      auto agent = [m, frozen](const Broadcast& b, const AgentShard& shard) {
        if (frozen) return Reply{agent_gradient(shard, b.x), std::nullopt};
        Reply r = agent_r_reply(shard, *b.K, m);
        r.vec = agent_gradient(shard, b.x);
        return r;
      };
      const Aggregate agg = net.execute_round(Broadcast{state_.t, state_.x, &state_.K}, agent, order_);
      if (!agg.finite) {
        mark_divergence(false);
        return;
      }
      static const Matrix kNone;
      state_ = ipg_update(std::move(state_), agg.vec_sum, frozen ? kNone : *agg.mat_sum, cfg, &meter_);
      break;
    }
    case Method::gd:
    case Method::hbm:
    case Method::nag: {
      auto agent = [](const Broadcast& b, const AgentShard& shard) {
        return Reply{agent_gradient(shard, b.x), std::nullopt};
      };
      const Vector& point = cfg.method == Method::nag ? state_.y : state_.x;
      const Aggregate agg = net.execute_round(Broadcast{state_.t, point, nullptr}, agent, order_);
      if (!agg.finite) {
        mark_divergence(false);
        return;
      }
      if (cfg.method == Method::gd) state_ = gd_update(std::move(state_), agg.vec_sum, cfg, &meter_);
      if (cfg.method == Method::hbm) state_ = hbm_update(std::move(state_), agg.vec_sum, cfg, &meter_);
      if (cfg.method == Method::nag) state_ = nag_update(std::move(state_), agg.vec_sum, cfg, &meter_);
      break;
    }
    case Method::bfgs: {
      auto gradient = [](const Broadcast& b, const AgentShard& shard) {
        return Reply{agent_gradient(shard, b.x), std::nullopt};
      };
      const Aggregate g = net.execute_round(Broadcast{state_.t, state_.x, nullptr}, gradient, order_);
      if (!g.finite) {
        mark_divergence(false);
        return;
      }
      state_ = bfgs_refresh(std::move(state_), g.vec_sum);
      const Vector p = bfgs_direction(state_, g.vec_sum);
      if (!cfg.bfgs_line_search) {
        state_ = bfgs_update(std::move(state_), g.vec_sum, p, Vector(), cfg, &meter_);
        break;
      }
      auto curvature = [](const Broadcast& b, const AgentShard& shard) {
        return Reply{agent_hessian_product(shard, b.x), std::nullopt};
      };
      const Aggregate h = net.execute_round(Broadcast{state_.t, p, nullptr}, curvature, order_);
      if (!h.finite || !p.allFinite()) {
        mark_divergence(false);
        return;
      }
      state_ = bfgs_update(std::move(state_), g.vec_sum, p, h.vec_sum, cfg, &meter_);
      break;
    }
    case Method::apc: {
      const int next = state_.t + 1;
      auto agent = [this, &cfg, next](const Broadcast& b, const AgentShard& shard) {
        auto& local = apc_agents_[static_cast<std::size_t>(shard.agent_id - 1)];
        local.x_local += cfg.gamma * apc_project(shard, local, b.x - local.x_local);
        if (cfg.process_noise.kind != ProcessNoiseKind::none) {
          corrupt_vector(local.x_local, cfg.process_noise,
                         kAgentStreamBase + static_cast<std::uint64_t>(shard.agent_id),
                         static_cast<std::uint64_t>(next));
        }
        return Reply{local.x_local, std::nullopt};
      };
      const Aggregate agg = net.execute_round(Broadcast{state_.t, state_.x, nullptr}, agent, order_);
      if (!agg.finite) {
        mark_divergence(false);
        return;
      }
      state_ = apc_update(std::move(state_), agg.vec_sum, m, cfg, &meter_);
      break;
    }
  }
  mark_divergence(true);
}

}  // namespace ipg
