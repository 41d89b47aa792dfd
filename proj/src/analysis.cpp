#include "ipg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipg {

namespace {

void require_spectrum(const BoundInputs& in) {
  if (!(in.lambda_d > 0.0)) throw std::invalid_argument("bound: lambda_d must be positive");
}

void require_rate(const BoundInputs& in) {
  if (!(in.rho >= 0.0 && in.rho < 1.0)) throw std::invalid_argument("bound: rho must lie in [0, 1)");
  if (!(in.delta > 0.0 && in.delta <= 1.0)) {
    throw std::invalid_argument("bound: delta must lie in (0, 1]");
  }
}

// sum_{i=0}^{t} rho^i
double geometric_sum(double rho, int t) {
  if (rho == 0.0) return 1.0;
  return (1.0 - std::pow(rho, t + 1)) / (1.0 - rho);
}

}  // namespace

double richardson_rate(double alpha, double lambda_1, double lambda_d) {
  return std::max(std::abs(1.0 - alpha * lambda_1), std::abs(1.0 - alpha * lambda_d));
}

BoundInputs make_bound_inputs(const Spectrum& spectrum, const Matrix& K0, double alpha,
                              double delta, double eta, double omega, int m, double z0_norm) {
  BoundInputs in;
  in.lambda_1 = spectrum.lambda_1;
  in.lambda_d = spectrum.lambda_d;
  in.varrho = spectrum.varrho;
  in.alpha = alpha;
  in.rho = richardson_rate(alpha, spectrum.lambda_1, spectrum.lambda_d);
  in.delta = delta;
  in.eta = eta;
  in.omega = omega;
  in.m = m;
  in.d = static_cast<int>(spectrum.K_star.rows());
  in.z0_norm = z0_norm;
  if (K0.isZero(0.0)) {
    in.K_tilde_0_fro = spectrum.K_star.norm();
    in.K_tilde_0_spec = 1.0 / spectrum.lambda_d;
  } else {
    const Matrix Kt = K0 - spectrum.K_star;
    in.K_tilde_0_fro = Kt.norm();
    if (Kt.isApprox(Kt.transpose())) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(Kt, Eigen::EigenvaluesOnly);
      in.K_tilde_0_spec = eig.eigenvalues().cwiseAbs().maxCoeff();
    } else {
      in.K_tilde_0_spec = Eigen::BDCSVD<Matrix>(Kt).singularValues()(0);
    }
  }
  return in;
}

double theorem1_step_bound(const BoundInputs& in, double z_t_norm, int t) {
  require_spectrum(in);
  require_rate(in);
  const double decay = in.K_tilde_0_fro * std::pow(in.rho, t + 1);
  const double noise = in.delta * in.eta * in.m;
  return (1.0 - in.delta + in.delta * in.lambda_1 * decay) * z_t_norm +
         noise * std::sqrt(in.lambda_1) * decay + noise * std::sqrt(1.0 / in.lambda_d);
}

double theorem1_asymptote(const BoundInputs& in) {
  require_spectrum(in);
  return in.delta * in.eta * in.m * std::sqrt(1.0 / in.lambda_d);
}

double gd_observation_asymptote(const BoundInputs& in) {
  require_spectrum(in);
  return in.delta * in.eta * in.m * std::sqrt(in.lambda_1);
}

double u_of_t(const BoundInputs& in, int t) {
  require_rate(in);
  return 1.0 - in.delta +
         in.delta * in.lambda_1 *
             (std::pow(in.rho, t) * in.K_tilde_0_spec +
              in.omega * std::sqrt(static_cast<double>(in.d)) * geometric_sum(in.rho, t));
}

std::vector<double> theorem2_bound_trace(const BoundInputs& in, int t_max) {
  require_rate(in);
  if (t_max < 0) throw std::invalid_argument("theorem2_bound_trace: negative horizon");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(t_max) + 1);
  // prod_{k=1}^t u(k) is carried as a log while every factor is positive.
  double log_prod = 0.0;
  bool zero_factor = false;
  double tail = 1.0;  // 1 + sum_{j=1}^{t} prod_{k=j}^{t} u(k)
  out.push_back(in.z0_norm + in.omega);
  for (int t = 1; t <= t_max; ++t) {
    const double u = u_of_t(in, t);
    if (u > 0.0) {
      log_prod += std::log(u);
    } else {
      zero_factor = true;
    }
    tail = 1.0 + u * tail;
    const double prod = zero_factor ? 0.0 : std::exp(log_prod);
    out.push_back(prod * in.z0_norm + tail * in.omega);
  }
  return out;
}

double theorem2_bound(const BoundInputs& in, int t) { return theorem2_bound_trace(in, t).back(); }

Theorem2Gates theorem2_gates(const BoundInputs& in) {
  Theorem2Gates g;
  const double spread = in.omega * std::sqrt(static_cast<double>(in.d));
  const double denom = in.K_tilde_0_spec + spread;
  g.rho_bd = denom > 0.0 ? in.K_tilde_0_spec / denom : 1.0;
  g.omega_bd = (1.0 - in.rho) / (in.lambda_1 * std::sqrt(static_cast<double>(in.d)));
  g.satisfied = in.rho < g.rho_bd && in.omega < g.omega_bd;
  return g;
}

double theorem2_asymptote(const BoundInputs& in) {
  const auto g = theorem2_gates(in);
  return in.omega / (in.delta * (1.0 - in.omega / g.omega_bd));
}

double gd_process_asymptote(const BoundInputs& in) {
  // I - delta A^T A is symmetric, so its norm is attained at an extreme eigenvalue.
  const double contraction = std::max(std::abs(1.0 - in.delta * in.lambda_1),
                                      std::abs(1.0 - in.delta * in.lambda_d));
  if (!(contraction < 1.0)) {
    throw std::domain_error("gd_process_asymptote: ||I - delta A^T A|| = " +
                            std::to_string(contraction) + " is not a contraction");
  }
  return in.omega / (1.0 - contraction);
}

double estimation_error(const Vector& x, const Vector& x_star) {
  if (x.size() != x_star.size()) throw std::invalid_argument("estimation_error: size mismatch");
  return (x - x_star).norm();
}

}  // namespace ipg
