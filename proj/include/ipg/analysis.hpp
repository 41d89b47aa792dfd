#pragma once

#include "ipg/dataset.hpp"

#include <vector>

namespace ipg {

/// Scalars the IPG noise bounds depend on. K(0) enters through
/// K~(0) = K(0) - K*, in Frobenius norm for the observation-noise bound and
/// spectral norm for the process-noise bound.
struct BoundInputs {
  double lambda_1 = 1.0;
  double lambda_d = 1.0;
  double varrho = 0.0;
  double rho = 0.0;
  double delta = 1.0;
  double alpha = 0.0;
  double eta = 0.0;
  double omega = 0.0;
  int m = 1;
  int d = 1;
  double K_tilde_0_fro = 0.0;
  double K_tilde_0_spec = 0.0;
  double z0_norm = 0.0;
};

/// Linear contraction rate of the pre-conditioner iteration,
/// max(|1 - alpha lambda_1|, |1 - alpha lambda_d|).
double richardson_rate(double alpha, double lambda_1, double lambda_d);

/// Fills BoundInputs for an IPG run with pre-conditioner start K0.
BoundInputs make_bound_inputs(const Spectrum& spectrum, const Matrix& K0, double alpha,
                              double delta, double eta, double omega, int m, double z0_norm);

/// One-step bound on E||z(t+1)|| under observation noise given ||z(t)||.
double theorem1_step_bound(const BoundInputs& in, double z_t_norm, int t);
/// delta eta m sqrt(1 / lambda_d).
double theorem1_asymptote(const BoundInputs& in);
/// delta eta m sqrt(lambda_1), the same limit for constant-step GD.
double gd_observation_asymptote(const BoundInputs& in);

/// u(t) = 1 - delta + delta lambda_1 (rho^t ||K~(0)|| + omega sqrt(d) sum_{i<=t} rho^i).
double u_of_t(const BoundInputs& in, int t);

/// Bound on E||z°(t)|| under process noise.
double theorem2_bound(const BoundInputs& in, int t);
/// theorem2_bound for t = 0..t_max in one pass.
std::vector<double> theorem2_bound_trace(const BoundInputs& in, int t_max);

struct Theorem2Gates {
  double rho_bd = 1.0;
  double omega_bd = 0.0;
  bool satisfied = false;
};
Theorem2Gates theorem2_gates(const BoundInputs& in);
/// omega / (delta (1 - omega / omega_bd)), the asymptote when the gates hold.
double theorem2_asymptote(const BoundInputs& in);

/// omega / (1 - ||I - delta A^T A||); throws if the norm is not below one.
double gd_process_asymptote(const BoundInputs& in);

double estimation_error(const Vector& x, const Vector& x_star);

}  // namespace ipg
