#pragma once

#include "ipg/experiment.hpp"

#include <random>

namespace ipg::testing {

#ifdef IPG_TEST_DATA_DIR
inline const std::filesystem::path kDataDir = IPG_TEST_DATA_DIR;
#else
inline const std::filesystem::path kDataDir = "data";
#endif

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  Matrix A(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) A(i, j) = n01(gen);
  return A;
}

inline Vector random_vector(Eigen::Index n, unsigned seed) {
  return random_matrix(n, 1, seed).col(0);
}

// Largest eigenvalue of a symmetric positive definite matrix by power iteration.
inline double power_iteration(const Matrix& S, int iters = 200000, double tol = 1e-7) {
  // Random start: structured vectors such as ones can miss the top eigenvector.
  Vector v = random_vector(S.rows(), 7).normalized();
  double lambda = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vector w = S * v;
    lambda = v.dot(w);
    if ((w - lambda * v).norm() <= tol * std::abs(lambda)) return lambda;
    v = w.normalized();
  }
  return lambda;
}

// Smallest eigenvalue by inverse iteration with a Cholesky solve.
inline double inverse_iteration(const Matrix& S, int iters = 20000, double tol = 1e-14) {
  Eigen::LLT<Matrix> llt(S);
  Vector v = Vector::Ones(S.rows()).normalized();
  double mu = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vector w = llt.solve(v);
    const double next = v.dot(w);
    v = w.normalized();
    if (std::abs(next - mu) <= tol * std::abs(next)) return 1.0 / next;
    mu = next;
  }
  return 1.0 / mu;
}

inline CollectiveData diag21() {
  Matrix A(2, 2);
  A << 2, 0, 0, 1;
  return make_collective(A, Vector::Ones(2));
}

}  // namespace ipg::testing
