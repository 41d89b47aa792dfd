#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <stdexcept>
#include <string>

namespace ipg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Raised when A^T A is singular (or numerically so); every bound and every
/// solver in this library assumes a unique least-squares solution.
class AssumptionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ipg
