#pragma once

#include "ipg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ipg {

/// Collective regression data: A (N x d), b (length N) and the reference
/// solution x_star.
struct CollectiveData {
  Matrix A;
  Vector b;
  Vector x_star;

  Eigen::Index rows() const { return A.rows(); }
  Eigen::Index dim() const { return A.cols(); }
};

/// One agent's local data points. `b_observed` is only set under observation
/// noise and then replaces `b` in every gradient the agent computes.
struct AgentShard {
  int agent_id = 0;  // 1-based
  Eigen::Index first_row = 0;
  Matrix A;
  Vector b;
  std::optional<Vector> b_observed;
  // Compressed mirror of A, only kept when A is sparse enough to pay off.
  std::optional<SparseMatrix> A_sparse;
  // Columns where A is nonzero and (A^T A) restricted to them; set with A_sparse.
  std::vector<Eigen::Index> support;
  std::optional<SparseMatrix> support_gram;

  Eigen::Index rows() const { return A.rows(); }
  const Vector& output() const { return b_observed ? *b_observed : b; }
};

struct Spectrum {
  double lambda_1 = 0.0;
  double lambda_d = 0.0;
  double varrho = 0.0;
  Matrix K_star;  // (A^T A)^{-1}
  Vector v_1;     // unit eigenvector for lambda_1
  Vector v_d;     // unit eigenvector for lambda_d
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Matrix Market I/O. Supports coordinate and array layouts with the real or
// integer field and the general, symmetric and skew-symmetric qualifiers.
Matrix parse_matrix_market(const std::filesystem::path& path);
Matrix parse_matrix_market(std::istream& in, const std::string& source = "<stream>");
void write_matrix_market(std::ostream& out, const Matrix& A, bool symmetric,
                         std::string_view comment = {});

Vector synthesize_output(const Matrix& A, const Vector& x_star);

/// Builds (A, A x_star, x_star) after checking N >= d.
CollectiveData make_collective(Matrix A, Vector x_star);

/// Contiguous row blocks, the first N mod m agents get one extra row.
std::vector<AgentShard> partition(const CollectiveData& data, int m);

/// Vertical concatenation of shards in agent order.
std::pair<Matrix, Vector> concatenate(std::span<const AgentShard> shards);

inline constexpr double kRankTolerance = 1e-12;

Spectrum compute_spectrum(const Matrix& A);
inline Spectrum compute_spectrum(const CollectiveData& data) { return compute_spectrum(data.A); }

/// 9-point Laplacian stencil on an n x n grid (8 on the diagonal, -1 for each
/// of the up to eight neighbours), nodes in row-major order. n = 30 gives the
/// operator distributed as gr_30_30.
Matrix nine_point_laplacian(int n);

struct SyntheticSpec {
  int rows = 50;
  int dim = 10;
  double condition_number = 10.0;  // of A^T A
  std::uint64_t seed = 1;
};

/// Random A = U diag(s) V^T with singular values spaced geometrically in
/// [1, sqrt(condition_number)], and x_star = all ones.
CollectiveData make_synthetic(const SyntheticSpec& spec);

}  // namespace ipg
