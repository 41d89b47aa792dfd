#include "ipg/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace ipg {

namespace {

// Guard against headers that would make the dense materialization absurd.
constexpr long long kMaxDenseEntries = 200'000'000;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

enum class Symmetry { general, symmetric, skew };

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

Matrix parse_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open Matrix Market file " + path.string());
  }
  return parse_matrix_market(in, path.string());
}

Matrix parse_matrix_market(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) {
    throw ParseError(source, 1, "empty file");
  }
  ++lineno;
  std::istringstream header(line);
  std::string banner, object, layout, field, symmetry;
  header >> banner >> object >> layout >> field >> symmetry;
  if (banner != "%%MatrixMarket") {
    throw ParseError(source, lineno, "missing %%MatrixMarket banner");
  }
  object = lower(object);
  layout = lower(layout);
  field = lower(field);
  symmetry = lower(symmetry);
  if (object != "matrix") {
    throw ParseError(source, lineno, "unsupported object '" + object + "'");
  }
  if (layout != "coordinate" && layout != "array") {
    throw ParseError(source, lineno, "unsupported format '" + layout + "'");
  }
  if (field != "real" && field != "integer" && field != "double") {
    throw ParseError(source, lineno, "field '" + field + "' is not real-valued");
  }
  Symmetry sym;
  if (symmetry == "general") {
    sym = Symmetry::general;
  } else if (symmetry == "symmetric") {
    sym = Symmetry::symmetric;
  } else if (symmetry == "skew-symmetric") {
    sym = Symmetry::skew;
  } else {
    throw ParseError(source, lineno, "unsupported qualifier '" + symmetry + "'");
  }

  // Size line, after comments.
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] == '%') continue;
    if (is_blank(line)) continue;
    break;
  }
  if (!in && line.empty()) {
    throw ParseError(source, lineno, "missing size line");
  }
  long long rows = -1, cols = -1, nnz = -1;
  {
    std::istringstream size(line);
    size >> rows >> cols;
    if (layout == "coordinate") size >> nnz;
    if (size.fail() || rows <= 0 || cols <= 0 || (layout == "coordinate" && nnz < 0)) {
      throw ParseError(source, lineno, "malformed size line '" + line + "'");
    }
  }
  if (rows > kMaxDenseEntries / cols) {
    throw ParseError(source, lineno, "dimension overflow: " + std::to_string(rows) + " x " +
                                         std::to_string(cols));
  }
  if (sym != Symmetry::general && rows != cols) {
    throw ParseError(source, lineno, "symmetric qualifier on a non-square matrix");
  }

  Matrix A = Matrix::Zero(rows, cols);
  auto next_data_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line[0] == '%') continue;
      if (is_blank(line)) continue;
      return true;
    }
    return false;
  };

  if (layout == "coordinate") {
    for (long long k = 0; k < nnz; ++k) {
      if (!next_data_line()) {
        throw ParseError(source, lineno, "expected " + std::to_string(nnz) + " entries, found " +
                                             std::to_string(k));
      }
      std::istringstream entry(line);
      long long i = 0, j = 0;
      double v = 0.0;
      entry >> i >> j >> v;
      if (entry.fail()) {
        throw ParseError(source, lineno, "malformed entry '" + line + "'");
      }
      if (i < 1 || i > rows || j < 1 || j > cols) {
        throw ParseError(source, lineno, "index out of range");
      }
      A(i - 1, j - 1) += v;
      if (i != j && sym == Symmetry::symmetric) A(j - 1, i - 1) += v;
      if (i != j && sym == Symmetry::skew) A(j - 1, i - 1) -= v;
    }
  } else {
    // Column-major; symmetric variants list the lower triangle only.
    for (long long j = 0; j < cols; ++j) {
      const long long first = sym == Symmetry::general ? 0 : (sym == Symmetry::skew ? j + 1 : j);
      for (long long i = first; i < rows; ++i) {
        if (!next_data_line()) {
          throw ParseError(source, lineno, "array data ends early");
        }
        std::istringstream entry(line);
        double v = 0.0;
        entry >> v;
        if (entry.fail()) {
          throw ParseError(source, lineno, "malformed value '" + line + "'");
        }
        A(i, j) = v;
        if (i != j && sym == Symmetry::symmetric) A(j, i) = v;
        if (i != j && sym == Symmetry::skew) A(j, i) = -v;
      }
    }
  }
  if (next_data_line()) {
    throw ParseError(source, lineno, "trailing data after the declared entries");
  }
  return A;
}

void write_matrix_market(std::ostream& out, const Matrix& A, bool symmetric,
                         std::string_view comment) {
  if (symmetric && (A.rows() != A.cols() || !A.isApprox(A.transpose(), 0.0))) {
    throw std::invalid_argument("write_matrix_market: matrix is not symmetric");
  }
  long long nnz = 0;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    for (Eigen::Index i = symmetric ? j : 0; i < A.rows(); ++i) {
      if (A(i, j) != 0.0) ++nnz;
    }
  }
  out << "%%MatrixMarket matrix coordinate real " << (symmetric ? "symmetric" : "general") << '\n';
  if (!comment.empty()) {
    std::istringstream lines{std::string(comment)};
    std::string l;
    while (std::getline(lines, l)) out << "% " << l << '\n';
  }
  out << A.rows() << ' ' << A.cols() << ' ' << nnz << '\n';
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    for (Eigen::Index i = symmetric ? j : 0; i < A.rows(); ++i) {
      if (A(i, j) != 0.0) out << i + 1 << ' ' << j + 1 << ' ' << A(i, j) << '\n';
    }
  }
}

Vector synthesize_output(const Matrix& A, const Vector& x_star) {
  if (A.cols() != x_star.size()) {
    throw std::invalid_argument("synthesize_output: A has " + std::to_string(A.cols()) +
                                " columns but x_star has length " +
                                std::to_string(x_star.size()));
  }
  return A * x_star;
}

CollectiveData make_collective(Matrix A, Vector x_star) {
  if (A.rows() < A.cols()) {
    throw AssumptionViolation("collective matrix has fewer rows (" + std::to_string(A.rows()) +
                              ") than columns (" + std::to_string(A.cols()) + ")");
  }
  Vector b = synthesize_output(A, x_star);
  return CollectiveData{std::move(A), std::move(b), std::move(x_star)};
}

std::vector<AgentShard> partition(const CollectiveData& data, int m) {
  const Eigen::Index n = data.rows();
  if (m <= 0 || m > n) {
    throw std::invalid_argument("partition: agent count " + std::to_string(m) +
                                " must be in [1, " + std::to_string(n) + "]");
  }
  const Eigen::Index base = n / m;
  const Eigen::Index extra = n % m;
  std::vector<AgentShard> shards;
  shards.reserve(m);
  Eigen::Index row = 0;
  for (int i = 0; i < m; ++i) {
    const Eigen::Index rows = base + (i < extra ? 1 : 0);
    AgentShard shard;
    shard.agent_id = i + 1;
    shard.first_row = row;
    shard.A = data.A.middleRows(row, rows);
    shard.b = data.b.segment(row, rows);
    const auto nonzeros = (shard.A.array() != 0.0).count();
    if (rows > 0 && static_cast<double>(nonzeros) <= 0.25 * static_cast<double>(shard.A.size())) {
      shard.A_sparse = shard.A.sparseView();
      for (Eigen::Index j = 0; j < shard.A.cols(); ++j) {
        if ((shard.A.col(j).array() != 0.0).any()) shard.support.push_back(j);
      }
      const Matrix A_c = shard.A(Eigen::placeholders::all, shard.support);
      shard.support_gram = Matrix(A_c.transpose() * A_c).sparseView();
    }
    shards.push_back(std::move(shard));
    row += rows;
  }
  return shards;
}

std::pair<Matrix, Vector> concatenate(std::span<const AgentShard> shards) {
  Eigen::Index rows = 0;
  Eigen::Index cols = shards.empty() ? 0 : shards.front().A.cols();
  for (const auto& s : shards) rows += s.rows();
  Matrix A(rows, cols);
  Vector b(rows);
  Eigen::Index row = 0;
  for (const auto& s : shards) {
    A.middleRows(row, s.rows()) = s.A;
    b.segment(row, s.rows()) = s.b;
    row += s.rows();
  }
  return {std::move(A), std::move(b)};
}

Spectrum compute_spectrum(const Matrix& A) {
  const Matrix H = A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("compute_spectrum: eigensolver failed");
  }
  const Eigen::Index d = H.rows();
  Spectrum s;
  s.lambda_d = eig.eigenvalues()(0);
  s.lambda_1 = eig.eigenvalues()(d - 1);
  if (!(s.lambda_1 > 0.0) || s.lambda_d <= kRankTolerance * s.lambda_1) {
    std::ostringstream msg;
    msg << "A^T A is not full rank (lambda_d = " << s.lambda_d << ", lambda_1 = " << s.lambda_1
        << ")";
    throw AssumptionViolation(msg.str());
  }
  s.varrho = (s.lambda_1 - s.lambda_d) / (s.lambda_1 + s.lambda_d);
  s.v_1 = eig.eigenvectors().col(d - 1);
  s.v_d = eig.eigenvectors().col(0);
  Eigen::LLT<Matrix> llt(H);
  if (llt.info() == Eigen::Success) {
    s.K_star = llt.solve(Matrix::Identity(d, d));
  } else {
    s.K_star = H.ldlt().solve(Matrix::Identity(d, d));
  }
  return s;
}

Matrix nine_point_laplacian(int n) {
  if (n <= 0) throw std::invalid_argument("nine_point_laplacian: n must be positive");
  const int size = n * n;
  Matrix A = Matrix::Zero(size, size);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int node = r * n + c;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
          A(node, rr * n + cc) = (dr == 0 && dc == 0) ? 8.0 : -1.0;
        }
      }
    }
  }
  return A;
}

CollectiveData make_synthetic(const SyntheticSpec& spec) {
  if (spec.dim <= 0 || spec.rows < spec.dim) {
    throw std::invalid_argument("make_synthetic: need rows >= dim > 0");
  }
  if (!(spec.condition_number >= 1.0)) {
    throw std::invalid_argument("make_synthetic: condition number must be >= 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
    Matrix G(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) G(i, j) = normal(rng);
    return G;
  };
  const Matrix U = Eigen::HouseholderQR<Matrix>(gaussian(spec.rows, spec.dim))
                       .householderQ() *
                   Matrix::Identity(spec.rows, spec.dim);
  const Matrix V = Eigen::HouseholderQR<Matrix>(gaussian(spec.dim, spec.dim)).householderQ();
  Vector sigma(spec.dim);
  const double top = std::sqrt(spec.condition_number);
  for (int k = 0; k < spec.dim; ++k) {
    const double frac = spec.dim == 1 ? 0.0 : static_cast<double>(k) / (spec.dim - 1);
    sigma(k) = std::pow(top, frac);
  }
  Matrix A = U * sigma.asDiagonal() * V.transpose();
  return make_collective(std::move(A), Vector::Ones(spec.dim));
}

}  // namespace ipg
