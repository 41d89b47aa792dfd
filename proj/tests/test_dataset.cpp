#include "doctest.h"
#include "support.hpp"

#include <sstream>

using namespace ipg;
using namespace ipg::testing;

namespace {

Matrix parse(const std::string& text) {
  std::istringstream in(text);
  return parse_matrix_market(in);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("matrix market coordinate entries are placed densely") {
  const Matrix A = parse(
      "%%MatrixMarket matrix coordinate real general\n"
      "% comment\n"
      "3 2 2\n"
      "1 1 2.0\n"
      "3 2 -1.0\n");
  Matrix expected(3, 2);
  expected << 2, 0, 0, 0, 0, -1;
  CHECK(A == expected);
}

TEST_CASE("matrix market symmetric and skew-symmetric files are materialized") {
  const Matrix S = parse(
      "%%MatrixMarket matrix coordinate real symmetric\n"
      "3 3 3\n1 1 4\n2 1 -1\n3 2 0.5\n");
  CHECK(S == S.transpose());
  CHECK(S(0, 1) == -1.0);
  CHECK(S(1, 2) == 0.5);

  const Matrix K = parse(
      "%%MatrixMarket matrix coordinate real skew-symmetric\n"
      "2 2 1\n2 1 3\n");
  CHECK(K(1, 0) == 3.0);
  CHECK(K(0, 1) == -3.0);
}

TEST_CASE("matrix market array layout is column-major, integer field accepted") {
  const Matrix A = parse(
      "%%MatrixMarket matrix array integer general\n"
      "2 2\n1\n2\n3\n4\n");
  Matrix expected(2, 2);
  expected << 1, 3, 2, 4;
  CHECK(A == expected);
}

TEST_CASE("matrix market duplicate coordinates accumulate") {
  const Matrix A = parse("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.5\n1 1 2\n");
  CHECK(A(0, 0) == 3.5);
}

TEST_CASE("matrix market errors name the offending line") {
  CHECK(error_line("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n") == 1);
  CHECK(error_line("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n") == 1);
  CHECK(error_line("not a banner\n") == 1);
  CHECK(error_line("%%MatrixMarket matrix coordinate real general\n% c\nx y z\n") == 3);
  CHECK(error_line("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n") == 3);
  CHECK(error_line("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n") > 0);
  CHECK(error_line("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n") == 3);
  CHECK(error_line("%%MatrixMarket matrix coordinate real general\n100000 100000 1\n1 1 1\n") == 2);
  CHECK_THROWS_AS(parse_matrix_market(std::filesystem::path("/nonexistent/x.mtx")),
                  std::runtime_error);
}

TEST_CASE("matrix market write then parse is the identity") {
  const Matrix A = random_matrix(5, 3, 7);
  std::stringstream general;
  write_matrix_market(general, A, false, "random");
  CHECK(parse_matrix_market(general) == A);

  const Matrix S = A.transpose() * A;
  std::stringstream sym;
  write_matrix_market(sym, S, true);
  CHECK(parse_matrix_market(sym) == S);
  std::stringstream bad;
  CHECK_THROWS_AS(write_matrix_market(bad, A, true), std::invalid_argument);
}

TEST_CASE("gr_30_30 data file is the symmetric 9-point stencil") {
  const auto path = kDataDir / "gr_30_30.mtx";
  REQUIRE(std::filesystem::exists(path));
  const Matrix A = parse_matrix_market(path);
  CHECK(A.rows() == 900);
  CHECK(A.cols() == 900);
  CHECK(A == A.transpose());
  CHECK((A.array() != 0.0).count() == 7744);
  CHECK(A == nine_point_laplacian(30));
  // Interior node: 8 on the diagonal, eight -1 neighbours, zero row sum.
  CHECK(A.row(31).sum() == 0.0);
  CHECK(A(0, 0) == 8.0);
}

TEST_CASE("ash608 data file has the published shape when present") {
  const auto path = kDataDir / "ash608.mtx";
  if (!std::filesystem::exists(path)) {
    MESSAGE("ash608.mtx not present; skipped");
    return;
  }
  const Matrix A = parse_matrix_market(path);
  CHECK(A.rows() == 608);
  CHECK(A.cols() == 188);
  const Vector b = synthesize_output(A, Vector::Ones(188));
  CHECK(b(0) == doctest::Approx(A.row(0).sum()).epsilon(1e-14));
}

TEST_CASE("synthesize_output") {
  CHECK(synthesize_output(Matrix::Identity(3, 3), Vector::Ones(3)) == Vector::Ones(3));
  Matrix A(2, 2);
  A << 1, 2, 3, 4;
  CHECK(synthesize_output(A, Vector::Ones(2)) == Vector((Vector(2) << 3, 7).finished()));
  CHECK_THROWS_AS(synthesize_output(A, Vector::Ones(3)), std::invalid_argument);
}

TEST_CASE("make_collective checks N >= d and synthesizes an exact output") {
  CHECK_THROWS_AS(make_collective(random_matrix(2, 3, 1), Vector::Ones(3)), AssumptionViolation);
  const auto data = make_collective(random_matrix(6, 3, 2), Vector::Ones(3));
  CHECK((data.A * data.x_star - data.b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("partition sizes and round trip") {
  SUBCASE("N = 10, m = 10") {
    const auto data = make_collective(random_matrix(10, 3, 3), Vector::Ones(3));
    const auto shards = partition(data, 10);
    REQUIRE(shards.size() == 10);
    for (const auto& s : shards) CHECK(s.rows() == 1);
  }
  SUBCASE("N = 608, m = 10") {
    const auto data = make_collective(random_matrix(608, 4, 4), Vector::Ones(4));
    const auto shards = partition(data, 10);
    const std::vector<Eigen::Index> expected{61, 61, 61, 61, 61, 61, 61, 61, 60, 60};
    for (std::size_t i = 0; i < shards.size(); ++i) {
      CHECK(shards[i].rows() == expected[i]);
      CHECK(shards[i].agent_id == static_cast<int>(i) + 1);
    }
  }
  SUBCASE("concatenation reproduces (A, b) bit-exactly for every m") {
    const auto data = make_collective(random_matrix(23, 5, 5), random_vector(5, 6));
    for (int m = 1; m <= 23; ++m) {
      const auto shards = partition(data, m);
      const auto [A, b] = concatenate(shards);
      CHECK(A == data.A);
      CHECK(b == data.b);
      Eigen::Index total = 0;
      for (const auto& s : shards) total += s.rows();
      CHECK(total == data.rows());
    }
  }
  SUBCASE("invalid agent counts") {
    const auto data = make_collective(random_matrix(5, 2, 7), Vector::Ones(2));
    CHECK_THROWS_AS(partition(data, 0), std::invalid_argument);
    CHECK_THROWS_AS(partition(data, 6), std::invalid_argument);
  }
}

TEST_CASE("sparse shards keep a consistent compressed mirror") {
  const auto data = make_collective(nine_point_laplacian(6), Vector::Ones(36));
  const auto shards = partition(data, 3);
  for (const auto& s : shards) {
    REQUIRE(s.A_sparse);
    CHECK(Matrix(*s.A_sparse) == s.A);
    REQUIRE(s.support_gram);
    const Matrix gram = s.A.transpose() * s.A;
    CHECK((Matrix(*s.support_gram) - gram(s.support, s.support)).norm() == 0.0);
  }
}

TEST_CASE("compute_spectrum on hand-checkable matrices") {
  SUBCASE("diag(2, 1)") {
    const Spectrum s = compute_spectrum(diag21());
    CHECK(s.lambda_1 == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(s.lambda_d == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.varrho == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(s.K_star(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(s.K_star(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(s.K_star(0, 1)) < 1e-15);
  }
  SUBCASE("orthogonal A has a flat spectrum") {
    const Matrix Q = Eigen::HouseholderQR<Matrix>(random_matrix(6, 6, 9)).householderQ();
    const Spectrum s = compute_spectrum(Q);
    CHECK(s.lambda_1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.lambda_d == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.varrho < 1e-12);
  }
  SUBCASE("rank deficiency is an assumption violation") {
    Matrix A = random_matrix(6, 3, 10);
    A.col(2) = A.col(0) + A.col(1);
    CHECK_THROWS_AS(compute_spectrum(A), AssumptionViolation);
  }
}

TEST_CASE("spectrum invariants against independent oracles") {
  const auto check = [](const Matrix& A, double tol_digits) {
    const Spectrum s = compute_spectrum(A);
    const Matrix AtA = A.transpose() * A;
    const auto d = static_cast<double>(A.cols());
    CHECK(s.lambda_1 == doctest::Approx(power_iteration(AtA)).epsilon(tol_digits));
    CHECK(s.lambda_d == doctest::Approx(inverse_iteration(AtA)).epsilon(tol_digits));
    CHECK((AtA * s.v_1 - s.lambda_1 * s.v_1).norm() <= 1e-6 * s.v_1.norm() * s.lambda_1);
    CHECK((AtA * s.v_d - s.lambda_d * s.v_d).norm() <= 1e-6 * s.v_d.norm());
    CHECK((s.K_star * AtA - Matrix::Identity(A.cols(), A.cols())).norm() <= 1e-8 * d);
    CHECK((s.K_star - s.K_star.transpose()).norm() <= 1e-8 * s.K_star.norm());
    const double KAt = Eigen::JacobiSVD<Matrix>(s.K_star * A.transpose()).singularValues()(0);
    CHECK(KAt == doctest::Approx(1.0 / std::sqrt(s.lambda_d)).epsilon(1e-6));
    CHECK(s.varrho >= 0.0);
    CHECK(s.varrho < 1.0);
  };
  SUBCASE("synthetic") { check(make_synthetic({40, 8, 50.0, 3}).A, 1e-10); }
  SUBCASE("gr_30_30") { check(nine_point_laplacian(30), 1e-6); }
}

TEST_CASE("make_synthetic hits the requested condition number deterministically") {
  const SyntheticSpec spec{50, 10, 10.0, 42};
  const auto a = make_synthetic(spec);
  const auto b = make_synthetic(spec);
  CHECK(a.A == b.A);
  CHECK(a.x_star == Vector::Ones(10));
  const Spectrum s = compute_spectrum(a);
  CHECK(s.lambda_1 / s.lambda_d == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(make_synthetic({50, 10, 10.0, 43}).A != a.A);
  CHECK_THROWS_AS(make_synthetic({5, 10, 10.0, 1}), std::invalid_argument);
}
