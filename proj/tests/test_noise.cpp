#include "doctest.h"
#include "support.hpp"

#include <cmath>

using namespace ipg;
using namespace ipg::testing;

TEST_CASE("uniform draws are keyed, not sequential") {
  const double a = uniform_draw(1, 2, 3, 4, -1.0, 1.0);
  CHECK(a == uniform_draw(1, 2, 3, 4, -1.0, 1.0));
  CHECK(a != uniform_draw(2, 2, 3, 4, -1.0, 1.0));
  CHECK(a != uniform_draw(1, 3, 3, 4, -1.0, 1.0));
  CHECK(a != uniform_draw(1, 2, 4, 4, -1.0, 1.0));
  CHECK(a != uniform_draw(1, 2, 3, 5, -1.0, 1.0));
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = uniform_draw(9, 0, 0, i, 0.0, 5e-5);
    CHECK(u > 0.0);
    CHECK(u < 5e-5);
  }
}

TEST_CASE("uniform draws: moments and independence across iterations") {
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = uniform_draw(5, 1, 0, static_cast<std::uint64_t>(i), 0.0, 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  CHECK(mean == doctest::Approx(0.5).epsilon(3.0 * std::sqrt(1.0 / 12.0 / n) / 0.5));
  CHECK(sq / n - mean * mean == doctest::Approx(1.0 / 12.0).epsilon(0.02));

  // Successive iterations of the same entry are uncorrelated.
  const int samples = 10000;
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (int t = 0; t < samples; ++t) {
    const double x = uniform_draw(5, 7, static_cast<std::uint64_t>(t), 3, -1.0, 1.0);
    const double y = uniform_draw(5, 7, static_cast<std::uint64_t>(t + 1), 3, -1.0, 1.0);
    sx += x; sy += y; sxy += x * y; sxx += x * x; syy += y * y;
  }
  const double cov = sxy / samples - sx / samples * sy / samples;
  const double corr = cov / std::sqrt((sxx / samples - sx * sx / samples / samples) *
                                      (syy / samples - sy * sy / samples / samples));
  CHECK(std::abs(corr) < 0.05);
}

TEST_CASE("observation noise") {
  const auto data = make_collective(random_matrix(608, 4, 1), Vector::Ones(4));
  SUBCASE("amplitude 0 leaves the outputs exactly unchanged") {
    auto shards = partition(data, 10);
    const auto report = draw_observation_noise({0.0, 3}, shards);
    for (const auto& s : shards) CHECK(*s.b_observed == s.b);
    CHECK(report.max_realized() == 0.0);
  }
  SUBCASE("expected l1 per agent is n_i a / 2") {
    auto shards = partition(data, 10);
    const auto report = draw_observation_noise({0.25, 3}, shards);
    CHECK(report.expected_l1[0] == doctest::Approx(7.625));
    CHECK(report.max_expected() == doctest::Approx(7.625));
    CHECK(report.expected_l1[9] == doctest::Approx(7.5));
  }
  SUBCASE("Monte Carlo mean of ||w||_1 matches 61 * 0.125 within 3 sigma") {
    const int reps = 400;
    double sum = 0.0;
    for (int r = 0; r < reps; ++r) {
      auto shards = partition(data, 10);
      sum += draw_observation_noise({0.25, static_cast<std::uint64_t>(r + 1)}, shards).realized_l1[0];
    }
    // Var ||w||_1 = n a^2 / 12 for |U(-a, a)| ~ U(0, a).
    const double se = std::sqrt(61.0 * 0.25 * 0.25 / 12.0 / reps);
    CHECK(std::abs(sum / reps - 7.625) < 3.0 * se);
  }
  SUBCASE("noise is keyed by global row, independent of the partition") {
    auto five = partition(data, 5);
    auto ten = partition(data, 10);
    draw_observation_noise({0.25, 11}, five);
    draw_observation_noise({0.25, 11}, ten);
    Vector a(608), b(608);
    for (const auto& s : five) a.segment(s.first_row, s.rows()) = *s.b_observed - s.b;
    for (const auto& s : ten) b.segment(s.first_row, s.rows()) = *s.b_observed - s.b;
    CHECK(a == b);
    CHECK(a.cwiseAbs().maxCoeff() < 0.25);
  }
  SUBCASE("negative amplitude is rejected") {
    auto shards = partition(data, 2);
    CHECK_THROWS_AS(draw_observation_noise({-1.0, 1}, shards), std::invalid_argument);
  }
}

TEST_CASE("round-off corruption") {
  CHECK(round_decimal(0.12344999, 4) == 0.1234);
  CHECK(round_decimal(-1.00005, 4) == -1.0001);
  CHECK(round_decimal(2.5, 0) == 3.0);
  CHECK(round_decimal(-2.5, 0) == -3.0);

  Vector x(2);
  x << 0.12344999, -1.00005;
  const Vector before = x;
  const Vector w = corrupt_vector(x, ProcessNoiseSpec::round_to(4), 0, 0);
  CHECK(x(0) == 0.1234);
  CHECK(x(1) == -1.0001);
  CHECK(w == x - before);
  CHECK(w.cwiseAbs().maxCoeff() <= 0.5e-4 + 1e-15);
}

TEST_CASE("uniform corruption") {
  Vector x = Vector::LinSpaced(5, -1.0, 1.0);
  const Vector before = x;
  SUBCASE("zero range is the identity") {
    const Vector w = corrupt_vector(x, ProcessNoiseSpec::uniform(0.0, 0.0, 1), 0, 0);
    CHECK(x == before);
    CHECK(w.isZero(0.0));
  }
  SUBCASE("none is the identity") {
    corrupt_vector(x, ProcessNoiseSpec{}, 0, 0);
    CHECK(x == before);
  }
  SUBCASE("fresh draws per iteration and per stream") {
    const auto spec = ProcessNoiseSpec::uniform(-1.0, 1.0, 4);
    Vector a = before, b = before, c = before;
    corrupt_vector(a, spec, 0, 1);
    corrupt_vector(b, spec, 0, 2);
    corrupt_vector(c, spec, 1, 1);
    CHECK(a != b);
    CHECK(a != c);
  }
}

TEST_CASE("corrupt_process keys x and each column of K separately") {
  const auto spec = ProcessNoiseSpec::uniform(-1e-3, 1e-3, 8);
  const Vector x = Vector::Zero(3);
  const Matrix K = Matrix::Zero(3, 3);
  const auto out = corrupt_process(x, &K, spec, 5);
  REQUIRE(out.K);
  Vector ref = x;
  CHECK(corrupt_vector(ref, spec, 0, 5) == out.x);
  for (int j = 0; j < 3; ++j) {
    Vector col = K.col(j);
    corrupt_vector(col, spec, static_cast<std::uint64_t>(j + 1), 5);
    CHECK(col == out.K->col(j));
  }
  CHECK(out.K->col(0) != out.K->col(1));
  CHECK(!corrupt_process(x, nullptr, spec, 5).K);
}

TEST_CASE("noise level closed forms and Monte Carlo estimates") {
  SUBCASE("uniform(0, 5e-5), d = 900") {
    const auto spec = ProcessNoiseSpec::uniform(0.0, 5e-5, 2);
    CHECK(spec.expected_l1(900) == doctest::Approx(0.0225));
    std::vector<Vector> draws;
    for (int t = 0; t < 200; ++t) {
      Vector v = Vector::Zero(900);
      draws.push_back(corrupt_vector(v, spec, 0, static_cast<std::uint64_t>(t)));
    }
    CHECK(estimate_noise_level(draws) == doctest::Approx(0.0225).epsilon(0.05));
  }
  SUBCASE("round-off p = 4 on spread entries, d = 188") {
    const auto spec = ProcessNoiseSpec::round_to(4);
    CHECK(spec.expected_l1(188) == doctest::Approx(4.7e-3));
    CHECK(spec.worst_case_l1(188) == doctest::Approx(188 * 0.5e-4));
    std::vector<Vector> draws;
    for (int t = 0; t < 200; ++t) {
      Vector v(188);
      for (int i = 0; i < 188; ++i) {
        v(i) = uniform_draw(3, 0, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i), -10, 10);
      }
      draws.push_back(corrupt_vector(v, spec, 0, 0));
    }
    CHECK(estimate_noise_level(draws) == doctest::Approx(4.7e-3).epsilon(0.05));
  }
  SUBCASE("symmetric uniform range") {
    // E|U(-a, b)| = (a^2 + b^2) / (2 (a + b)).
    CHECK(ProcessNoiseSpec::uniform(-1e-3, 1e-3, 1).expected_l1(10) == doctest::Approx(5e-3));
    CHECK(ProcessNoiseSpec::uniform(-1.0, 3.0, 1).expected_l1(1) == doctest::Approx(10.0 / 8.0));
  }
  SUBCASE("all-zero draws and empty sample") {
    std::vector<Vector> zeros(3, Vector::Zero(4));
    CHECK(estimate_noise_level(zeros) == 0.0);
    CHECK_THROWS_AS(estimate_noise_level(std::span<const Vector>{}), std::invalid_argument);
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(ProcessNoiseSpec::uniform(1.0, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(ProcessNoiseSpec::round_to(-1), std::invalid_argument);
  }
}

TEST_CASE("noise meter averages l1 norms") {
  NoiseMeter meter;
  CHECK(meter.mean() == 0.0);
  meter.add((Vector(2) << 1.0, -1.0).finished());
  meter.add((Vector(2) << 0.0, 4.0).finished());
  CHECK(meter.count() == 2);
  CHECK(meter.mean() == 3.0);
}
