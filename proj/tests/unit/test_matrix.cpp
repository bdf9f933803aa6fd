// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "procrnn/errors.hpp"
#include "procrnn/matrix.hpp"

using namespace procrnn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) { return seeded_uniform(r, c, -1.0, 1.0, rng); }

}  // namespace

TEST_CASE("matmul by identity returns the other operand") {
  Rng rng(1);
  const Matrix b = random_matrix(3, 4, rng);
  CHECK(matmul(Matrix::identity(3), b) == b);
}

TEST_CASE("matmul hand example") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5}, {6}});
  CHECK(matmul(a, b) == Matrix::from_rows({{17}, {39}}));
}

TEST_CASE("matmul variants equal the naive triple loop bit for bit") {
  Rng rng(7);
  const Matrix a = random_matrix(7, 5, rng);
  const Matrix b = random_matrix(5, 3, rng);
  const auto expected = testing::naive_matmul(a, b);
  const Matrix direct = matmul(a, b);
  const Matrix nt = matmul_nt(a, transpose(b));
  const Matrix tn = matmul_tn(transpose(a), b);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(direct(i, j) == expected[i][j]);
      CHECK(nt(i, j) == expected[i][j]);
      CHECK(tn(i, j) == expected[i][j]);
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), std::logic_error);
  CHECK_THROWS_AS(add(Matrix(2, 3), Matrix(3, 2)), std::logic_error);
  CHECK_THROWS_AS(hadamard(Matrix(1, 3), Matrix(3, 1)), std::logic_error);
}

TEST_CASE("identity and distributivity hold on random matrices") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(4, 3, rng);
    const Matrix b = random_matrix(3, 5, rng);
    const Matrix c = random_matrix(3, 5, rng);
    const Matrix lhs = matmul(a, add(b, c));
    const Matrix rhs = add(matmul(a, b), matmul(a, c));
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs.values()[i] - rhs.values()[i]) < 1e-10);
    const Matrix ai = matmul(Matrix::identity(4), matmul(a, Matrix::identity(3)));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(ai.values()[i] - a.values()[i]) < 1e-10);
  }
}

TEST_CASE("sigmoid and tanh basics") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::tanh(0.0) == 0.0);
  const double tiny = sigmoid(-1000.0);
  CHECK(std::isfinite(tiny));
  CHECK(tiny >= 0.0);
  CHECK(tiny <= 1e-300);
  CHECK(sigmoid(1000.0) == 1.0);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-40.0, 40.0);
    CHECK(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-15);
  }
  const Matrix t = procrnn::tanh(Matrix::from_rows({{0.0, 1.0}}));
  CHECK(t(0, 0) == 0.0);
  CHECK(t(0, 1) == std::tanh(1.0));
}

TEST_CASE("softmax rows") {
  const Matrix s = softmax_rows(Matrix::from_rows({{0, 0}, {1000, 0}}));
  CHECK(s(0, 0) == 0.5);
  CHECK(s(0, 1) == 0.5);
  CHECK(s(1, 0) == 1.0);
  CHECK(s(1, 1) >= 0.0);
  CHECK(s(1, 1) < 1e-300);

  const Matrix r = softmax_rows(Matrix::from_rows({{std::log(1.0), std::log(2.0), std::log(3.0)}}));
  CHECK(std::abs(r(0, 0) - 1.0 / 6.0) < 1e-12);
  CHECK(std::abs(r(0, 1) - 2.0 / 6.0) < 1e-12);
  CHECK(std::abs(r(0, 2) - 3.0 / 6.0) < 1e-12);

  Rng rng(5);
  const Matrix m = seeded_uniform(10, 4, -30.0, 30.0, rng);
  const Matrix p = softmax_rows(m);
  for (std::size_t i = 0; i < 10; ++i) {
    double total = 0.0;
    for (double v : p.row(i)) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("seeded generator is deterministic and unbiased") {
  Rng a(42), b(42);
  CHECK(seeded_uniform(3, 4, -1.0, 1.0, a) == seeded_uniform(3, 4, -1.0, 1.0, b));

  // Law of large numbers: mean of 1e5 U(0,1) draws has sd ≈ 0.0009.
  Rng rng(123);
  const Matrix m = seeded_uniform(1000, 100, 0.0, 1.0, rng);
  double total = 0.0;
  for (double v : m.values()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    total += v;
  }
  CHECK(std::abs(total / 1e5 - 0.5) < 0.01);

  CHECK_THROWS_AS(seeded_uniform(2, 2, 1.0, 1.0, rng), ConfigError);
  CHECK_THROWS_AS(seeded_uniform(2, 2, 1.0, 0.0, rng), ConfigError);
}

TEST_CASE("rng index draws stay in range and shuffle permutes") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(std::span<int>(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("all_finite detects NaN and Inf") {
  Matrix m(2, 2, 1.0);
  CHECK(all_finite(m));
  m(1, 1) = std::nan("");
  CHECK_FALSE(all_finite(m));
  m(1, 1) = INFINITY;
  CHECK_FALSE(all_finite(m));
}
