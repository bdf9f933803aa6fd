// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major double matrices and the handful of kernels the recurrent
// layers need. Every kernel sums in a fixed loop order, so results are
// bit-reproducible for fixed inputs on a given platform.
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace procrnn {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  /// Builds a matrix from nested row lists; all rows must have equal length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(double v);
  /// First `n` rows as a new matrix.
  Matrix top_rows(std::size_t n) const;

  /// Bitwise element equality (NaN payloads aside).
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Products. Dimension mismatches throw std::logic_error.
Matrix matmul(const Matrix& a, const Matrix& b);     // a · b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a · bᵀ
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // aᵀ · b
/// out += aᵀ · b
void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out);
Matrix transpose(const Matrix& m);

// Elementwise. Shape mismatches throw std::logic_error.
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& acc, const Matrix& b);
/// Adds the 1×cols row vector `bias` to every row of `m`.
void add_row_broadcast(Matrix& m, const Matrix& bias);
/// Adds each column's sum over the rows of `m` into the 1×cols `acc`.
void accumulate_column_sums(const Matrix& m, Matrix& acc);

double sigmoid(double x) noexcept;
Matrix sigmoid(const Matrix& m);
Matrix tanh(const Matrix& m);
/// Per row: subtract the row max, exponentiate, normalize.
Matrix softmax_rows(const Matrix& m);

double sum_of_squares(const Matrix& m) noexcept;
bool all_finite(const Matrix& m) noexcept;

/// Deterministic generator: the standard 64-bit Mersenne Twister (mt19937_64).
/// Conversions to doubles and indices are done here rather than through
/// <random> distributions, whose outputs vary between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n) by rejection sampling; n > 0.
  std::size_t below(std::size_t n);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

Rng seeded_rng(std::uint64_t seed);

/// I.i.d. uniform draws in [lo, hi); throws ConfigError unless lo < hi.
Matrix seeded_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);

}  // namespace procrnn
