// SPDX-License-Identifier: Apache-2.0
#include "procrnn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "procrnn/errors.hpp"

namespace procrnn {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::logic_error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

#ifdef PROCRNN_CHECKED
const Matrix& checked(const Matrix& m, const char* op) {
  if (!all_finite(m)) throw std::domain_error(std::string(op) + ": non-finite result");
  return m;
}
#define PROCRNN_CHECK(m, op) checked((m), (op))
#else
#define PROCRNN_CHECK(m, op) ((void)0)
#endif

}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw std::logic_error("from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
    ++i;
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::top_rows(std::size_t n) const {
  if (n > rows_) throw std::logic_error("top_rows: not enough rows");
  Matrix out(n, cols_);
  std::copy_n(data_.begin(), n * cols_, out.data_.begin());
  return out;
}

// The i-k-j order below accumulates out(i, j) over k ascending, which is the
// same rounding sequence as the textbook triple loop.
Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
    }
  }
  PROCRNN_CHECK(out, "matmul");
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  PROCRNN_CHECK(out, "matmul_nt");
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  matmul_tn_accumulate(a, b, out);
  return out;
}

void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
    shape_error("matmul_tn", a, b);
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aki * br[j];
    }
  }
  PROCRNN_CHECK(out, "matmul_tn");
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape("add", a, b);
  Matrix out = a;
  add_in_place(out, b);
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape("sub", a, b);
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  PROCRNN_CHECK(out, "sub");
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape("hadamard", a, b);
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  PROCRNN_CHECK(out, "hadamard");
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  PROCRNN_CHECK(out, "scale");
  return out;
}

void add_in_place(Matrix& acc, const Matrix& b) {
  require_same_shape("add", acc, b);
  auto o = acc.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  PROCRNN_CHECK(acc, "add");
}

void add_row_broadcast(Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) shape_error("add_row_broadcast", m, bias);
  const double* b = bias.row(0).data();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* r = m.row(i).data();
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += b[j];
  }
  PROCRNN_CHECK(m, "add_row_broadcast");
}

void accumulate_column_sums(const Matrix& m, Matrix& acc) {
  if (acc.rows() != 1 || acc.cols() != m.cols()) shape_error("column_sums", m, acc);
  double* a = acc.row(0).data();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* r = m.row(i).data();
    for (std::size_t j = 0; j < m.cols(); ++j) a[j] += r[j];
  }
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.values()) v = sigmoid(v);
  PROCRNN_CHECK(out, "sigmoid");
  return out;
}

Matrix tanh(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.values()) v = std::tanh(v);
  PROCRNN_CHECK(out, "tanh");
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double total = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : r) v /= total;
  }
  PROCRNN_CHECK(out, "softmax_rows");
  return out;
}

double sum_of_squares(const Matrix& m) noexcept {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return s;
}

bool all_finite(const Matrix& m) noexcept {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::logic_error("Rng::below: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Largest multiple of bound that fits; draws above it are rejected.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  std::uint64_t x = next();
  while (x > limit) x = next();
  return static_cast<std::size_t>(x % bound);
}

Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

Matrix seeded_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  if (!(lo < hi)) throw ConfigError("seeded_uniform: require lo < hi");
  Matrix out(rows, cols);
  for (double& v : out.values()) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace procrnn
