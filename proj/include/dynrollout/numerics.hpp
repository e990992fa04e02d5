// Copyright 2026 The dynrollout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense linear algebra, seedable sampling and percentile statistics shared by
// every other part of the library. Everything is double precision.

#ifndef DYNROLLOUT_NUMERICS_HPP_
#define DYNROLLOUT_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynrollout {

using Vector = std::vector<double>;

// Raised when operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a numerical procedure cannot produce a meaningful result
// (divergence, non-convergence, degenerate input).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  // Single-column matrix holding v.
  static Matrix column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transpose() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

// y = A x
Vector matvec(const Matrix& a, std::span<const double> x);
// y += A x
void matvec_add(const Matrix& a, std::span<const double> x, std::span<double> y);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
Vector add(std::span<const double> a, std::span<const double> b);
Vector sub(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> v);

// Least-squares solution of X w = b for every column of b. Householder QR;
// falls back to a ridge solve with lambda = 1e-10 * trace(X^T X) / k when R
// has a near-zero diagonal (rank-deficient or underdetermined X).
Matrix solve_least_squares(const Matrix& x, const Matrix& b);

// Solves the square system A x = b with partially pivoted Gaussian
// elimination. Throws NumericalError on a singular matrix.
Matrix solve_linear(Matrix a, Matrix b);

// A^k x by repeated multiplication.
Vector matrix_power_apply(const Matrix& a, std::span<const double> x, std::size_t k);

// Maximum absolute row sum.
double infinity_norm(const Matrix& a);

struct PercentileSummary {
  double p50 = 0.0;
  double p65 = 0.0;
  double p95 = 0.0;
};

// Linear interpolation between closest ranks: position q * (n - 1) in the
// sorted sample.
double percentile(std::span<const double> sorted, double q);
PercentileSummary percentiles(std::span<const double> values);

// xoshiro256** seeded through splitmix64. Normal variates use Box-Muller so
// the stream is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform01();
  // Uniform in [lo, hi); returns lo when lo == hi.
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
// Independent stream seed for cell/member/trajectory `index` under `root`.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace dynrollout

#endif  // DYNROLLOUT_NUMERICS_HPP_
