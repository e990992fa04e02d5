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

#include "dynrollout/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dynrollout {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Cholesky solve of the SPD system M x = rhs (in place on rhs).
Matrix cholesky_solve(Matrix m, Matrix rhs) {
  const std::size_t n = m.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t p = 0; p < j; ++p) d -= m(j, p) * m(j, p);
    if (!(d > 0.0)) throw NumericalError("cholesky: matrix not positive definite");
    d = std::sqrt(d);
    m(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = m(i, j);
      for (std::size_t p = 0; p < j; ++p) v -= m(i, p) * m(j, p);
      m(i, j) = v / d;
    }
  }
  for (std::size_t c = 0; c < rhs.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = rhs(i, c);
      for (std::size_t p = 0; p < i; ++p) v -= m(i, p) * rhs(p, c);
      rhs(i, c) = v / m(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double v = rhs(i, c);
      for (std::size_t p = i + 1; p < n; ++p) v -= m(p, i) * rhs(p, c);
      rhs(i, c) = v / m(i, i);
    }
  }
  return rhs;
}

Matrix ridge_solve(const Matrix& x, const Matrix& b) {
  const std::size_t k = x.cols();
  Matrix xt = x.transpose();
  Matrix gram = xt * x;
  double trace = 0.0;
  for (std::size_t i = 0; i < k; ++i) trace += gram(i, i);
  if (trace == 0.0) return Matrix(k, b.cols(), 0.0);
  const double lambda = 1e-10 * trace / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) gram(i, i) += lambda;
  return cholesky_solve(std::move(gram), xt * b);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  return Matrix(v.size(), 1, Vector(v.begin(), v.end()));
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const { return dynrollout::all_finite(data_); }

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      auto brow = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add: " + shape_str(a) + " + " + shape_str(b));
  }
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("sub: " + shape_str(a) + " - " + shape_str(b));
  }
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  Vector y(a.rows(), 0.0);
  matvec_add(a, x, y);
  return y;
}

void matvec_add(const Matrix& a, std::span<const double> x, std::span<double> y) {
  if (a.cols() != x.size() || a.rows() != y.size()) {
    throw ShapeError("matvec: " + shape_str(a) + " with vector of length " +
                     std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += r[j] * x[j];
    y[i] += acc;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector add(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("add: length mismatch");
  Vector c(a.begin(), a.end());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Vector sub(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("sub: length mismatch");
  Vector c(a.begin(), a.end());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Matrix solve_least_squares(const Matrix& x, const Matrix& b) {
  const std::size_t n = x.rows();
  const std::size_t k = x.cols();
  if (n == 0 || k == 0) throw ShapeError("least squares: empty design matrix");
  if (b.rows() != n) {
    throw ShapeError("least squares: X is " + shape_str(x) + " but b is " + shape_str(b));
  }
  if (!x.all_finite()) throw NumericalError("least squares: non-finite design matrix");
  if (n < k) return ridge_solve(x, b);

  Matrix r = x;
  Matrix qtb = b;
  Vector v(n);
  for (std::size_t j = 0; j < k; ++j) {
    double alpha = 0.0;
    for (std::size_t i = j; i < n; ++i) alpha += r(i, j) * r(i, j);
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (r(j, j) > 0.0) alpha = -alpha;
    for (std::size_t i = 0; i < j; ++i) v[i] = 0.0;
    for (std::size_t i = j; i < n; ++i) v[i] = r(i, j);
    v[j] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = j; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    auto reflect = [&](Matrix& m) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        double s = 0.0;
        for (std::size_t i = j; i < n; ++i) s += v[i] * m(i, c);
        s = 2.0 * s / vnorm2;
        for (std::size_t i = j; i < n; ++i) m(i, c) -= s * v[i];
      }
    };
    reflect(r);
    reflect(qtb);
  }

  double max_diag = 0.0;
  for (std::size_t j = 0; j < k; ++j) max_diag = std::max(max_diag, std::abs(r(j, j)));
  for (std::size_t j = 0; j < k; ++j) {
    if (!(std::abs(r(j, j)) > 1e-12 * max_diag)) return ridge_solve(x, b);
  }

  Matrix w(k, b.cols());
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = k; i-- > 0;) {
      double s = qtb(i, c);
      for (std::size_t p = i + 1; p < k; ++p) s -= r(i, p) * w(p, c);
      w(i, c) = s / r(i, i);
    }
  }
  return w;
}

Matrix solve_linear(Matrix a, Matrix b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.rows() != n) {
    throw ShapeError("solve: A is " + shape_str(a) + ", b is " + shape_str(b));
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t i = col + 1; i < n; ++i)
      if (std::abs(a(i, col)) > std::abs(a(piv, col))) piv = i;
    if (a(piv, col) == 0.0) throw NumericalError("solve: singular matrix");
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(piv, c), a(col, c));
      for (std::size_t c = 0; c < b.cols(); ++c) std::swap(b(piv, c), b(col, c));
    }
    for (std::size_t i = col + 1; i < n; ++i) {
      const double f = a(i, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a(i, c) -= f * a(col, c);
      for (std::size_t c = 0; c < b.cols(); ++c) b(i, c) -= f * b(col, c);
    }
  }
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = n; i-- > 0;) {
      double s = b(i, c);
      for (std::size_t p = i + 1; p < n; ++p) s -= a(i, p) * b(p, c);
      b(i, c) = s / a(i, i);
    }
  }
  return b;
}

Vector matrix_power_apply(const Matrix& a, std::span<const double> x, std::size_t k) {
  if (a.rows() != a.cols()) throw ShapeError("matrix power: non-square " + shape_str(a));
  if (a.cols() != x.size()) throw ShapeError("matrix power: vector length mismatch");
  Vector y(x.begin(), x.end());
  for (std::size_t i = 0; i < k; ++i) y = matvec(a, y);
  return y;
}

double infinity_norm(const Matrix& a) {
  double best = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (double v : a.row(r)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PercentileSummary percentiles(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("percentiles: empty sample");
  if (!all_finite(values)) throw std::invalid_argument("percentiles: non-finite sample");
  Vector sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return {percentile(sorted, 0.50), percentile(sorted, 0.65), percentile(sorted, 0.95)};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  for (std::uint64_t i = 0; i < 4; ++i) s_[i] = splitmix64(seed + i * 0x9e3779b97f4a7c15ULL);
}

std::uint64_t Rng::next_u64() {
  auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
  if (hi == lo) return lo;
  const double v = lo + (hi - lo) * uniform01();
  return v < hi ? v : std::nextafter(hi, lo);
}

double Rng::normal(double mean, double stddev) {
  if (stddev < 0.0) throw std::invalid_argument("normal: negative standard deviation");
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  double u1 = uniform01();
  while (u1 == 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return mean + stddev * radius * std::cos(angle);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("index: empty range");
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % n);
}

}  // namespace dynrollout
