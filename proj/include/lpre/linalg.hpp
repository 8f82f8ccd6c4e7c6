#ifndef LPRE_LINALG_HPP
#define LPRE_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lpre/error.hpp"

/**
 * Dense linear algebra for the small symmetric systems that appear in the
 * estimators (p is 5 in every experiment, a few dozen at most).
 *
 * Matrices are square and stored row-major. Symmetric accumulations write the
 * upper triangle and mirror it, so a_ij == a_ji holds bit-for-bit no matter how
 * many terms are summed.
 */
namespace lpre {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double value = 0.0) : v_(n, value) {}
  Vector(std::initializer_list<double> init) : v_(init) {}
  explicit Vector(std::vector<double> values) : v_(std::move(values)) {}

  std::size_t size() const noexcept { return v_.size(); }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  std::span<double> span() noexcept { return v_; }
  std::span<const double> span() const noexcept { return v_; }
  const std::vector<double>& values() const noexcept { return v_; }

  auto begin() noexcept { return v_.begin(); }
  auto end() noexcept { return v_.end(); }
  auto begin() const noexcept { return v_.begin(); }
  auto end() const noexcept { return v_.end(); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> v_;
};

class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t dim, double value = 0.0) : dim_(dim), a_(dim * dim, value) {}

  /// Row-major initializer, e.g. Matrix::from_rows({{2, 1}, {1, 2}}).
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size());
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != m.dim_) throw Error(ErrorCode::DimensionMismatch, "matrix rows must be square");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  static Matrix identity(std::size_t dim) {
    Matrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(const Vector& d) {
    Matrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }
  double& operator()(std::size_t i, std::size_t j) { return a_[i * dim_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * dim_ + j]; }

  std::span<double> span() noexcept { return a_; }
  std::span<const double> span() const noexcept { return a_; }
  const std::vector<double>& values() const noexcept { return a_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> a_;
};

namespace detail {

inline void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail

inline Vector operator+(const Vector& a, const Vector& b) {
  detail::require_same(a.size(), b.size(), "vector add");
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vector operator-(const Vector& a, const Vector& b) {
  detail::require_same(a.size(), b.size(), "vector subtract");
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vector operator*(double s, const Vector& a) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
  return r;
}

inline Vector& operator+=(Vector& a, const Vector& b) {
  detail::require_same(a.size(), b.size(), "vector add");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline double dot(const Vector& a, const Vector& b) {
  detail::require_same(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_inf(const Vector& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(const Vector& a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  detail::require_same(a.dim(), b.dim(), "matrix add");
  Matrix r(a.dim());
  for (std::size_t k = 0; k < a.values().size(); ++k) r.span()[k] = a.span()[k] + b.span()[k];
  return r;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  detail::require_same(a.dim(), b.dim(), "matrix subtract");
  Matrix r(a.dim());
  for (std::size_t k = 0; k < a.values().size(); ++k) r.span()[k] = a.span()[k] - b.span()[k];
  return r;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix r(a.dim());
  for (std::size_t k = 0; k < a.values().size(); ++k) r.span()[k] = s * a.span()[k];
  return r;
}

inline Matrix& operator+=(Matrix& a, const Matrix& b) {
  detail::require_same(a.dim(), b.dim(), "matrix add");
  for (std::size_t k = 0; k < a.values().size(); ++k) a.span()[k] += b.span()[k];
  return a;
}

inline Vector operator*(const Matrix& a, const Vector& x) {
  detail::require_same(a.dim(), x.size(), "matrix-vector product");
  const std::size_t n = a.dim();
  Vector r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a(i, j) * x[j];
    r[i] = s;
  }
  return r;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  detail::require_same(a.dim(), b.dim(), "matrix product");
  const std::size_t n = a.dim();
  Matrix r(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < n; ++j) r(i, j) += aik * b(k, j);
    }
  }
  return r;
}

inline Matrix transpose(const Matrix& a) {
  Matrix r(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) r(j, i) = a(i, j);
  return r;
}

/// Max absolute row sum.
inline double norm_inf(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.dim(); ++j) s += std::abs(a(i, j));
    m = std::max(m, s);
  }
  return m;
}

inline double norm_frobenius(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

/// Replaces the lower triangle with the upper one.
inline Matrix mirror_upper(Matrix a) {
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
  return a;
}

/// (A + Aᵀ)/2, used after products that are symmetric only in exact arithmetic.
inline Matrix symmetrize(const Matrix& a) {
  Matrix r(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) {
    r(i, i) = a(i, i);
    for (std::size_t j = i + 1; j < a.dim(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

/// True when |a_ij - a_ji| <= 1e-10 * max(1, |a_ij|) for all pairs.
inline bool is_symmetric(const Matrix& a, double rel = 1e-10) {
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = i + 1; j < a.dim(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > rel * std::max(1.0, std::abs(a(i, j)))) return false;
  return true;
}

/// acc + w * x * xᵀ, upper triangle computed then mirrored.
inline Matrix sym_outer_accumulate(Matrix acc, const Vector& x, double w) {
  detail::require_same(acc.dim(), x.size(), "outer product");
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double wxi = w * x[i];
    for (std::size_t j = i; j < n; ++j) acc(i, j) += wxi * x[j];
  }
  return mirror_upper(std::move(acc));
}

/**
 * Cholesky factorization A = L Lᵀ of a symmetric positive definite matrix.
 *
 * A pivot d_j (the diagonal entry before its square root) is rejected when
 * d_j <= p * 2^-52 * max_i a_ii, which makes the test invariant to an overall
 * rescaling of A.
 */
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a) : l_(a.dim()) {
    const std::size_t n = a.dim();
    if (n == 0) throw Error(ErrorCode::DimensionMismatch, "empty matrix");
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a(i, i));
    const double tol = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * max_diag;
    for (std::size_t j = 0; j < n; ++j) {
      double d = a(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
      if (!(d > tol)) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "pivot %zu is %.3g (tolerance %.3g)", j, d, tol);
        throw Error(ErrorCode::NotPositiveDefinite, msg);
      }
      const double ljj = std::sqrt(d);
      l_(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
        l_(i, j) = s / ljj;
      }
    }
  }

  std::size_t dim() const noexcept { return l_.dim(); }
  const Matrix& lower() const noexcept { return l_; }

  Vector solve(const Vector& b) const {
    detail::require_same(l_.dim(), b.size(), "solve");
    const std::size_t n = l_.dim();
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * y[k];
      y[i] = s / l_(i, i);
    }
    Vector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= l_(k, ii) * x[k];
      x[ii] = s / l_(ii, ii);
    }
    return x;
  }

  /// A⁻¹ B, column by column.
  Matrix solve(const Matrix& b) const {
    detail::require_same(l_.dim(), b.dim(), "solve");
    const std::size_t n = l_.dim();
    Matrix x(n);
    Vector col(n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = b(i, j);
      const Vector s = solve(col);
      for (std::size_t i = 0; i < n; ++i) x(i, j) = s[i];
    }
    return x;
  }

  Matrix inverse() const { return symmetrize(solve(Matrix::identity(l_.dim()))); }

 private:
  Matrix l_;
};

inline Vector solve_spd(const Matrix& a, const Vector& b) {
  detail::require_same(a.dim(), b.size(), "solve_spd");
  return Cholesky(a).solve(b);
}

inline Matrix invert_spd(const Matrix& a) { return Cholesky(a).inverse(); }

}  // namespace lpre

#endif  // LPRE_LINALG_HPP
