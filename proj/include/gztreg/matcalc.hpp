#pragma once

// Symmetric-matrix calculus: eigendecomposition, spectral matrix exponential
// and logarithm, strict-lower-triangle vectorization, and validated
// correlation matrices. Everything here is a pure function of its inputs.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "gztreg/errors.hpp"

namespace gztreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Relative cutoff below which an eigenvalue is treated as non-positive.
inline constexpr double kSpdTolerance = 1e-12;

inline bool is_finite(const Matrix& a) { return a.allFinite(); }
inline bool is_finite(const Vector& v) { return v.allFinite(); }

// Number of strict lower-triangle entries of an m x m matrix.
inline int pair_count(int m) { return m * (m - 1) / 2; }

// Column-major position of (j,k), j > k, within the strict lower triangle:
// (2,1),(3,1),...,(m,1),(3,2),...,(m,m-1) in 1-based terms. Indices 0-based.
inline int vecl_index(int j, int k, int m) {
  return k * m - k * (k + 1) / 2 + (j - k - 1);
}

// Matrix dimension m with m*(m-1)/2 == len, or -1 if len is not triangular.
inline int dim_from_pair_count(long len) {
  if (len < 0) return -1;
  if (len == 0) return 1;
  long m = static_cast<long>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(len))) / 2.0);
  for (long c = m - 1; c <= m + 1; ++c)
    if (c >= 1 && c * (c - 1) / 2 == len) return static_cast<int>(c);
  return -1;
}

// Symmetric matrix with a single stored value per unordered index pair.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(int dim) : dim_(dim), tri_(storage_size(dim), 0.0) {
    if (dim < 1) throw BadLengthError("SymmetricMatrix: dim must be >= 1");
  }

  // Uses the lower triangle of `a`; the upper triangle is ignored.
  static SymmetricMatrix from_dense(const Matrix& a) {
    if (a.rows() != a.cols()) throw BadLengthError("SymmetricMatrix: matrix not square");
    SymmetricMatrix s(static_cast<int>(a.rows()));
    for (int j = 0; j < s.dim_; ++j)
      for (int k = 0; k <= j; ++k) s.at(j, k) = a(j, k);
    return s;
  }

  static SymmetricMatrix identity(int dim) {
    SymmetricMatrix s(dim);
    for (int j = 0; j < dim; ++j) s.at(j, j) = 1.0;
    return s;
  }

  int dim() const { return dim_; }

  double operator()(int j, int k) const {
    return j >= k ? tri_[index(j, k)] : tri_[index(k, j)];
  }
  double& at(int j, int k) { return j >= k ? tri_[index(j, k)] : tri_[index(k, j)]; }

  Matrix dense() const {
    Matrix a(dim_, dim_);
    for (int j = 0; j < dim_; ++j)
      for (int k = 0; k <= j; ++k) a(j, k) = a(k, j) = tri_[index(j, k)];
    return a;
  }

  bool all_finite() const {
    for (double v : tri_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_abs() const {
    double r = 0.0;
    for (double v : tri_) r = std::max(r, std::abs(v));
    return r;
  }

 private:
  static std::size_t storage_size(int dim) {
    return static_cast<std::size_t>(dim) * (dim + 1) / 2;
  }
  std::size_t index(int j, int k) const {  // j >= k
    return static_cast<std::size_t>(j) * (j + 1) / 2 + k;
  }

  int dim_;
  std::vector<double> tri_;  // row-major lower triangle including diagonal
};

struct EigenDecomposition {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal, columns aligned with eigenvalues
};

inline EigenDecomposition eigh(const SymmetricMatrix& a) {
  if (!a.all_finite()) throw NonFiniteError("eigh: input contains NaN or Inf");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.dense());
  if (solver.info() != Eigen::Success)
    throw NoConvergenceError("eigh: eigensolver failed to converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

namespace detail {

// Q f(diag) Q', assembled one unordered pair at a time so the result is
// symmetric by construction.
inline SymmetricMatrix spectral_apply(const EigenDecomposition& es, const Vector& fvals) {
  const int m = static_cast<int>(es.eigenvalues.size());
  SymmetricMatrix out(m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k <= j; ++k) {
      double s = 0.0;
      for (int a = 0; a < m; ++a) s += es.eigenvectors(j, a) * fvals(a) * es.eigenvectors(k, a);
      out.at(j, k) = s;
    }
  return out;
}

inline void require_spd(const Vector& eigenvalues, const char* who) {
  const double lam_min = eigenvalues(0);
  const double lam_max = eigenvalues(eigenvalues.size() - 1);
  if (lam_min <= kSpdTolerance * std::max(1.0, lam_max))
    throw NotPositiveDefiniteError(std::string(who) + ": matrix is not positive definite");
}

}  // namespace detail

inline SymmetricMatrix matrix_log(const SymmetricMatrix& a) {
  EigenDecomposition es = eigh(a);
  detail::require_spd(es.eigenvalues, "matrix_log");
  return detail::spectral_apply(es, es.eigenvalues.array().log().matrix());
}

inline SymmetricMatrix matrix_exp(const SymmetricMatrix& a) {
  EigenDecomposition es = eigh(a);
  return detail::spectral_apply(es, es.eigenvalues.array().exp().matrix());
}

inline Vector vecl(const SymmetricMatrix& a) {
  const int m = a.dim();
  Vector v(pair_count(m));
  int idx = 0;
  for (int k = 0; k < m; ++k)
    for (int j = k + 1; j < m; ++j) v(idx++) = a(j, k);
  return v;
}

inline SymmetricMatrix vecl_inverse(const Vector& v, const Vector& diagonal) {
  const int m = static_cast<int>(diagonal.size());
  if (m < 1) throw BadLengthError("vecl_inverse: empty diagonal");
  if (static_cast<long>(v.size()) != pair_count(m))
    throw BadLengthError("vecl_inverse: vector length " + std::to_string(v.size()) +
                         " does not match dimension " + std::to_string(m));
  SymmetricMatrix out(m);
  for (int j = 0; j < m; ++j) out.at(j, j) = diagonal(j);
  int idx = 0;
  for (int k = 0; k < m; ++k)
    for (int j = k + 1; j < m; ++j) out.at(j, k) = v(idx++);
  return out;
}

// Symmetric positive definite matrix with unit diagonal and off-diagonal
// entries in (-1, 1). Validated at construction.
class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(const SymmetricMatrix& s) : sym_(s) {
    for (int j = 0; j < sym_.dim(); ++j) {
      if (std::abs(sym_(j, j) - 1.0) > 1e-12)
        throw InvalidCorrelationError("CorrelationMatrix: diagonal entry differs from 1");
      sym_.at(j, j) = 1.0;
      for (int k = 0; k < j; ++k)
        if (!(std::abs(sym_(j, k)) < 1.0))
          throw InvalidCorrelationError("CorrelationMatrix: off-diagonal entry outside (-1, 1)");
    }
    EigenDecomposition es = eigh(sym_);
    detail::require_spd(es.eigenvalues, "CorrelationMatrix");
  }

  static CorrelationMatrix identity(int m) {
    return CorrelationMatrix(SymmetricMatrix::identity(m), trusted_t{});
  }

  // Skips validation. For internal paths where the invariants hold by
  // construction (e.g. the exponential of a symmetric matrix).
  static CorrelationMatrix trusted(const SymmetricMatrix& s) {
    return CorrelationMatrix(s, trusted_t{});
  }

  int dim() const { return sym_.dim(); }
  double operator()(int j, int k) const { return sym_(j, k); }
  const SymmetricMatrix& matrix() const { return sym_; }
  Matrix dense() const { return sym_.dense(); }

 private:
  struct trusted_t {};
  CorrelationMatrix(SymmetricMatrix s, trusted_t) : sym_(std::move(s)) {}

  SymmetricMatrix sym_;
};

}  // namespace gztreg
