#pragma once

// The generalized z-transformation: gamma = vecl(log R) maps a correlation
// matrix to an unconstrained vector. This header provides the forward map,
// the fixed-point inverse, the analytic Jacobian d rho / d gamma, and
// permutation utilities for the order-invariance property.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "gztreg/matcalc.hpp"

namespace gztreg {

inline constexpr int kGztInverseMaxIterations = 200;
inline constexpr double kGztInverseTolerance = 1e-12;
inline constexpr double kXiRepeatedEigTolerance = 1e-10;

// Unconstrained image of a correlation matrix; length dim*(dim-1)/2.
struct GztVector {
  Vector values;
  int dim;

  GztVector(Vector v, int m) : values(std::move(v)), dim(m) {
    if (static_cast<long>(values.size()) != pair_count(m))
      throw BadLengthError("GztVector: length does not match dimension");
  }

  static GztVector from_values(Vector v) {
    const int m = dim_from_pair_count(v.size());
    if (m < 0) throw BadLengthError("GztVector: length is not triangular");
    return GztVector(std::move(v), m);
  }
};

inline GztVector gzt_forward(const CorrelationMatrix& r) {
  return GztVector(vecl(matrix_log(r.matrix())), r.dim());
}

// Inverse map via the diagonal fixed point x_k = x_{k-1} - log diag(e^{G[x]}).
// Starts from x = 0 and stops when the sup-norm update falls below 1e-12;
// throws MaxIterationsError if 200 iterations do not suffice (extreme gamma).
inline CorrelationMatrix gzt_inverse(const GztVector& gamma, int* iterations = nullptr) {
  if (!is_finite(gamma.values)) throw NonFiniteError("gzt_inverse: gamma contains NaN or Inf");
  const int m = gamma.dim;
  SymmetricMatrix g = vecl_inverse(gamma.values, Vector::Zero(m));
  Vector x = Vector::Zero(m);
  bool done = false;
  int used = 0;
  for (int it = 0; it < kGztInverseMaxIterations && !done; ++it) {
    ++used;
    for (int j = 0; j < m; ++j) g.at(j, j) = x(j);
    SymmetricMatrix e = matrix_exp(g);
    double step = 0.0;
    for (int j = 0; j < m; ++j) {
      const double d = e(j, j);
      if (!(d > 0.0) || !std::isfinite(d))
        throw MaxIterationsError("gzt_inverse: iteration left the admissible region");
      const double upd = std::log(d);
      step = std::max(step, std::abs(upd));
      x(j) -= upd;
    }
    done = step < kGztInverseTolerance;
  }
  if (!done) throw MaxIterationsError("gzt_inverse: fixed point not reached in 200 iterations");
  if (iterations) *iterations = used;
  for (int j = 0; j < m; ++j) g.at(j, j) = x(j);
  SymmetricMatrix r = matrix_exp(g);
  for (int j = 0; j < m; ++j) r.at(j, j) = 1.0;
  return CorrelationMatrix::trusted(r);
}

// Intermediates of the Jacobian formula
//   d rho / d gamma = E_l (I - A E_d'(E_d A E_d')^{-1} E_d) A (E_l + E_u)'
// with A = (Q x Q) Xi (Q x Q)' the derivative of the matrix exponential at
// log R. The elimination maps are kept as index tables into vec(.), never as
// dense m^2 x m^2 selection matrices.
struct JacobianWorkspace {
  Matrix a;                      // m^2 x m^2, symmetric positive definite
  Matrix b;                      // m^2 x m^2, symmetric positive semidefinite
  Vector xi;                     // diagonal of Xi, strictly positive
  std::vector<int> lower_index;  // vec positions selected by E_l, vecl order
  std::vector<int> upper_index;  // vec positions selected by E_u
  std::vector<int> diag_index;   // vec positions selected by E_d
};

inline JacobianWorkspace gzt_jacobian_workspace(const CorrelationMatrix& r,
                                                double xi_tol = kXiRepeatedEigTolerance) {
  const int m = r.dim();
  EigenDecomposition es = eigh(r.matrix());
  detail::require_spd(es.eigenvalues, "gzt_jacobian");
  // log R shares eigenvectors with R; its eigenvalues are the logs.
  const Vector lam = es.eigenvalues.array().log().matrix();
  const Matrix& q = es.eigenvectors;

  const int mm = m * m;
  JacobianWorkspace ws;
  ws.xi.resize(mm);
  for (int b = 0; b < m; ++b)
    for (int a = 0; a < m; ++a) {
      const double d = lam(a) - lam(b);
      double v;
      if (std::abs(d) < xi_tol) {
        v = std::exp(lam(a));
      } else {
        // (e^x - e^y)/(x - y) in a cancellation-free form
        v = std::exp(0.5 * (lam(a) + lam(b))) * std::sinh(0.5 * d) / (0.5 * d);
      }
      ws.xi(a + m * b) = v;
    }

  Matrix k(mm, mm);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i)
      for (int b = 0; b < m; ++b)
        for (int a = 0; a < m; ++a) k(i + m * j, a + m * b) = q(i, a) * q(j, b);
  ws.a.noalias() = k * ws.xi.asDiagonal() * k.transpose();

  ws.lower_index.reserve(pair_count(m));
  ws.upper_index.reserve(pair_count(m));
  ws.diag_index.reserve(m);
  for (int c = 0; c < m; ++c)
    for (int j = c + 1; j < m; ++j) {
      ws.lower_index.push_back(j + m * c);
      ws.upper_index.push_back(c + m * j);
    }
  for (int j = 0; j < m; ++j) ws.diag_index.push_back(j + m * j);

  Matrix ad(mm, m);
  for (int c = 0; c < m; ++c) ad.col(c) = ws.a.col(ws.diag_index[c]);
  Matrix dm(m, m);
  for (int rr = 0; rr < m; ++rr)
    for (int cc = 0; cc < m; ++cc) dm(rr, cc) = ws.a(ws.diag_index[rr], ws.diag_index[cc]);
  dm = 0.5 * (dm + dm.transpose().eval());
  ws.b.noalias() = ws.a - ad * dm.ldlt().solve(ad.transpose());
  ws.b = 0.5 * (ws.b + ws.b.transpose().eval());
  return ws;
}

// d rho / d gamma, rows and columns in vecl order. Diagonal entries are
// nonnegative up to roundoff.
inline Matrix gzt_jacobian(const CorrelationMatrix& r,
                           double xi_tol = kXiRepeatedEigTolerance) {
  const JacobianWorkspace ws = gzt_jacobian_workspace(r, xi_tol);
  const int np = static_cast<int>(ws.lower_index.size());
  Matrix jac(np, np);
  for (int row = 0; row < np; ++row)
    for (int col = 0; col < np; ++col)
      jac(row, col) = ws.b(ws.lower_index[row], ws.lower_index[col]) +
                      ws.b(ws.lower_index[row], ws.upper_index[col]);
  return jac;
}

inline void validate_permutation(const std::vector<int>& perm, int m) {
  if (static_cast<int>(perm.size()) != m)
    throw BadPermutationError("permutation size does not match dimension");
  std::vector<bool> seen(m, false);
  for (int v : perm) {
    if (v < 0 || v >= m || seen[v]) throw BadPermutationError("not a bijection on 0..m-1");
    seen[v] = true;
  }
}

// out(i, j) = in(perm[i], perm[j]); the image of R under P R P'.
inline CorrelationMatrix permute(const CorrelationMatrix& r, const std::vector<int>& perm) {
  const int m = r.dim();
  validate_permutation(perm, m);
  SymmetricMatrix out(m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k <= j; ++k) out.at(j, k) = r(perm[j], perm[k]);
  return CorrelationMatrix::trusted(out);
}

// Pair-index relabelling induced by an observation permutation: entry p of
// the result is the vecl position, before permuting, of the pair that lands
// at vecl position p afterwards.
inline std::vector<int> pair_permutation(const std::vector<int>& perm, int m) {
  validate_permutation(perm, m);
  std::vector<int> map(pair_count(m));
  for (int k = 0; k < m; ++k)
    for (int j = k + 1; j < m; ++j) {
      const int a = std::max(perm[j], perm[k]);
      const int b = std::min(perm[j], perm[k]);
      map[vecl_index(j, k, m)] = vecl_index(a, b, m);
    }
  return map;
}

inline GztVector permute_pairs(const GztVector& gamma, const std::vector<int>& perm) {
  const std::vector<int> map = pair_permutation(perm, gamma.dim);
  Vector out(gamma.values.size());
  for (int p = 0; p < static_cast<int>(map.size()); ++p) out(p) = gamma.values(map[p]);
  return GztVector(std::move(out), gamma.dim);
}

}  // namespace gztreg
