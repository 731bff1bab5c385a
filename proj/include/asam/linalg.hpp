#pragma once

// Dense linear algebra used by the alignment objective and the model.
//
// Everything is templated on the scalar type and takes Eigen expressions;
// the rest of the library instantiates it with double only.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "asam/errors.hpp"

namespace asam {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

/// Thin singular value decomposition m = u * diag(sigma) * v^T.
///
/// u is rows x k and v is cols x k with k = min(rows, cols); both have
/// orthonormal columns. sigma is sorted nonincreasing. The largest-magnitude
/// entry of every column of u is nonnegative.
template <typename Scalar>
struct SvdFactors {
  MatrixX<Scalar> u;
  VectorX<Scalar> sigma;
  MatrixX<Scalar> v;
  int sweeps = 0;
};

namespace linalg {

inline constexpr double kRowNormFloor = 1e-12;
inline constexpr double kJacobiTolerance = 1e-14;
inline constexpr int kJacobiMaxSweeps = 60;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + ": non-finite entry");
}

/// Exact elementwise equality; false when the shapes differ.
template <typename DerivedA, typename DerivedB>
bool same_values(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

/// Matrix product accumulated as row-by-row inner products in index order.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  require_finite(a, "matmul");
  require_finite(b, "matmul");
  MatrixX<Scalar> out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      Scalar acc = 0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

/// Scales every row to unit l2 norm. Throws DegenerateRowError when a row
/// norm is at or below 1e-12.
template <typename Derived>
MatrixX<typename Derived::Scalar> row_l2_normalize(const Eigen::MatrixBase<Derived>& m) {
  MatrixX<typename Derived::Scalar> out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const auto norm = out.row(i).norm();
    if (!(norm > kRowNormFloor)) {
      throw DegenerateRowError("row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
    out.row(i) /= norm;
  }
  return out;
}

/// G = m m^T, filled symmetrically from the upper triangle.
template <typename Derived>
MatrixX<typename Derived::Scalar> gram(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  require_finite(m, "gram");
  const Eigen::Index n = m.rows();
  MatrixX<Scalar> g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      Scalar acc = 0;
      for (Eigen::Index k = 0; k < m.cols(); ++k) acc += m(i, k) * m(j, k);
      g(i, j) = acc;
      g(j, i) = acc;
    }
  }
  return g;
}

namespace detail {

// Hestenes one-sided Jacobi on the columns of `work` (tall or square).
// Rotations are accumulated into `v`. Returns the number of sweeps used.
template <typename Scalar>
int one_sided_jacobi(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& work,
                     Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& v) {
  const Eigen::Index n = work.cols();
  v.setIdentity(n, n);
  // Columns at roundoff level relative to the whole matrix count as zero.
  const Scalar negligible = std::pow(std::numeric_limits<Scalar>::epsilon() * work.norm(), 2);
  for (int sweep = 1; sweep <= kJacobiMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar alpha = work.col(p).squaredNorm();
        const Scalar beta = work.col(q).squaredNorm();
        if (alpha <= negligible || beta <= negligible) continue;
        const Scalar gamma = work.col(p).dot(work.col(q));
        if (std::abs(gamma) <= Scalar(kJacobiTolerance) * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Eigen::Index i = 0; i < work.rows(); ++i) {
          const Scalar ap = work(i, p);
          const Scalar aq = work(i, q);
          work(i, p) = c * ap - s * aq;
          work(i, q) = s * ap + c * aq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const Scalar vp = v(i, p);
          const Scalar vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return sweep;
  }
  throw NumericalError("one-sided Jacobi SVD did not converge", kJacobiMaxSweeps);
}

// Replaces the columns flagged in `missing` by unit vectors orthogonal to all
// other columns (Gram-Schmidt over the standard basis, applied twice).
template <typename Scalar>
void complete_orthonormal_columns(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& u,
                                  const std::vector<bool>& missing) {
  const Eigen::Index m = u.rows();
  std::vector<bool> valid(missing.size());
  for (std::size_t j = 0; j < missing.size(); ++j) valid[j] = !missing[j];
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    if (valid[j]) continue;
    for (Eigen::Index basis = 0; basis < m; ++basis) {
      VectorX<Scalar> cand = VectorX<Scalar>::Unit(m, basis);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index k = 0; k < u.cols(); ++k) {
          if (valid[k]) cand -= u.col(k).dot(cand) * u.col(k);
        }
      }
      const Scalar norm = cand.norm();
      if (norm > Scalar(0.5)) {
        u.col(j) = cand / norm;
        valid[j] = true;
        break;
      }
    }
  }
}

}  // namespace detail

/// Deterministic thin SVD by one-sided Jacobi on the smaller dimension.
///
/// Fixed cyclic sweep order; a pair is rotated while its column cosine
/// exceeds 1e-14. Throws NumericalError after 60 sweeps without convergence.
template <typename Derived>
SvdFactors<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (m.rows() < 1 || m.cols() < 1) throw ShapeError("svd: empty matrix");
  require_finite(m, "svd");

  const bool transposed = m.rows() < m.cols();
  ColMatrix work = transposed ? ColMatrix(m.transpose()) : ColMatrix(m);
  ColMatrix right;
  const Scalar negligible = std::numeric_limits<Scalar>::epsilon() * work.norm();
  const int sweeps = detail::one_sided_jacobi(work, right);

  const Eigen::Index k = work.cols();
  VectorX<Scalar> norms(k);
  for (Eigen::Index j = 0; j < k; ++j) norms(j) = work.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

  ColMatrix left(work.rows(), k);
  ColMatrix rv(right.rows(), k);
  VectorX<Scalar> sigma(k);
  std::vector<bool> missing(static_cast<std::size_t>(k), false);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    sigma(j) = norms(src);
    rv.col(j) = right.col(src);
    if (sigma(j) > negligible && sigma(j) > std::numeric_limits<Scalar>::min()) {
      left.col(j) = work.col(src) / sigma(j);
    } else {
      sigma(j) = Scalar(0);
      left.col(j).setZero();
      missing[static_cast<std::size_t>(j)] = true;
    }
  }
  detail::complete_orthonormal_columns(left, missing);

  SvdFactors<Scalar> out;
  out.sweeps = sweeps;
  out.sigma = sigma;
  if (transposed) {
    out.u = rv;
    out.v = left;
  } else {
    out.u = left;
    out.v = rv;
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    out.u.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.u(arg, j) < Scalar(0)) {
      out.u.col(j) = -out.u.col(j);
      out.v.col(j) = -out.v.col(j);
    }
  }
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> singular_values(const Eigen::MatrixBase<Derived>& m) {
  return svd(m).sigma;
}

/// Largest singular value (operator 2-norm).
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  return svd(m).sigma(0);
}

/// Number of singular values strictly above tol * sigma_1.
template <typename Derived>
int numerical_rank(const Eigen::MatrixBase<Derived>& m, double tol) {
  if (!(tol > 0)) throw ConfigError("numerical_rank: tol must be positive");
  const auto sigma = singular_values(m);
  if (sigma(0) == 0) return 0;
  int rank = 0;
  for (Eigen::Index j = 0; j < sigma.size(); ++j) {
    if (sigma(j) > tol * sigma(0)) ++rank;
  }
  return rank;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar max_abs_diff(const Eigen::MatrixBase<DerivedA>& a,
                                       const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_abs_diff: shape mismatch");
  if (a.size() == 0) return 0;
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace linalg
}  // namespace asam
