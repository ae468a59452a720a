#pragma once

// Dense kernels shared by the solvers: Kronecker-structured solves via the
// vec identity vec(S_h X S_a) = (S_a^T ⊗ S_h) vec(X), SPD solves, spectral
// norm bounds and PCA.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dmtl/errors.hpp"
#include "dmtl/types.hpp"

namespace dmtl {

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kSolveTolerance = 1e-10;
inline constexpr double kMaxCondition = 1e14;
inline constexpr Index kDenseKroneckerLimit = 4096;
inline constexpr double kNormSafetyFactor = 1.01;

namespace detail {

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) return false;
  const auto scale = std::max<typename Derived::Scalar>(m.cwiseAbs().maxCoeff(), 1);
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTolerance * scale;
}

template <typename Scalar>
Matrix<Scalar> symmetrized(const Matrix<Scalar>& m) {
  return (m + m.transpose()) / Scalar(2);
}

}  // namespace detail

/// Operator X ↦ Σ_k S_h[k] X S_a[k] + shift X acting on p×q matrices.
///
/// In vec form this is Σ_k (S_a[k] ⊗ S_h[k]) + I_q ⊗ shift. Every S_a, S_h and
/// the shift must be symmetric.
template <typename Scalar>
struct KroneckerSystem {
  struct Term {
    Matrix<Scalar> right;  // S_a, q×q
    Matrix<Scalar> left;   // S_h, p×p
  };
  std::vector<Term> terms;
  Matrix<Scalar> shift;  // p×p

  static KroneckerSystem scalar_shift(std::vector<Term> terms, Scalar c, Index p) {
    return {std::move(terms), Matrix<Scalar>::Identity(p, p) * c};
  }

  Index left_dim() const { return shift.rows(); }

  Matrix<Scalar> apply(const Matrix<Scalar>& x) const {
    Matrix<Scalar> out = shift * x;
    for (const auto& term : terms) out.noalias() += term.left * x * term.right;
    return out;
  }

  /// Explicit pq×pq operator, column-major vec convention.
  Matrix<Scalar> assemble(Index q) const {
    const Index p = left_dim();
    Matrix<Scalar> op = Matrix<Scalar>::Zero(p * q, p * q);
    for (const auto& term : terms)
      for (Index j = 0; j < q; ++j)
        for (Index i = 0; i < q; ++i)
          if (term.right(i, j) != Scalar(0))
            op.block(i * p, j * p, p, p) += term.right(i, j) * term.left;
    for (Index j = 0; j < q; ++j) op.block(j * p, j * p, p, p) += shift;
    return op;
  }
};

namespace detail {

template <typename Scalar>
std::string diagnose_singular(const KroneckerSystem<Scalar>& sys) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(symmetrized<Scalar>(sys.shift),
                                                   Eigen::EigenvaluesOnly);
  std::ostringstream msg;
  msg << "kron_vec_solve: operator is numerically singular; ";
  if (eig.eigenvalues().size() > 0 && eig.eigenvalues().minCoeff() <= Scalar(0))
    msg << "shift term has non-positive eigenvalue " << eig.eigenvalues().minCoeff();
  else
    msg << "Kronecker term sum (" << sys.terms.size() << " terms) cancels the shift";
  return msg.str();
}

// Jacobi-preconditioned conjugate gradient on the matrix-free operator.
template <typename Scalar>
Matrix<Scalar> kron_cg(const KroneckerSystem<Scalar>& sys, const Matrix<Scalar>& rhs) {
  const Index p = rhs.rows(), q = rhs.cols();
  Matrix<Scalar> diag(p, q);
  for (Index j = 0; j < q; ++j)
    for (Index i = 0; i < p; ++i) {
      Scalar d = sys.shift(i, i);
      for (const auto& term : sys.terms) d += term.right(j, j) * term.left(i, i);
      if (!(d > Scalar(0))) throw SingularityError(diagnose_singular(sys));
      diag(i, j) = d;
    }

  const Scalar rhs_norm = rhs.norm();
  Matrix<Scalar> x = Matrix<Scalar>::Zero(p, q);
  if (rhs_norm == Scalar(0)) return x;

  Matrix<Scalar> r = rhs;
  Matrix<Scalar> z = r.cwiseQuotient(diag);
  Matrix<Scalar> dir = z;
  Scalar rz = (r.array() * z.array()).sum();
  const Index cap = 10 * p * q;
  for (Index it = 0; it < cap; ++it) {
    const Matrix<Scalar> ad = sys.apply(dir);
    const Scalar curvature = (dir.array() * ad.array()).sum();
    if (!(curvature > Scalar(0))) throw SingularityError(diagnose_singular(sys));
    const Scalar step = rz / curvature;
    x += step * dir;
    r -= step * ad;
    if (r.norm() <= Scalar(kSolveTolerance) * rhs_norm) return x;
    z = r.cwiseQuotient(diag);
    const Scalar rz_next = (r.array() * z.array()).sum();
    dir = z + (rz_next / rz) * dir;
    rz = rz_next;
  }
  throw SingularityError("kron_vec_solve: conjugate gradient did not reach tolerance within " +
                         std::to_string(cap) + " iterations");
}

}  // namespace detail

/// Solves Σ S_h X S_a + shift·X = rhs for X (p×q).
///
/// Systems with p·q ≤ 4096 are assembled and factored densely; larger ones go
/// through matrix-free conjugate gradient.
template <typename Scalar>
Matrix<Scalar> kron_vec_solve(const KroneckerSystem<Scalar>& sys, const Matrix<Scalar>& rhs) {
  const Index p = sys.left_dim(), q = rhs.cols();
  if (sys.shift.cols() != p || rhs.rows() != p)
    throw UsageError("kron_vec_solve: shift is " + std::to_string(sys.shift.rows()) + "x" +
                     std::to_string(sys.shift.cols()) + " but rhs has " +
                     std::to_string(rhs.rows()) + " rows");
  if (!detail::is_symmetric(sys.shift)) throw UsageError("kron_vec_solve: shift not symmetric");
  for (std::size_t k = 0; k < sys.terms.size(); ++k) {
    const auto& term = sys.terms[k];
    if (term.left.rows() != p || term.left.cols() != p || term.right.rows() != q ||
        term.right.cols() != q)
      throw UsageError("kron_vec_solve: term " + std::to_string(k) + " has wrong dimensions");
    if (!detail::is_symmetric(term.left) || !detail::is_symmetric(term.right))
      throw UsageError("kron_vec_solve: term " + std::to_string(k) + " not symmetric");
  }
  if (p * q == 0) return Matrix<Scalar>(p, q);

  if (p * q > kDenseKroneckerLimit) return detail::kron_cg(sys, rhs);

  const Matrix<Scalar> op = detail::symmetrized<Scalar>(sys.assemble(q));
  Eigen::LLT<Matrix<Scalar>> llt(op);
  if (llt.info() != Eigen::Success || !(llt.rcond() * Scalar(kMaxCondition) >= Scalar(1)))
    throw SingularityError(detail::diagnose_singular(sys));
  const Vector<Scalar> x = llt.solve(rhs.reshaped());
  return x.reshaped(p, q);
}

/// Solver for the single-term system S_a ⊗ S_h + c·I with S_h fixed.
///
/// S_h is diagonalized once, so repeated solves with changing S_a (r×r) and c
/// cost O(p²q) instead of a fresh pq×pq factorization.
template <typename Scalar>
class SpectralKroneckerSolver {
 public:
  SpectralKroneckerSolver() = default;
  explicit SpectralKroneckerSolver(const Matrix<Scalar>& left) {
    if (!detail::is_symmetric(left))
      throw UsageError("SpectralKroneckerSolver: left factor not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(detail::symmetrized<Scalar>(left));
    if (eig.info() != Eigen::Success)
      throw SingularityError("SpectralKroneckerSolver: eigendecomposition failed");
    left_vectors_ = eig.eigenvectors();
    left_values_ = eig.eigenvalues();
  }

  Index left_dim() const { return left_values_.size(); }

  Matrix<Scalar> solve(const Matrix<Scalar>& right, Scalar shift, const Matrix<Scalar>& rhs) const {
    const Index p = left_dim(), q = right.rows();
    if (rhs.rows() != p || rhs.cols() != q || right.cols() != q)
      throw UsageError("SpectralKroneckerSolver: dimension mismatch");
    if (!detail::is_symmetric(right))
      throw UsageError("SpectralKroneckerSolver: right factor not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(detail::symmetrized<Scalar>(right));
    const Matrix<Scalar>& w = eig.eigenvectors();
    Matrix<Scalar> core = left_vectors_.transpose() * rhs * w;
    const Vector<Scalar>& sv = eig.eigenvalues();
    Scalar lo = std::numeric_limits<Scalar>::infinity(), hi = 0;
    for (Index j = 0; j < q; ++j)
      for (Index i = 0; i < p; ++i) {
        const Scalar denom = left_values_(i) * sv(j) + shift;
        lo = std::min(lo, denom);
        hi = std::max(hi, std::abs(denom));
        core(i, j) /= denom;
      }
    if (!(lo > Scalar(0)) || hi > Scalar(kMaxCondition) * lo)
      throw SingularityError("SpectralKroneckerSolver: operator not positive definite (smallest "
                             "eigenvalue " + std::to_string(double(lo)) + ")");
    return left_vectors_ * core * w.transpose();
  }

 private:
  Matrix<Scalar> left_vectors_;
  Vector<Scalar> left_values_;
};

/// Solves M X = B for symmetric positive definite M.
template <typename Scalar, typename DerivedB>
Matrix<Scalar> spd_solve(const Matrix<Scalar>& m, const Eigen::MatrixBase<DerivedB>& b) {
  if (m.rows() != m.cols() || b.rows() != m.rows())
    throw UsageError("spd_solve: M is " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", B has " + std::to_string(b.rows()) + " rows");
  if (!detail::is_symmetric(m)) throw UsageError("spd_solve: M is not symmetric");
  Eigen::LLT<Matrix<Scalar>> llt(detail::symmetrized<Scalar>(m));
  if (llt.info() != Eigen::Success)
    throw SingularityError("spd_solve: matrix is not positive definite");
  return llt.solve(b.derived());
}

/// Upper bound on the largest singular value: power iteration on the smaller
/// Gram matrix, inflated by kNormSafetyFactor.
template <typename Derived>
typename Derived::Scalar spectral_norm_bound(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (!m.allFinite()) throw UsageError("spectral_norm_bound: non-finite input");
  if (m.size() == 0) return Scalar(0);
  const Matrix<Scalar> gram = m.rows() < m.cols() ? Matrix<Scalar>(m * m.transpose())
                                                  : Matrix<Scalar>(m.transpose() * m);
  if (gram.cwiseAbs().maxCoeff() == Scalar(0)) return Scalar(0);

  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  Vector<Scalar> v(gram.rows());
  for (Index i = 0; i < v.size(); ++i) v(i) = Scalar(unif(rng));
  v.normalize();

  Scalar value = 0;
  for (int it = 0; it < 20000; ++it) {
    Vector<Scalar> w = gram * v;
    const Scalar next = v.dot(w);
    const Scalar wn = w.norm();
    if (wn == Scalar(0)) break;
    v = w / wn;
    if (it > 0 && std::abs(next - value) <= Scalar(1e-14) * std::abs(next)) {
      value = next;
      break;
    }
    value = next;
  }
  return Scalar(kNormSafetyFactor) * std::sqrt(std::max(value, Scalar(0)));
}

/// Either a fixed number of components or a minimum retained-variance fraction.
struct PcaTarget {
  enum class Kind { Dims, VarianceFraction };
  Kind kind = Kind::Dims;
  double value = 0;

  static PcaTarget dims(Index p) { return {Kind::Dims, double(p)}; }
  static PcaTarget fraction(double f) { return {Kind::VarianceFraction, f}; }
};

template <typename Scalar>
struct PcaModel {
  Vector<Scalar> mean;          // n
  Matrix<Scalar> projection;    // n×p, orthonormal columns
  Scalar explained_fraction = 0;

  Matrix<Scalar> transform(const Matrix<Scalar>& x) const {
    if (x.cols() != mean.size()) throw UsageError("PcaModel::transform: dimension mismatch");
    return (x.rowwise() - mean.transpose()) * projection;
  }
};

template <typename Scalar>
struct PcaResult {
  Matrix<Scalar> projected;  // N×p
  PcaModel<Scalar> model;
};

/// Principal components of the row-sample matrix x (mean removed internally).
///
/// Uses the covariance eigendecomposition for n ≤ 1024 and a thin SVD of the
/// centered data above that.
template <typename Scalar>
PcaResult<Scalar> pca_reduce(const Matrix<Scalar>& x, PcaTarget target) {
  const Index n_samples = x.rows(), dim = x.cols();
  if (n_samples < 2) throw UsageError("pca_reduce: need at least 2 samples");
  if (!x.allFinite()) throw UsageError("pca_reduce: non-finite input");

  const Vector<Scalar> mean = x.colwise().mean().transpose();
  const Matrix<Scalar> centered = x.rowwise() - mean.transpose();

  Vector<Scalar> variances;  // descending
  Matrix<Scalar> axes;       // columns in matching order
  if (dim <= 1024) {
    const Matrix<Scalar> cov = (centered.transpose() * centered) / Scalar(n_samples - 1);
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(cov);
    variances = eig.eigenvalues().reverse().cwiseMax(Scalar(0));
    axes = eig.eigenvectors().rowwise().reverse();
  } else {
    Eigen::BDCSVD<Matrix<Scalar>> svd(centered, Eigen::ComputeThinV);
    variances = svd.singularValues().array().square() / Scalar(n_samples - 1);
    axes = svd.matrixV();
  }

  const Scalar total = variances.sum();
  if (!(total > Scalar(0))) throw UsageError("pca_reduce: zero total variance");

  const Index max_dims = std::min(n_samples, dim);
  Index keep = 0;
  if (target.kind == PcaTarget::Kind::Dims) {
    keep = Index(target.value);
    if (keep < 1 || keep > max_dims)
      throw UsageError("pca_reduce: target dim " + std::to_string(keep) + " outside [1, " +
                       std::to_string(max_dims) + "]");
  } else {
    if (!(target.value > 0 && target.value <= 1))
      throw UsageError("pca_reduce: variance fraction must lie in (0, 1]");
    Scalar acc = 0;
    while (keep < std::min<Index>(variances.size(), max_dims)) {
      acc += variances(keep++);
      if (acc >= Scalar(target.value) * total) break;
    }
  }
  keep = std::min<Index>(keep, axes.cols());

  PcaModel<Scalar> model;
  model.mean = mean;
  model.projection = axes.leftCols(keep);
  // Deterministic sign: largest-magnitude loading of each axis is positive.
  for (Index c = 0; c < keep; ++c) {
    Index arg = 0;
    model.projection.col(c).cwiseAbs().maxCoeff(&arg);
    if (model.projection(arg, c) < Scalar(0)) model.projection.col(c) *= Scalar(-1);
  }
  model.explained_fraction = variances.head(keep).sum() / total;
  return {centered * model.projection, std::move(model)};
}

}  // namespace dmtl
