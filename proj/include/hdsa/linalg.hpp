// Dense and matrix-free linear algebra kernels.
//
// Vectors and small dense matrices are Eigen types. Operators are wrapped as
// value-semantic LinearMap / SpdOperator objects holding std::function
// callables, so problem code can hand out lambdas over immutable state.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hdsa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Total stacked dimension at or below which dense factorizations are used.
inline constexpr Index kDenseThreshold = 2000;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dim(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(v.size()));
  }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

struct SolverStats {
  int iterations = 0;
  double final_relative_residual = 0.0;
  bool converged = false;
  bool breakdown = false;  // zero/negative curvature (CG) or Lanczos breakdown
};

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

using ApplyFn = std::function<Vector(const Vector&)>;

/// Matrix-free linear map R^in -> R^out. apply_adjoint may be empty for
/// self-adjoint maps, in which case apply is reused.
class LinearMap {
 public:
  LinearMap() = default;
  LinearMap(Index in_dim, Index out_dim, ApplyFn apply, ApplyFn apply_adjoint = {},
            bool self_adjoint = false)
      : in_dim_(in_dim),
        out_dim_(out_dim),
        apply_(std::move(apply)),
        apply_adjoint_(std::move(apply_adjoint)),
        self_adjoint_(self_adjoint) {
    if (in_dim <= 0 || out_dim <= 0) throw DimensionError("LinearMap: dimensions must be positive");
    if (self_adjoint && in_dim != out_dim) throw DimensionError("LinearMap: self-adjoint map must be square");
  }

  static LinearMap self_adjoint(Index dim, ApplyFn apply) { return {dim, dim, std::move(apply), {}, true}; }

  static LinearMap from_matrix(Matrix m) {
    auto shared = std::make_shared<const Matrix>(std::move(m));
    const Index rows = shared->rows();
    const Index cols = shared->cols();
    return {cols, rows, [shared](const Vector& v) -> Vector { return (*shared) * v; },
            [shared](const Vector& v) -> Vector { return shared->transpose() * v; }};
  }

  [[nodiscard]] Index in_dim() const { return in_dim_; }
  [[nodiscard]] Index out_dim() const { return out_dim_; }
  [[nodiscard]] bool is_self_adjoint() const { return self_adjoint_; }
  [[nodiscard]] bool has_adjoint() const { return self_adjoint_ || static_cast<bool>(apply_adjoint_); }

  [[nodiscard]] Vector apply(const Vector& v) const {
    require_dim(v, in_dim_, "LinearMap::apply");
    Vector out = apply_(v);
    require_dim(out, out_dim_, "LinearMap::apply (output)");
    return out;
  }

  [[nodiscard]] Vector apply_adjoint(const Vector& v) const {
    require_dim(v, out_dim_, "LinearMap::apply_adjoint");
    if (self_adjoint_) return apply_(v);
    if (!apply_adjoint_) throw std::logic_error("LinearMap: adjoint not available");
    Vector out = apply_adjoint_(v);
    require_dim(out, in_dim_, "LinearMap::apply_adjoint (output)");
    return out;
  }

  /// Dense matrix, formed column by column.
  [[nodiscard]] Matrix to_dense() const {
    Matrix m(out_dim_, in_dim_);
    Vector e = Vector::Zero(in_dim_);
    for (Index j = 0; j < in_dim_; ++j) {
      e[j] = 1.0;
      m.col(j) = apply(e);
      e[j] = 0.0;
    }
    return m;
  }

 private:
  Index in_dim_ = 0;
  Index out_dim_ = 0;
  ApplyFn apply_;
  ApplyFn apply_adjoint_;
  bool self_adjoint_ = false;
};

std::pair<Vector, SolverStats> cg_solve(const LinearMap& op, const Vector& rhs, double tol, int max_iter,
                                        const Vector* x0 = nullptr);

/// Symmetric positive definite operator with a solve. Small operators given as
/// matrices keep a dense Cholesky factor; matrix-free ones solve by CG.
class SpdOperator {
 public:
  SpdOperator() = default;

  static SpdOperator from_matrix(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("SpdOperator: matrix must be square");
    SpdOperator op;
    op.dim_ = m.rows();
    auto mat = std::make_shared<const Matrix>(m);
    op.matrix_ = mat;
    op.apply_ = [mat](const Vector& v) -> Vector { return (*mat) * v; };
    if (op.dim_ <= kDenseThreshold) {
      auto llt = std::make_shared<Eigen::LLT<Matrix>>(m);
      if (llt->info() != Eigen::Success) throw NumericalError("SpdOperator: matrix is not positive definite");
      op.factor_ = llt;
    }
    return op;
  }

  static SpdOperator identity(Index n) {
    SpdOperator op;
    op.dim_ = n;
    op.is_identity_ = true;
    op.apply_ = [](const Vector& v) -> Vector { return v; };
    return op;
  }

  static SpdOperator matrix_free(Index n, ApplyFn apply, double solve_tol = 1e-12) {
    SpdOperator op;
    op.dim_ = n;
    op.apply_ = std::move(apply);
    op.solve_tol_ = solve_tol;
    return op;
  }

  /// Block-diagonal operator over consecutive coordinate ranges.
  static SpdOperator block_diagonal(const std::vector<SpdOperator>& blocks) {
    Index n = 0;
    bool all_dense = true;
    bool all_identity = true;
    for (const auto& b : blocks) {
      n += b.dim();
      all_dense = all_dense && (b.matrix_ || b.is_identity_);
      all_identity = all_identity && b.is_identity_;
    }
    if (all_identity) return identity(n);
    if (all_dense) {
      Matrix m = Matrix::Zero(n, n);
      Index off = 0;
      for (const auto& b : blocks) {
        m.block(off, off, b.dim(), b.dim()) = b.dense();
        off += b.dim();
      }
      return from_matrix(m);
    }
    auto parts = std::make_shared<const std::vector<SpdOperator>>(blocks);
    return matrix_free(n, [parts](const Vector& v) -> Vector {
      Vector out(v.size());
      Index off = 0;
      for (const auto& b : *parts) {
        out.segment(off, b.dim()) = b.apply(v.segment(off, b.dim()));
        off += b.dim();
      }
      return out;
    });
  }

  [[nodiscard]] Index dim() const { return dim_; }
  [[nodiscard]] bool is_identity() const { return is_identity_; }

  [[nodiscard]] Vector apply(const Vector& v) const {
    require_dim(v, dim_, "SpdOperator::apply");
    return apply_(v);
  }

  [[nodiscard]] Vector solve(const Vector& rhs) const {
    require_dim(rhs, dim_, "SpdOperator::solve");
    if (is_identity_) return rhs;
    if (factor_) return factor_->solve(rhs);
    auto [x, stats] = cg_solve(as_map(), rhs, solve_tol_, static_cast<int>(10 * dim_ + 100));
    if (!stats.converged) throw NumericalError("SpdOperator::solve: CG did not converge");
    return x;
  }

  [[nodiscard]] double inner(const Vector& a, const Vector& b) const { return a.dot(apply(b)); }
  [[nodiscard]] double norm(const Vector& v) const { return std::sqrt(std::max(0.0, inner(v, v))); }

  [[nodiscard]] LinearMap as_map() const { return LinearMap::self_adjoint(dim_, apply_); }

  [[nodiscard]] Matrix dense() const {
    if (is_identity_) return Matrix::Identity(dim_, dim_);
    if (matrix_) return *matrix_;
    return as_map().to_dense();
  }

 private:
  Index dim_ = 0;
  bool is_identity_ = false;
  double solve_tol_ = 1e-12;
  ApplyFn apply_;
  std::shared_ptr<const Matrix> matrix_;
  std::shared_ptr<const Eigen::LLT<Matrix>> factor_;
};

// ---------------------------------------------------------------------------
// Krylov solvers
// ---------------------------------------------------------------------------

namespace detail {
inline double relative_residual(const LinearMap& op, const Vector& x, const Vector& rhs, double rhs_norm) {
  return (rhs - op.apply(x)).norm() / rhs_norm;
}
}  // namespace detail

/// Conjugate gradients for symmetric positive definite maps. Convergence is
/// declared only after the true residual is recomputed and meets tol.
inline std::pair<Vector, SolverStats> cg_solve(const LinearMap& op, const Vector& rhs, double tol, int max_iter,
                                               const Vector* x0) {
  if (op.in_dim() != op.out_dim()) throw DimensionError("cg_solve: operator must be square");
  require_dim(rhs, op.in_dim(), "cg_solve rhs");
  if (!(tol > 0.0)) throw std::invalid_argument("cg_solve: tol must be positive");
  SolverStats stats;
  const double bnorm = rhs.norm();
  Vector x = x0 ? *x0 : Vector::Zero(rhs.size());
  if (x0) require_dim(*x0, rhs.size(), "cg_solve x0");
  if (bnorm == 0.0) {
    stats.converged = true;
    return {Vector::Zero(rhs.size()), stats};
  }
  Vector r = rhs - op.apply(x);
  Vector p = r;
  double rr = r.squaredNorm();
  while (stats.iterations < max_iter) {
    if (std::sqrt(rr) <= tol * bnorm) {
      const Vector true_r = rhs - op.apply(x);
      if (true_r.norm() <= tol * bnorm) break;
      r = true_r;
      p = r;
      rr = r.squaredNorm();
    }
    const Vector ap = op.apply(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) {
      stats.breakdown = true;
      break;
    }
    const double alpha = rr / curvature;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++stats.iterations;
  }
  stats.final_relative_residual = detail::relative_residual(op, x, rhs, bnorm);
  stats.converged = !stats.breakdown && stats.final_relative_residual <= tol;
  return {x, stats};
}

/// MINRES (Paige-Saunders) for symmetric, possibly indefinite maps. Restarts
/// from the current iterate if the recurrence estimate disagrees with the
/// recomputed residual.
inline std::pair<Vector, SolverStats> minres_solve(const LinearMap& op, const Vector& rhs, double tol, int max_iter) {
  if (op.in_dim() != op.out_dim()) throw DimensionError("minres_solve: operator must be square");
  require_dim(rhs, op.in_dim(), "minres_solve rhs");
  if (!(tol > 0.0)) throw std::invalid_argument("minres_solve: tol must be positive");
  SolverStats stats;
  const Index n = rhs.size();
  const double bnorm = rhs.norm();
  Vector x = Vector::Zero(n);
  if (bnorm == 0.0) {
    stats.converged = true;
    return {x, stats};
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();

  while (stats.iterations < max_iter) {
    Vector r1 = rhs - op.apply(x);
    const double beta1 = r1.norm();
    if (beta1 <= tol * bnorm) break;
    Vector y = r1;
    Vector r2 = r1;
    Vector w = Vector::Zero(n);
    Vector w1 = Vector::Zero(n);
    Vector w2 = Vector::Zero(n);
    double oldb = 0.0;
    double beta = beta1;
    double dbar = 0.0;
    double epsln = 0.0;
    double phibar = beta1;
    double cs = -1.0;
    double sn = 0.0;
    bool estimate_converged = false;
    while (stats.iterations < max_iter) {
      ++stats.iterations;
      const Vector v = y / beta;
      y = op.apply(v);
      if (oldb != 0.0) y -= (beta / oldb) * r1;
      const double alfa = v.dot(y);
      y -= (alfa / beta) * r2;
      r1 = r2;
      r2 = y;
      oldb = beta;
      beta = r2.norm();
      const double oldeps = epsln;
      const double delta = cs * dbar + sn * alfa;
      const double gbar = sn * dbar - cs * alfa;
      epsln = sn * beta;
      dbar = -cs * beta;
      const double gamma = std::max(std::hypot(gbar, beta), eps);
      cs = gbar / gamma;
      sn = beta / gamma;
      const double phi = cs * phibar;
      phibar = sn * phibar;
      w1 = w2;
      w2 = w;
      w = (v - oldeps * w1 - delta * w2) / gamma;
      x += phi * w;
      if (phibar <= tol * bnorm) {
        estimate_converged = true;
        break;
      }
      if (beta <= eps * bnorm) {  // invariant subspace reached
        estimate_converged = true;
        break;
      }
    }
    if (!estimate_converged) break;
    if (detail::relative_residual(op, x, rhs, bnorm) <= tol) break;
  }
  stats.final_relative_residual = detail::relative_residual(op, x, rhs, bnorm);
  stats.converged = stats.final_relative_residual <= tol;
  return {x, stats};
}

/// The sym_indefinite_solve contract: minimal-residual solve of a self-adjoint map.
inline std::pair<Vector, SolverStats> sym_indefinite_solve(const LinearMap& op, const Vector& rhs, double tol,
                                                           int max_iter) {
  return minres_solve(op, rhs, tol, max_iter);
}

// ---------------------------------------------------------------------------
// B-orthonormalization
// ---------------------------------------------------------------------------

struct OrthonormalBasis {
  std::vector<Vector> vectors;
  std::vector<Vector> b_vectors;  // B applied to each basis vector
  int dropped = 0;
};

/// Two-pass Gram-Schmidt in the B inner product. Columns whose B-norm after
/// projection falls below drop_tol times their original B-norm are dropped.
inline OrthonormalBasis b_orthonormalize(const std::vector<Vector>& vectors, const SpdOperator& b,
                                         double drop_tol = 1e-10) {
  OrthonormalBasis out;
  for (const auto& input : vectors) {
    require_dim(input, b.dim(), "b_orthonormalize");
    Vector v = input;
    const double original = b.norm(v);
    if (original == 0.0) {
      ++out.dropped;
      continue;
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < out.vectors.size(); ++k) v -= out.b_vectors[k].dot(v) * out.vectors[k];
    }
    Vector bv = b.apply(v);
    const double nrm = std::sqrt(std::max(0.0, v.dot(bv)));
    if (nrm < drop_tol * original) {
      ++out.dropped;
      continue;
    }
    out.vectors.push_back(v / nrm);
    out.b_vectors.push_back(bv / nrm);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small dense factorizations
// ---------------------------------------------------------------------------

struct SymEig {
  Vector values;   // descending
  Matrix vectors;  // columns, orthonormal
};

inline SymEig dense_sym_eig(const Matrix& t) {
  if (t.rows() != t.cols()) throw DimensionError("dense_sym_eig: matrix must be square");
  const double scale = std::max(t.norm(), std::numeric_limits<double>::min());
  if ((t - t.transpose()).norm() > 1e-12 * scale) throw std::invalid_argument("dense_sym_eig: matrix is not symmetric");
  const Matrix sym = 0.5 * (t + t.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("dense_sym_eig: eigensolver failed");
  const Index n = t.rows();
  SymEig out{Vector(n), Matrix(n, n)};
  // Eigen returns ascending order.
  for (Index i = 0; i < n; ++i) {
    out.values[i] = solver.eigenvalues()[n - 1 - i];
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

struct Svd {
  Vector values;  // descending
  Matrix left;
  Matrix right;
};

inline Svd dense_svd(const Matrix& m) {
  if (m.rows() > kDenseThreshold || m.cols() > kDenseThreshold) {
    throw DimensionError("dense_svd: matrix exceeds dense threshold");
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.singularValues(), svd.matrixU(), svd.matrixV()};
}

/// Upper-triangular R with R^T R = M.
inline Matrix dense_cholesky(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("dense_cholesky: matrix must be square");
  const Index n = m.rows();
  Matrix r = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double pivot = m(j, j);
    for (Index k = 0; k < j; ++k) pivot -= r(k, j) * r(k, j);
    if (!(pivot > 0.0)) {
      throw NumericalError("dense_cholesky: non-positive pivot at index " + std::to_string(j));
    }
    const double rjj = std::sqrt(pivot);
    r(j, j) = rjj;
    for (Index i = j + 1; i < n; ++i) {
      double s = m(j, i);
      for (Index k = 0; k < j; ++k) s -= r(k, j) * r(k, i);
      r(j, i) = s / rjj;
    }
  }
  return r;
}

}  // namespace hdsa
