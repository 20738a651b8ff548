// KKT operator, parameter Jacobian and the sensitivity operator D = P K^{-1} B.
#pragma once

#include <concepts>
#include <memory>
#include <mutex>
#include <sstream>

#include "hdsa/linalg.hpp"
#include "hdsa/optimizer.hpp"
#include "hdsa/problem.hpp"

namespace hdsa {

enum class KktMethod {
  kAuto,     // reduced, falling back to dense LU when the stacked dimension fits
  kDense,    // dense LU of the assembled operator
  kMinres,   // MINRES on the full stacked system
  kReduced,  // eliminate u and lambda with state solves, solve the reduced Hessian system
};

struct KktConfig {
  KktMethod method = KktMethod::kAuto;
  double tol = 1e-10;
  int max_iter = 20000;
  bool dense_fallback = true;
};

/// Totals over all solves performed by one operator; safe to update from
/// several workers.
struct KktTotals {
  long solves = 0;
  long iterations = 0;
  double max_relative_residual = 0.0;
};

class KktOperator {
 public:
  KktOperator(ProblemPtr problem, Point point, KktConfig cfg = {})
      : problem_(std::move(problem)), point_(std::move(point)), cfg_(cfg), dims_(problem_->dims()),
        state_(std::make_shared<State>()) {}

  [[nodiscard]] const ProblemDefinition& problem() const { return *problem_; }
  [[nodiscard]] const Point& point() const { return point_; }
  [[nodiscard]] const ProblemDims& dims() const { return dims_; }
  [[nodiscard]] Index dim() const { return dims_.stacked(); }
  [[nodiscard]] const KktConfig& config() const { return cfg_; }

  [[nodiscard]] Vector apply(const Vector& v) const {
    require_dim(v, dim(), "KktOperator::apply");
    const auto [vu, vz, vl] = split(v);
    const ProblemDefinition& p = *problem_;
    Vector out(dim());
    out.segment(0, dims_.n_u) = p.hess_uu(point_, vu) + p.hess_uz(point_, vz) + p.jac_u_adjoint(point_, vl);
    out.segment(dims_.n_u, dims_.n_z) = p.hess_zu(point_, vu) + p.hess_zz(point_, vz) + p.jac_z_adjoint(point_, vl);
    out.segment(dims_.n_u + dims_.n_z, dims_.n_lambda) = p.jac_u(point_, vu) + p.jac_z(point_, vz);
    return out;
  }

  [[nodiscard]] LinearMap as_map() const {
    return LinearMap::self_adjoint(dim(), [this](const Vector& v) { return apply(v); });
  }

  [[nodiscard]] Matrix dense() const {
    const Index n = dim();
    Matrix k(n, n);
    for (Index j = 0; j < n; ++j) k.col(j) = apply(Vector::Unit(n, j));
    return k;
  }

  [[nodiscard]] std::pair<Vector, SolverStats> solve(const Vector& rhs) const {
    require_dim(rhs, dim(), "KktOperator::solve");
    if (rhs.norm() == 0.0) {
      SolverStats s;
      s.converged = true;
      record(s);
      return {Vector::Zero(dim()), s};
    }
    std::pair<Vector, SolverStats> result;
    switch (cfg_.method) {
      case KktMethod::kDense:
        result = solve_dense(rhs);
        break;
      case KktMethod::kMinres:
        result = minres_solve(as_map(), rhs, cfg_.tol, cfg_.max_iter);
        if (!result.second.converged && cfg_.dense_fallback && dim() <= kDenseThreshold) result = solve_dense(rhs);
        break;
      case KktMethod::kReduced:
        result = solve_reduced(rhs);
        break;
      case KktMethod::kAuto:
        result = solve_reduced(rhs);
        if (!result.second.converged && cfg_.dense_fallback && dim() <= kDenseThreshold) {
          auto dense = solve_dense(rhs);
          if (dense.second.final_relative_residual < result.second.final_relative_residual) result = std::move(dense);
        }
        break;
    }
    record(result.second);
    if (!result.second.converged) {
      std::ostringstream msg;
      msg << "KktOperator::solve: relative residual " << result.second.final_relative_residual << " above tolerance "
          << cfg_.tol;
      throw NumericalError(msg.str());
    }
    return result;
  }

  [[nodiscard]] KktTotals totals() const {
    std::lock_guard<std::mutex> lock(state_->mutex);
    return state_->totals;
  }

 private:
  struct State {
    std::once_flag dense_once;
    std::shared_ptr<const Eigen::PartialPivLU<Matrix>> lu;
    std::once_flag norm_once;
    double norm = 0.0;
    std::once_flag hessian_once;
    std::shared_ptr<const Eigen::LDLT<Matrix>> hessian;
    std::mutex mutex;
    KktTotals totals;
  };

  [[nodiscard]] std::tuple<Vector, Vector, Vector> split(const Vector& v) const {
    return {v.segment(0, dims_.n_u), v.segment(dims_.n_u, dims_.n_z), v.segment(dims_.n_u + dims_.n_z, dims_.n_lambda)};
  }

  void record(const SolverStats& s) const {
    std::lock_guard<std::mutex> lock(state_->mutex);
    ++state_->totals.solves;
    state_->totals.iterations += s.iterations;
    state_->totals.max_relative_residual = std::max(state_->totals.max_relative_residual, s.final_relative_residual);
  }

  // Normwise backward error ||r|| / (||K|| ||x|| + ||b||). Mass and stiffness
  // blocks differ in scale by O(h^-2), so ||r|| / ||b|| alone stalls far above
  // round-off for right-hand sides with large responses.
  [[nodiscard]] SolverStats finish(const Vector& x, const Vector& rhs, int iterations) const {
    SolverStats s;
    s.iterations = iterations;
    s.final_relative_residual = (rhs - apply(x)).norm() / (norm_estimate() * x.norm() + rhs.norm());
    s.converged = s.final_relative_residual <= cfg_.tol;
    return s;
  }

 public:
  /// Largest |eigenvalue| of K by power iteration; computed once.
  [[nodiscard]] double norm_estimate() const {
    std::call_once(state_->norm_once, [this] {
      KeyedRng rng(0, StreamPurpose::kTesting, 0x4b4b);
      Vector v = rng.normal_vector(dim()).normalized();
      double est = 0.0;
      for (int it = 0; it < 30; ++it) {
        Vector w = apply(v);
        const double nw = w.norm();
        if (nw == 0.0) break;
        est = nw;
        v = w / nw;
      }
      state_->norm = est;
    });
    return state_->norm;
  }

 private:

  [[nodiscard]] std::pair<Vector, SolverStats> solve_dense(const Vector& rhs) const {
    if (dim() > kDenseThreshold) throw DimensionError("KktOperator: dense solve above the dense threshold");
    std::call_once(state_->dense_once, [this] { state_->lu = std::make_shared<Eigen::PartialPivLU<Matrix>>(dense()); });
    Vector x = state_->lu->solve(rhs);
    // one step of iterative refinement
    x += state_->lu->solve(rhs - apply(x));
    return {x, finish(x, rhs, 1)};
  }

  [[nodiscard]] Vector hessian_solve(const Vector& b, int& iterations) const {
    const ProblemDefinition& p = *problem_;
    if (dims_.n_z <= kDenseThreshold) {
      std::call_once(state_->hessian_once, [this] {
        state_->hessian = std::make_shared<Eigen::LDLT<Matrix>>(dense_reduced_hessian(*problem_, point_));
      });
      Vector x = state_->hessian->solve(b);
      x += state_->hessian->solve(b - reduced_hessian_apply(p, point_, x));
      iterations += 1;
      return x;
    }
    const LinearMap h =
        LinearMap::self_adjoint(dims_.n_z, [this](const Vector& v) { return reduced_hessian_apply(*problem_, point_, v); });
    auto [x, stats] = cg_solve(h, b, 0.01 * cfg_.tol, cfg_.max_iter, nullptr);
    iterations += stats.iterations;
    return x;
  }

  [[nodiscard]] std::pair<Vector, SolverStats> solve_reduced(const Vector& rhs) const {
    const ProblemDefinition& p = *problem_;
    const auto [ru, rz, rl] = split(rhs);
    int iterations = 0;
    const Vector w = p.state_jacobian_solve(point_, rl);
    const Vector t = p.state_jacobian_adjoint_solve(point_, ru - p.hess_uu(point_, w));
    const Vector b = rz - p.hess_zu(point_, w) - p.jac_z_adjoint(point_, t);
    const Vector xz = hessian_solve(b, iterations);
    const Vector xu = p.state_jacobian_solve(point_, rl - p.jac_z(point_, xz));
    const Vector xl = p.state_jacobian_adjoint_solve(point_, ru - p.hess_uu(point_, xu) - p.hess_uz(point_, xz));
    Vector x(dim());
    x << xu, xz, xl;
    return {x, finish(x, rhs, iterations)};
  }

  ProblemPtr problem_;
  Point point_;
  KktConfig cfg_;
  ProblemDims dims_;
  std::shared_ptr<State> state_;
};

/// B = -(L_u theta; L_z theta; c_theta).
class ParamJacobianOperator {
 public:
  ParamJacobianOperator(ProblemPtr problem, Point point) : problem_(std::move(problem)), point_(std::move(point)) {}

  [[nodiscard]] Index in_dim() const { return problem_->dims().n_theta; }
  [[nodiscard]] Index out_dim() const { return problem_->dims().stacked(); }

  [[nodiscard]] Vector apply(const Vector& phi) const {
    require_dim(phi, in_dim(), "ParamJacobianOperator::apply");
    Vector out(out_dim());
    out << problem_->hess_utheta(point_, phi), problem_->hess_ztheta(point_, phi), problem_->jac_theta(point_, phi);
    return -out;
  }

  [[nodiscard]] Vector apply_adjoint(const Vector& w) const {
    require_dim(w, out_dim(), "ParamJacobianOperator::apply_adjoint");
    const ProblemDims d = problem_->dims();
    return -(problem_->hess_thetau(point_, w.segment(0, d.n_u)) + problem_->hess_thetaz(point_, w.segment(d.n_u, d.n_z)) +
             problem_->jac_theta_adjoint(point_, w.segment(d.n_u + d.n_z, d.n_lambda)));
  }

 private:
  ProblemPtr problem_;
  Point point_;
};

/// Anything that maps parameter directions to optimization-variable
/// perturbations together with its Euclidean transpose.
template <typename T>
concept SensitivityLike = requires(const T& d, const Vector& v) {
  { d.in_dim() } -> std::convertible_to<Index>;
  { d.out_dim() } -> std::convertible_to<Index>;
  { d.apply(v) } -> std::convertible_to<Vector>;
  { d.apply_adjoint(v) } -> std::convertible_to<Vector>;
};

/// D = P K^{-1} B; apply_adjoint is the Euclidean transpose B^T K^{-1} P^T.
class SensitivityOperator {
 public:
  SensitivityOperator(ProblemPtr problem, const Point& point, KktConfig cfg = {})
      : kkt_(problem, point, cfg), b_(problem, point), dims_(problem->dims()), spaces_(&problem->spaces()),
        problem_(std::move(problem)) {}

  [[nodiscard]] Index in_dim() const { return dims_.n_theta; }
  [[nodiscard]] Index out_dim() const { return dims_.n_z; }
  [[nodiscard]] const KktOperator& kkt() const { return kkt_; }
  [[nodiscard]] const ParamJacobianOperator& param_jacobian() const { return b_; }
  [[nodiscard]] const WeightedSpaces& spaces() const { return *spaces_; }

  [[nodiscard]] Vector apply(const Vector& phi) const {
    require_dim(phi, in_dim(), "SensitivityOperator::apply");
    if (phi.norm() == 0.0) return Vector::Zero(out_dim());
    return kkt_.solve(b_.apply(phi)).first.segment(dims_.n_u, dims_.n_z);
  }

  [[nodiscard]] Vector apply_adjoint(const Vector& w) const {
    require_dim(w, out_dim(), "SensitivityOperator::apply_adjoint");
    if (w.norm() == 0.0) return Vector::Zero(in_dim());
    Vector padded = Vector::Zero(dims_.stacked());
    padded.segment(dims_.n_u, dims_.n_z) = w;
    return b_.apply_adjoint(kkt_.solve(padded).first);
  }

  /// Adjoint in the weighted inner products: M_Theta^{-1} D^T M_Z.
  [[nodiscard]] Vector apply_weighted_adjoint(const Vector& w) const {
    return spaces_->m_theta.solve(apply_adjoint(spaces_->m_z.apply(w)));
  }

 private:
  KktOperator kkt_;
  ParamJacobianOperator b_;
  ProblemDims dims_;
  const WeightedSpaces* spaces_;
  ProblemPtr problem_;  // keeps spaces_ alive
};

/// D restricted to a coordinate range of the parameters (D composed with the
/// coordinate projection onto [begin, end)).
template <SensitivityLike Op>
class ProjectedSensitivity {
 public:
  ProjectedSensitivity(const Op& d, Index begin, Index end) : d_(&d), begin_(begin), end_(end) {
    if (begin < 0 || end > d.in_dim() || begin >= end) throw std::invalid_argument("ProjectedSensitivity: bad range");
  }
  [[nodiscard]] Index in_dim() const { return d_->in_dim(); }
  [[nodiscard]] Index out_dim() const { return d_->out_dim(); }
  [[nodiscard]] Vector apply(const Vector& phi) const { return d_->apply(project(phi)); }
  [[nodiscard]] Vector apply_adjoint(const Vector& w) const { return project(d_->apply_adjoint(w)); }

 private:
  [[nodiscard]] Vector project(const Vector& v) const {
    Vector out = Vector::Zero(v.size());
    out.segment(begin_, end_ - begin_) = v.segment(begin_, end_ - begin_);
    return out;
  }
  const Op* d_;
  Index begin_;
  Index end_;
};

/// Explicit matrix acting as a sensitivity operator.
class MatrixSensitivity {
 public:
  explicit MatrixSensitivity(Matrix d) : d_(std::move(d)) {}
  [[nodiscard]] Index in_dim() const { return d_.cols(); }
  [[nodiscard]] Index out_dim() const { return d_.rows(); }
  [[nodiscard]] Vector apply(const Vector& phi) const { return d_ * phi; }
  [[nodiscard]] Vector apply_adjoint(const Vector& w) const { return d_.transpose() * w; }
  [[nodiscard]] const Matrix& matrix() const { return d_; }

 private:
  Matrix d_;
};

}  // namespace hdsa
