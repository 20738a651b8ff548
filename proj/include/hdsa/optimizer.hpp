// Reduced-space Newton-CG for min_z J(u(z), z) subject to c(u, z, theta) = 0,
// plus the forward/adjoint solves, the second-order check and input sampling.
#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdsa/linalg.hpp"
#include "hdsa/problem.hpp"
#include "hdsa/random.hpp"

namespace hdsa {

class OptimizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ForwardConfig {
  double tol = 1e-12;  // absolute, or relative to the initial residual
  int max_iter = 50;
};

struct OptimizerConfig {
  double stationarity_tol = 1e-9;  // on the M_Z^{-1} norm of the reduced gradient
  int max_outer = 100;
  double cg_tol = 1e-10;
  double armijo_c1 = 1e-4;
  double min_step = 1e-14;
  bool enforce_sosc = true;
  ForwardConfig forward;
};

struct OptimalPoint {
  Point point;  // (u0, z0, lambda0, theta0)
  double objective = 0.0;
  double residual_norm = 0.0;
  double grad_norm = 0.0;         // ||J_z + c_z^T lambda||_{M^{-1}}
  double adjoint_residual = 0.0;  // ||J_u + c_u^T lambda||
  double sosc_min_eig = 0.0;
  bool sosc_checked = false;
  int iterations = 0;
};

inline Vector solve_forward(const ProblemDefinition& p, const Vector& z, const Vector& theta, const Vector& u_guess,
                            const ForwardConfig& cfg = {}) {
  const ProblemDims d = p.dims();
  require_dim(z, d.n_z, "solve_forward z");
  require_dim(theta, d.n_theta, "solve_forward theta");
  require_dim(u_guess, d.n_u, "solve_forward u_guess");
  Point pt{u_guess, z, Vector::Zero(d.n_lambda), theta};
  Vector r = p.residual(pt);
  double rnorm = r.norm();
  const double target = std::max(cfg.tol, cfg.tol * rnorm);
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (rnorm <= target) return pt.u;
    const Vector du = -p.state_jacobian_solve(pt, r);
    double step = 1.0;
    Point trial = pt;
    double trial_norm = 0.0;
    for (int halving = 0; halving < 40; ++halving) {
      trial.u = pt.u + step * du;
      r = p.residual(trial);
      trial_norm = r.norm();
      if (p.linear_in_state() || trial_norm < rnorm) break;
      step *= 0.5;
    }
    pt.u = trial.u;
    rnorm = trial_norm;
    if (!std::isfinite(rnorm)) break;
  }
  if (rnorm <= target) return pt.u;
  std::ostringstream msg;
  msg << "solve_forward: Newton did not converge, last residual norm " << rnorm;
  throw OptimizationError(msg.str());
}

/// lambda with c_u^T lambda = -J_u.
inline Vector solve_adjoint(const ProblemDefinition& p, const Vector& u, const Vector& z, const Vector& theta) {
  const ProblemDims d = p.dims();
  Point pt{u, z, Vector::Zero(d.n_lambda), theta};
  Vector lambda = p.state_jacobian_adjoint_solve(pt, -p.grad_u(pt));
  if (!lambda.allFinite()) throw OptimizationError("solve_adjoint: singular state Jacobian");
  return lambda;
}

inline Vector reduced_gradient(const ProblemDefinition& p, const Point& pt) {
  return p.grad_z(pt) + p.jac_z_adjoint(pt, pt.lambda);
}

/// Reduced Hessian H v at a point with consistent (u, lambda).
inline Vector reduced_hessian_apply(const ProblemDefinition& p, const Point& pt, const Vector& v) {
  const Vector y = p.state_jacobian_solve(pt, p.jac_z(pt, v));
  const Vector q = p.hess_uu(pt, y) - p.hess_uz(pt, v);
  const Vector mu = p.state_jacobian_adjoint_solve(pt, q);
  return p.hess_zz(pt, v) - p.hess_zu(pt, y) + p.jac_z_adjoint(pt, mu);
}

inline Matrix dense_reduced_hessian(const ProblemDefinition& p, const Point& pt) {
  const Index n = p.dims().n_z;
  Matrix h(n, n);
  for (Index j = 0; j < n; ++j) h.col(j) = reduced_hessian_apply(p, pt, Vector::Unit(n, j));
  return 0.5 * (h + h.transpose());
}

namespace detail {

// Smallest eigenvalue of a symmetric map by Lanczos with full reorthogonalization.
inline double lanczos_min_eig(const LinearMap& op, double rel_tol, int max_steps, std::uint64_t seed) {
  const Index n = op.in_dim();
  KeyedRng rng(seed, StreamPurpose::kTesting, 0x5050);
  Vector q = rng.normal_vector(n);
  q.normalize();
  std::vector<Vector> basis{q};
  std::vector<double> alpha;
  std::vector<double> beta;
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 0; k < max_steps && k < n; ++k) {
    Vector w = op.apply(basis.back());
    alpha.push_back(basis.back().dot(w));
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) w -= b.dot(w) * b;
    }
    const Index m = static_cast<Index>(alpha.size());
    Matrix t = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    const double current = dense_sym_eig(t).values[m - 1];
    const double nb = w.norm();
    if (nb <= 1e-14 * std::max(1.0, std::abs(current))) return current;
    if (std::abs(current - previous) <= rel_tol * std::max(std::abs(current), 1e-300)) return current;
    previous = current;
    beta.push_back(nb);
    basis.push_back(w / nb);
  }
  return previous;
}

}  // namespace detail

/// Smallest eigenvalue of the reduced Hessian at a stationary point.
inline double check_sosc(const ProblemDefinition& p, const Point& pt) {
  const Index n = p.dims().n_z;
  if (n <= kDenseThreshold) return dense_sym_eig(dense_reduced_hessian(p, pt)).values[n - 1];
  const LinearMap h = LinearMap::self_adjoint(n, [&p, &pt](const Vector& v) { return reduced_hessian_apply(p, pt, v); });
  return detail::lanczos_min_eig(h, 1e-6, 300, 7);
}

/// Fills u and lambda for the given (z, theta); returns the point.
inline Point complete_point(const ProblemDefinition& p, const Vector& z, const Vector& theta, const Vector& u_guess,
                            const ForwardConfig& fwd) {
  Point pt;
  pt.z = z;
  pt.theta = theta;
  pt.u = solve_forward(p, z, theta, u_guess, fwd);
  pt.lambda = solve_adjoint(p, pt.u, z, theta);
  return pt;
}

namespace detail {

struct NewtonDirection {
  Vector step;
  bool negative_curvature = false;
};

// CG on H p = -g with a Steihaug-style exit on nonpositive curvature.
inline NewtonDirection steihaug_direction(const ProblemDefinition& p, const Point& pt, const Vector& g, double tol,
                                          int max_iter) {
  NewtonDirection out{Vector::Zero(g.size()), false};
  Vector r = -g;
  Vector dir = r;
  double rr = r.dot(r);
  const double stop = tol * std::sqrt(rr);
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= stop) break;
    const Vector hd = reduced_hessian_apply(p, pt, dir);
    const double curv = dir.dot(hd);
    if (!(curv > 0.0)) {
      out.negative_curvature = true;
      if (it == 0) out.step = -g;
      break;
    }
    const double a = rr / curv;
    out.step += a * dir;
    r -= a * hd;
    const double rr_new = r.dot(r);
    dir = r + (rr_new / rr) * dir;
    rr = rr_new;
  }
  return out;
}

}  // namespace detail

inline OptimalPoint solve_optimization(const ProblemDefinition& p, const Vector& theta0, const Vector& z_init,
                                       const OptimizerConfig& cfg = {}, const Vector* u_init = nullptr) {
  const ProblemDims d = p.dims();
  require_dim(theta0, d.n_theta, "solve_optimization theta0");
  require_dim(z_init, d.n_z, "solve_optimization initial iterate");
  const SpdOperator& mz = p.spaces().m_z;
  Point pt = complete_point(p, z_init, theta0, u_init ? *u_init : Vector::Zero(d.n_u), cfg.forward);
  double f = p.objective(pt);
  Vector g = reduced_gradient(p, pt);
  double gnorm = std::sqrt(std::max(0.0, g.dot(mz.solve(g))));
  int it = 0;
  for (; it < cfg.max_outer && gnorm > cfg.stationarity_tol; ++it) {
    const auto dir = detail::steihaug_direction(p, pt, g, cfg.cg_tol, static_cast<int>(2 * d.n_z + 50));
    double slope = g.dot(dir.step);
    Vector step = dir.step;
    if (!(slope < 0.0)) {
      step = -g;
      slope = -g.dot(g);
    }
    double alpha = 1.0;
    const double step_norm = step.norm();
    bool accepted = false;
    Point trial;
    double f_trial = 0.0;
    while (alpha * step_norm >= cfg.min_step * std::max(1.0, pt.z.norm())) {
      try {
        trial = complete_point(p, pt.z + alpha * step, theta0, pt.u, cfg.forward);
        f_trial = p.objective(trial);
        if (std::isfinite(f_trial) &&
            f_trial <= f + cfg.armijo_c1 * alpha * slope + 1e-14 * std::max(1.0, std::abs(f))) {
          accepted = true;
          break;
        }
      } catch (const std::domain_error&) {
        // step left the domain of the constraint; shrink
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "solve_optimization: line search failed at iteration " << it << " (objective " << f
          << ", reduced gradient norm " << gnorm << ", directional derivative " << slope << ")";
      throw OptimizationError(msg.str());
    }
    pt = trial;
    f = f_trial;
    g = reduced_gradient(p, pt);
    gnorm = std::sqrt(std::max(0.0, g.dot(mz.solve(g))));
  }
  if (gnorm > cfg.stationarity_tol) {
    std::ostringstream msg;
    msg << "solve_optimization: no stationary point after " << it << " iterations (reduced gradient norm " << gnorm
        << ")";
    throw OptimizationError(msg.str());
  }

  OptimalPoint out;
  out.point = pt;
  out.objective = f;
  out.residual_norm = p.residual(pt).norm();
  out.grad_norm = gnorm;
  out.adjoint_residual = (p.grad_u(pt) + p.jac_u_adjoint(pt, pt.lambda)).norm();
  out.iterations = it;
  if (cfg.enforce_sosc) {
    out.sosc_min_eig = check_sosc(p, pt);
    out.sosc_checked = true;
    if (!(out.sosc_min_eig > 0.0)) {
      std::ostringstream msg;
      msg << "solve_optimization: not a verified local minimizer (smallest reduced Hessian eigenvalue "
          << out.sosc_min_eig << ")";
      throw OptimizationError(msg.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Input sampling
// ---------------------------------------------------------------------------

struct Distribution {
  enum class Kind { kUniform, kNormal, kFixed };
  Kind kind = Kind::kUniform;
  double a = -1.0;  // uniform low, normal mean, or fixed value
  double b = 1.0;   // uniform high or normal standard deviation

  static Distribution uniform(double lo, double hi) { return {Kind::kUniform, lo, hi}; }
  static Distribution normal(double mean, double std) { return {Kind::kNormal, mean, std}; }
  static Distribution fixed(double value) { return {Kind::kFixed, value, 0.0}; }

  [[nodiscard]] double mean() const { return kind == Kind::kUniform ? 0.5 * (a + b) : a; }

  double draw(KeyedRng& rng) const {
    switch (kind) {
      case Kind::kUniform:
        return rng.uniform(a, b);
      case Kind::kNormal:
        return a + b * rng.normal();
      case Kind::kFixed:
        return a;
    }
    return 0.0;
  }
};

enum class InitialIterateMode { kZero, kRandom };

struct SamplingPlan {
  std::vector<Distribution> coordinates;  // one per parameter, or a single entry for all
  InitialIterateMode init_mode = InitialIterateMode::kZero;
  double init_scale = 1.0;
  std::uint64_t seed = 1;
};

struct SampledInputs {
  Vector theta;
  Vector z_init;
};

inline SampledInputs sample_inputs(const SamplingPlan& plan, Index n_theta, Index n_z, std::uint64_t j) {
  if (plan.coordinates.empty()) throw std::invalid_argument("sample_inputs: no parameter distributions");
  if (plan.coordinates.size() != 1 && static_cast<Index>(plan.coordinates.size()) != n_theta) {
    throw DimensionError("sample_inputs: expected 1 or " + std::to_string(n_theta) + " distributions, got " +
                         std::to_string(plan.coordinates.size()));
  }
  SampledInputs out{Vector(n_theta), Vector::Zero(n_z)};
  KeyedRng rng(plan.seed, StreamPurpose::kParameterSample, j);
  for (Index i = 0; i < n_theta; ++i) {
    const auto& dist = plan.coordinates.size() == 1 ? plan.coordinates[0] : plan.coordinates[static_cast<std::size_t>(i)];
    out.theta[i] = dist.draw(rng);
  }
  if (plan.init_mode == InitialIterateMode::kRandom) {
    KeyedRng init_rng(plan.seed, StreamPurpose::kInitialIterate, j);
    out.z_init = plan.init_scale * init_rng.normal_vector(n_z);
  }
  return out;
}

}  // namespace hdsa
