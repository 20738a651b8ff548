// Problem abstraction: objective J(u, z, theta), constraint c(u, z, theta) = 0
// and every first/second derivative block of L = J + <lambda, c>.
#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "hdsa/linalg.hpp"
#include "hdsa/random.hpp"

namespace hdsa {

struct ProblemDims {
  Index n_u = 0;
  Index n_z = 0;
  Index n_theta = 0;
  Index n_lambda = 0;

  [[nodiscard]] Index stacked() const { return n_u + n_z + n_lambda; }
};

/// Evaluation point (u, z, lambda, theta). Blocks that do not involve lambda
/// ignore it.
struct Point {
  Vector u;
  Vector z;
  Vector lambda;
  Vector theta;
};

/// Ordered named coordinate ranges [begin, end) covering the parameter vector.
struct SetPartition {
  struct Set {
    std::string name;
    Index begin = 0;
    Index end = 0;
  };
  std::vector<Set> sets;

  static SetPartition single(std::string name, Index n) { return {{{std::move(name), 0, n}}}; }

  void validate(Index n_theta) const {
    if (sets.empty()) throw std::invalid_argument("SetPartition: no sets");
    std::vector<int> hits(static_cast<std::size_t>(n_theta), 0);
    for (const auto& s : sets) {
      if (s.begin < 0 || s.end > n_theta || s.begin >= s.end) {
        throw std::invalid_argument("SetPartition: set '" + s.name + "' has an invalid range");
      }
      for (Index i = s.begin; i < s.end; ++i) ++hits[static_cast<std::size_t>(i)];
    }
    for (Index i = 0; i < n_theta; ++i) {
      if (hits[static_cast<std::size_t>(i)] != 1) {
        throw std::invalid_argument("SetPartition: coordinate " + std::to_string(i) +
                                    " is not covered exactly once");
      }
    }
  }
};

struct WeightedSpaces {
  SpdOperator m_theta;
  SpdOperator m_z;
  SetPartition partition;
};

class ProblemDefinition {
 public:
  virtual ~ProblemDefinition() = default;

  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual ProblemDims dims() const = 0;
  [[nodiscard]] virtual const WeightedSpaces& spaces() const = 0;
  /// True when c is affine in u, so a forward solve is a single linear solve.
  [[nodiscard]] virtual bool linear_in_state() const { return false; }

  [[nodiscard]] virtual double objective(const Point& p) const = 0;
  [[nodiscard]] virtual Vector residual(const Point& p) const = 0;

  [[nodiscard]] virtual Vector grad_u(const Point& p) const = 0;
  [[nodiscard]] virtual Vector grad_z(const Point& p) const = 0;
  [[nodiscard]] virtual Vector grad_theta(const Point& p) const = 0;

  // Constraint Jacobian actions and their transposes.
  [[nodiscard]] virtual Vector jac_u(const Point& p, const Vector& v) const = 0;
  [[nodiscard]] virtual Vector jac_u_adjoint(const Point& p, const Vector& w) const = 0;
  [[nodiscard]] virtual Vector jac_z(const Point& p, const Vector& v) const = 0;
  [[nodiscard]] virtual Vector jac_z_adjoint(const Point& p, const Vector& w) const = 0;
  [[nodiscard]] virtual Vector jac_theta(const Point& p, const Vector& v) const = 0;
  [[nodiscard]] virtual Vector jac_theta_adjoint(const Point& p, const Vector& w) const = 0;

  // Lagrangian second derivatives. hess_ab maps a b-direction into the a-space.
  [[nodiscard]] virtual Vector hess_uu(const Point& p, const Vector& v) const = 0;
  [[nodiscard]] virtual Vector hess_uz(const Point& p, const Vector& v_z) const = 0;
  [[nodiscard]] virtual Vector hess_zu(const Point& p, const Vector& v_u) const = 0;
  [[nodiscard]] virtual Vector hess_zz(const Point& p, const Vector& v) const = 0;
  [[nodiscard]] virtual Vector hess_utheta(const Point& p, const Vector& v_theta) const = 0;
  [[nodiscard]] virtual Vector hess_thetau(const Point& p, const Vector& v_u) const = 0;
  [[nodiscard]] virtual Vector hess_ztheta(const Point& p, const Vector& v_theta) const = 0;
  [[nodiscard]] virtual Vector hess_thetaz(const Point& p, const Vector& v_z) const = 0;

  /// Solves c_u x = rhs at the point.
  [[nodiscard]] virtual Vector state_jacobian_solve(const Point& p, const Vector& rhs) const = 0;
  /// Solves c_u^T x = rhs at the point.
  [[nodiscard]] virtual Vector state_jacobian_adjoint_solve(const Point& p, const Vector& rhs) const = 0;

  // Gradients of the Lagrangian, used by the finite-difference checks.
  [[nodiscard]] Vector lagrangian_grad_u(const Point& p) const { return grad_u(p) + jac_u_adjoint(p, p.lambda); }
  [[nodiscard]] Vector lagrangian_grad_z(const Point& p) const { return grad_z(p) + jac_z_adjoint(p, p.lambda); }
  [[nodiscard]] Vector lagrangian_grad_theta(const Point& p) const {
    return grad_theta(p) + jac_theta_adjoint(p, p.lambda);
  }
};

using ProblemPtr = std::shared_ptr<const ProblemDefinition>;

inline Point zero_point(const ProblemDims& d) {
  return {Vector::Zero(d.n_u), Vector::Zero(d.n_z), Vector::Zero(d.n_lambda), Vector::Zero(d.n_theta)};
}

// ---------------------------------------------------------------------------
// Finite-difference audit
// ---------------------------------------------------------------------------

struct DerivativeCheck {
  std::string block;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct DerivativeReport {
  std::vector<DerivativeCheck> checks;

  [[nodiscard]] bool passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return !checks.empty();
  }
};

namespace detail {

enum class Slot { kU, kZ, kTheta, kLambda };

inline Point shifted(const Point& p, Slot s, const Vector& dir, double h) {
  Point q = p;
  switch (s) {
    case Slot::kU: q.u += h * dir; break;
    case Slot::kZ: q.z += h * dir; break;
    case Slot::kTheta: q.theta += h * dir; break;
    case Slot::kLambda: q.lambda += h * dir; break;
  }
  return q;
}

inline double relative_gap(const Vector& analytic, const Vector& reference) {
  const double scale = std::max({analytic.norm(), reference.norm(), 1e-6});
  return (analytic - reference).norm() / scale;
}

inline double relative_gap(double analytic, double reference) {
  const double scale = std::max({std::abs(analytic), std::abs(reference), 1e-6});
  return std::abs(analytic - reference) / scale;
}

}  // namespace detail

/// Central finite differences of every first- and second-derivative block,
/// plus transpose consistency and state-solve round trips. A block passes when
/// its relative error is at most max(50 h^2, 1e-6); transpose pairings use 1e-10.
inline DerivativeReport check_derivatives(const ProblemDefinition& prob, const Point& point, double h = 1e-4,
                                          std::uint64_t seed = 2024) {
  using detail::Slot;
  if (!(h >= 1e-7 && h <= 1e-2)) throw std::invalid_argument("check_derivatives: h must lie in [1e-7, 1e-2]");
  const ProblemDims d = prob.dims();
  KeyedRng rng(seed, StreamPurpose::kTesting);
  const Vector du = rng.normal_vector(d.n_u);
  const Vector dz = rng.normal_vector(d.n_z);
  const Vector dt = rng.normal_vector(d.n_theta);
  const Vector wl = rng.normal_vector(d.n_lambda);
  const Vector wu = rng.normal_vector(d.n_u);
  const Vector wz = rng.normal_vector(d.n_z);

  const double fd_tol = std::max(50.0 * h * h, 1e-6);
  constexpr double adj_tol = 1e-10;
  DerivativeReport report;
  auto record = [&](std::string name, double err, double tol) {
    report.checks.push_back({std::move(name), err, tol, err <= tol});
  };

  auto fd_scalar = [&](Slot s, const Vector& dir) {
    return (prob.objective(detail::shifted(point, s, dir, h)) - prob.objective(detail::shifted(point, s, dir, -h))) /
           (2.0 * h);
  };
  auto fd_vector = [&](auto&& f, Slot s, const Vector& dir) -> Vector {
    return (f(detail::shifted(point, s, dir, h)) - f(detail::shifted(point, s, dir, -h))) / (2.0 * h);
  };
  auto residual = [&](const Point& q) { return prob.residual(q); };
  auto lu = [&](const Point& q) { return prob.lagrangian_grad_u(q); };
  auto lz = [&](const Point& q) { return prob.lagrangian_grad_z(q); };
  auto lt = [&](const Point& q) { return prob.lagrangian_grad_theta(q); };

  record("J_u", detail::relative_gap(prob.grad_u(point).dot(du), fd_scalar(Slot::kU, du)), fd_tol);
  record("J_z", detail::relative_gap(prob.grad_z(point).dot(dz), fd_scalar(Slot::kZ, dz)), fd_tol);
  record("J_theta", detail::relative_gap(prob.grad_theta(point).dot(dt), fd_scalar(Slot::kTheta, dt)), fd_tol);

  record("c_u", detail::relative_gap(prob.jac_u(point, du), fd_vector(residual, Slot::kU, du)), fd_tol);
  record("c_z", detail::relative_gap(prob.jac_z(point, dz), fd_vector(residual, Slot::kZ, dz)), fd_tol);
  record("c_theta", detail::relative_gap(prob.jac_theta(point, dt), fd_vector(residual, Slot::kTheta, dt)), fd_tol);

  record("L_uu", detail::relative_gap(prob.hess_uu(point, du), fd_vector(lu, Slot::kU, du)), fd_tol);
  record("L_uz", detail::relative_gap(prob.hess_uz(point, dz), fd_vector(lu, Slot::kZ, dz)), fd_tol);
  record("L_zu", detail::relative_gap(prob.hess_zu(point, du), fd_vector(lz, Slot::kU, du)), fd_tol);
  record("L_zz", detail::relative_gap(prob.hess_zz(point, dz), fd_vector(lz, Slot::kZ, dz)), fd_tol);
  record("L_utheta", detail::relative_gap(prob.hess_utheta(point, dt), fd_vector(lu, Slot::kTheta, dt)), fd_tol);
  record("L_ztheta", detail::relative_gap(prob.hess_ztheta(point, dt), fd_vector(lz, Slot::kTheta, dt)), fd_tol);
  record("L_thetau", detail::relative_gap(prob.hess_thetau(point, du), fd_vector(lt, Slot::kU, du)), fd_tol);
  record("L_thetaz", detail::relative_gap(prob.hess_thetaz(point, dz), fd_vector(lt, Slot::kZ, dz)), fd_tol);

  auto pairing = [](double a, double b, double scale) { return std::abs(a - b) / std::max(scale, 1e-300); };
  auto adjoint_check = [&](const char* name, const Vector& fv, const Vector& w, const Vector& v, const Vector& ftw) {
    const double scale = std::max(fv.norm() * w.norm(), v.norm() * ftw.norm());
    record(name, pairing(fv.dot(w), v.dot(ftw), scale), adj_tol);
  };
  adjoint_check("c_u adjoint", prob.jac_u(point, du), wl, du, prob.jac_u_adjoint(point, wl));
  adjoint_check("c_z adjoint", prob.jac_z(point, dz), wl, dz, prob.jac_z_adjoint(point, wl));
  adjoint_check("c_theta adjoint", prob.jac_theta(point, dt), wl, dt, prob.jac_theta_adjoint(point, wl));
  adjoint_check("L_uu symmetry", prob.hess_uu(point, du), wu, du, prob.hess_uu(point, wu));
  adjoint_check("L_zz symmetry", prob.hess_zz(point, dz), wz, dz, prob.hess_zz(point, wz));
  adjoint_check("L_uz/L_zu symmetry", prob.hess_uz(point, dz), wu, dz, prob.hess_zu(point, wu));
  adjoint_check("L_utheta/L_thetau symmetry", prob.hess_utheta(point, dt), wu, dt, prob.hess_thetau(point, wu));
  adjoint_check("L_ztheta/L_thetaz symmetry", prob.hess_ztheta(point, dt), wz, dt, prob.hess_thetaz(point, wz));

  const Vector x = prob.state_jacobian_solve(point, wl);
  record("state solve", (prob.jac_u(point, x) - wl).norm() / wl.norm(), 1e-10);
  const Vector y = prob.state_jacobian_adjoint_solve(point, wu);
  record("state adjoint solve", (prob.jac_u_adjoint(point, y) - wu).norm() / wu.norm(), 1e-10);
  return report;
}

}  // namespace hdsa
