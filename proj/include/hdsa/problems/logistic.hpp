// Scalar toy problem:
//   min (u - 2)^2 + 0.0005 z^2   s.t.   u = 1 / (1 + exp(-theta_1 z)) + theta_2
// written as c(u, z, theta) = u - s(theta_1 z) - theta_2 with s the logistic function.
#pragma once

#include <cmath>
#include <memory>

#include "hdsa/problem.hpp"

namespace hdsa::problems {

class LogisticToy final : public ProblemDefinition {
 public:
  static constexpr double kTarget = 2.0;
  static constexpr double kControlWeight = 0.0005;

  LogisticToy() {
    spaces_.m_theta = SpdOperator::identity(2);
    spaces_.m_z = SpdOperator::identity(1);
    spaces_.partition = {{{"theta1", 0, 1}, {"theta2", 1, 2}}};
  }

  [[nodiscard]] std::string name() const override { return "logistic"; }
  [[nodiscard]] ProblemDims dims() const override { return {1, 1, 2, 1}; }
  [[nodiscard]] const WeightedSpaces& spaces() const override { return spaces_; }

  static double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  [[nodiscard]] double objective(const Point& p) const override {
    const double du = p.u[0] - kTarget;
    return du * du + kControlWeight * p.z[0] * p.z[0];
  }

  [[nodiscard]] Vector residual(const Point& p) const override {
    return Vector::Constant(1, p.u[0] - logistic(p.theta[0] * p.z[0]) - p.theta[1]);
  }

  [[nodiscard]] Vector grad_u(const Point& p) const override { return Vector::Constant(1, 2.0 * (p.u[0] - kTarget)); }
  [[nodiscard]] Vector grad_z(const Point& p) const override {
    return Vector::Constant(1, 2.0 * kControlWeight * p.z[0]);
  }
  [[nodiscard]] Vector grad_theta(const Point&) const override { return Vector::Zero(2); }

  [[nodiscard]] Vector jac_u(const Point&, const Vector& v) const override { return v; }
  [[nodiscard]] Vector jac_u_adjoint(const Point&, const Vector& w) const override { return w; }
  [[nodiscard]] Vector jac_z(const Point& p, const Vector& v) const override { return Vector::Constant(1, cz(p) * v[0]); }
  [[nodiscard]] Vector jac_z_adjoint(const Point& p, const Vector& w) const override {
    return Vector::Constant(1, cz(p) * w[0]);
  }
  [[nodiscard]] Vector jac_theta(const Point& p, const Vector& v) const override {
    const Vector g = ctheta(p);
    return Vector::Constant(1, g.dot(v));
  }
  [[nodiscard]] Vector jac_theta_adjoint(const Point& p, const Vector& w) const override { return ctheta(p) * w[0]; }

  [[nodiscard]] Vector hess_uu(const Point&, const Vector& v) const override { return 2.0 * v; }
  [[nodiscard]] Vector hess_uz(const Point&, const Vector&) const override { return Vector::Zero(1); }
  [[nodiscard]] Vector hess_zu(const Point&, const Vector&) const override { return Vector::Zero(1); }
  [[nodiscard]] Vector hess_zz(const Point& p, const Vector& v) const override {
    const double a = p.theta[0];
    const double x = a * p.z[0];
    return Vector::Constant(1, (2.0 * kControlWeight - p.lambda[0] * a * a * d2(x)) * v[0]);
  }
  [[nodiscard]] Vector hess_utheta(const Point&, const Vector&) const override { return Vector::Zero(1); }
  [[nodiscard]] Vector hess_thetau(const Point&, const Vector&) const override { return Vector::Zero(2); }
  [[nodiscard]] Vector hess_ztheta(const Point& p, const Vector& v) const override {
    return Vector::Constant(1, zt(p) * v[0]);
  }
  [[nodiscard]] Vector hess_thetaz(const Point& p, const Vector& v) const override {
    Vector out = Vector::Zero(2);
    out[0] = zt(p) * v[0];
    return out;
  }

  [[nodiscard]] Vector state_jacobian_solve(const Point&, const Vector& rhs) const override { return rhs; }
  [[nodiscard]] Vector state_jacobian_adjoint_solve(const Point&, const Vector& rhs) const override { return rhs; }

 private:
  static double d1(double x) {
    const double s = logistic(x);
    return s * (1.0 - s);
  }
  static double d2(double x) {
    const double s = logistic(x);
    return s * (1.0 - s) * (1.0 - 2.0 * s);
  }
  static double cz(const Point& p) { return -p.theta[0] * d1(p.theta[0] * p.z[0]); }
  static Vector ctheta(const Point& p) {
    Vector g(2);
    g[0] = -p.z[0] * d1(p.theta[0] * p.z[0]);
    g[1] = -1.0;
    return g;
  }
  // d/dtheta_1 of lambda * c_z
  static double zt(const Point& p) {
    const double x = p.theta[0] * p.z[0];
    return -p.lambda[0] * (d1(x) + x * d2(x));
  }

  WeightedSpaces spaces_;
};

inline ProblemPtr build_logistic_toy() { return std::make_shared<const LogisticToy>(); }

}  // namespace hdsa::problems
