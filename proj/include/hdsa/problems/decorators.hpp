// Wrappers that forward to another problem and change one aspect of it.
#pragma once

#include <memory>

#include "hdsa/problem.hpp"

namespace hdsa::problems {

class ForwardingProblem : public ProblemDefinition {
 public:
  explicit ForwardingProblem(ProblemPtr inner) : inner_(std::move(inner)) {}

  [[nodiscard]] const ProblemDefinition& inner() const { return *inner_; }

  [[nodiscard]] std::string name() const override { return inner_->name(); }
  [[nodiscard]] ProblemDims dims() const override { return inner_->dims(); }
  [[nodiscard]] const WeightedSpaces& spaces() const override { return inner_->spaces(); }
  [[nodiscard]] bool linear_in_state() const override { return inner_->linear_in_state(); }
  [[nodiscard]] double objective(const Point& p) const override { return inner_->objective(p); }
  [[nodiscard]] Vector residual(const Point& p) const override { return inner_->residual(p); }
  [[nodiscard]] Vector grad_u(const Point& p) const override { return inner_->grad_u(p); }
  [[nodiscard]] Vector grad_z(const Point& p) const override { return inner_->grad_z(p); }
  [[nodiscard]] Vector grad_theta(const Point& p) const override { return inner_->grad_theta(p); }
  [[nodiscard]] Vector jac_u(const Point& p, const Vector& v) const override { return inner_->jac_u(p, v); }
  [[nodiscard]] Vector jac_u_adjoint(const Point& p, const Vector& w) const override { return inner_->jac_u_adjoint(p, w); }
  [[nodiscard]] Vector jac_z(const Point& p, const Vector& v) const override { return inner_->jac_z(p, v); }
  [[nodiscard]] Vector jac_z_adjoint(const Point& p, const Vector& w) const override { return inner_->jac_z_adjoint(p, w); }
  [[nodiscard]] Vector jac_theta(const Point& p, const Vector& v) const override { return inner_->jac_theta(p, v); }
  [[nodiscard]] Vector jac_theta_adjoint(const Point& p, const Vector& w) const override {
    return inner_->jac_theta_adjoint(p, w);
  }
  [[nodiscard]] Vector hess_uu(const Point& p, const Vector& v) const override { return inner_->hess_uu(p, v); }
  [[nodiscard]] Vector hess_uz(const Point& p, const Vector& v) const override { return inner_->hess_uz(p, v); }
  [[nodiscard]] Vector hess_zu(const Point& p, const Vector& v) const override { return inner_->hess_zu(p, v); }
  [[nodiscard]] Vector hess_zz(const Point& p, const Vector& v) const override { return inner_->hess_zz(p, v); }
  [[nodiscard]] Vector hess_utheta(const Point& p, const Vector& v) const override { return inner_->hess_utheta(p, v); }
  [[nodiscard]] Vector hess_thetau(const Point& p, const Vector& v) const override { return inner_->hess_thetau(p, v); }
  [[nodiscard]] Vector hess_ztheta(const Point& p, const Vector& v) const override { return inner_->hess_ztheta(p, v); }
  [[nodiscard]] Vector hess_thetaz(const Point& p, const Vector& v) const override { return inner_->hess_thetaz(p, v); }
  [[nodiscard]] Vector state_jacobian_solve(const Point& p, const Vector& rhs) const override {
    return inner_->state_jacobian_solve(p, rhs);
  }
  [[nodiscard]] Vector state_jacobian_adjoint_solve(const Point& p, const Vector& rhs) const override {
    return inner_->state_jacobian_adjoint_solve(p, rhs);
  }

 protected:
  ProblemPtr inner_;
};

/// Replaces the parameter partition.
class RepartitionedProblem final : public ForwardingProblem {
 public:
  RepartitionedProblem(ProblemPtr inner, SetPartition partition) : ForwardingProblem(std::move(inner)) {
    partition.validate(inner_->dims().n_theta);
    spaces_ = inner_->spaces();
    spaces_.partition = std::move(partition);
  }
  [[nodiscard]] const WeightedSpaces& spaces() const override { return spaces_; }

 private:
  WeightedSpaces spaces_;
};

/// Scales L_zz by (1 + error); the derivative check must catch it.
class CorruptedHessianProblem final : public ForwardingProblem {
 public:
  explicit CorruptedHessianProblem(ProblemPtr inner, double error = 0.1)
      : ForwardingProblem(std::move(inner)), error_(error) {}
  [[nodiscard]] Vector hess_zz(const Point& p, const Vector& v) const override {
    return (1.0 + error_) * inner_->hess_zz(p, v);
  }

 private:
  double error_;
};

}  // namespace hdsa::problems
