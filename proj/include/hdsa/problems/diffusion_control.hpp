// Linear-quadratic distributed control of 1D diffusion:
//
//   min 1/2 |u - d|_M^2 + gamma/2 |z|_M^2
//   s.t. -(kappa(x; theta) u')' = z on (0, 1), u(0) = u(1) = 0
//
// with kappa = kappa_bar (1 + a sum_k theta_k phi_k(x)) over a coarse hat
// basis. Discretized by P1 elements, c(u, z, theta) = A(theta) u - M z, so
// A is affine in theta and, for gamma = 0, z_opt = M^{-1} A(theta) d is affine
// in theta as well.
#pragma once

#include <memory>

#include "hdsa/fem1d.hpp"
#include "hdsa/problem.hpp"

namespace hdsa::problems {

struct DiffusionControlConfig {
  Index n_nodes = 64;   // interior state nodes
  Index n_params = 16;  // coarse hat functions for the coefficient
  double gamma = 0.01;
  double kappa_bar = 1.0;
  double amplitude = 0.2;
  fem1d::AnalyticProfile target{fem1d::AnalyticProfile::Kind::kSine, 1.0, 0.5, 0.1, 1.0};
};

class DiffusionControl1D final : public ProblemDefinition {
 public:
  explicit DiffusionControl1D(const DiffusionControlConfig& cfg) : cfg_(cfg) {
    if (cfg.n_nodes < 2) throw std::invalid_argument("diffusion_control: n_nodes must be at least 2");
    if (cfg.n_params < 1) throw std::invalid_argument("diffusion_control: n_params must be positive");
    if (cfg.gamma < 0.0) throw std::invalid_argument("diffusion_control: gamma must be nonnegative");
    if (!(cfg.kappa_bar > 0.0)) throw std::invalid_argument("diffusion_control: kappa_bar must be positive");
    grid_ = {cfg.n_nodes + 1, true};
    mass_ = fem1d::mass_matrix(grid_);
    coeff_map_ = cfg.kappa_bar * cfg.amplitude * fem1d::element_basis_matrix(grid_, cfg.n_params);
    target_ = fem1d::interpolate(grid_, cfg.target);
    spaces_.m_z = SpdOperator::from_matrix(mass_.dense());
    spaces_.m_theta = SpdOperator::from_matrix(fem1d::hat_mass_matrix(cfg.n_params));
    spaces_.partition = SetPartition::single("kappa", cfg.n_params);
  }

  [[nodiscard]] std::string name() const override { return "diffusion_control"; }
  [[nodiscard]] ProblemDims dims() const override {
    return {cfg_.n_nodes, cfg_.n_nodes, cfg_.n_params, cfg_.n_nodes};
  }
  [[nodiscard]] const WeightedSpaces& spaces() const override { return spaces_; }
  [[nodiscard]] bool linear_in_state() const override { return true; }

  [[nodiscard]] const DiffusionControlConfig& config() const { return cfg_; }
  [[nodiscard]] const Vector& target() const { return target_; }
  [[nodiscard]] const fem1d::Grid& grid() const { return grid_; }
  [[nodiscard]] const fem1d::Tridiagonal& mass() const { return mass_; }

  /// Element values of kappa; throws if ellipticity is lost.
  [[nodiscard]] Vector element_kappa(const Vector& theta) const {
    require_dim(theta, cfg_.n_params, "diffusion_control theta");
    Vector k = Vector::Constant(grid_.n_elements, cfg_.kappa_bar) + coeff_map_ * theta;
    for (Index e = 0; e < k.size(); ++e) {
      if (!(k[e] > 0.0)) {
        throw std::domain_error("diffusion_control: kappa is non-positive on element " + std::to_string(e));
      }
    }
    return k;
  }

  [[nodiscard]] fem1d::Tridiagonal stiffness(const Vector& theta) const {
    return fem1d::stiffness_matrix(grid_, element_kappa(theta));
  }

  [[nodiscard]] double objective(const Point& p) const override {
    const Vector e = p.u - target_;
    return 0.5 * e.dot(mass_.apply(e)) + 0.5 * cfg_.gamma * p.z.dot(mass_.apply(p.z));
  }

  [[nodiscard]] Vector residual(const Point& p) const override {
    return stiffness(p.theta).apply(p.u) - mass_.apply(p.z);
  }

  [[nodiscard]] Vector grad_u(const Point& p) const override { return mass_.apply(p.u - target_); }
  [[nodiscard]] Vector grad_z(const Point& p) const override { return cfg_.gamma * mass_.apply(p.z); }
  [[nodiscard]] Vector grad_theta(const Point&) const override { return Vector::Zero(cfg_.n_params); }

  [[nodiscard]] Vector jac_u(const Point& p, const Vector& v) const override { return stiffness(p.theta).apply(v); }
  [[nodiscard]] Vector jac_u_adjoint(const Point& p, const Vector& w) const override {
    return stiffness(p.theta).apply_transpose(w);
  }
  [[nodiscard]] Vector jac_z(const Point&, const Vector& v) const override { return -mass_.apply(v); }
  [[nodiscard]] Vector jac_z_adjoint(const Point&, const Vector& w) const override { return -mass_.apply(w); }
  [[nodiscard]] Vector jac_theta(const Point& p, const Vector& v) const override {
    return fem1d::stiffness_matrix(grid_, coeff_map_ * v).apply(p.u);
  }
  [[nodiscard]] Vector jac_theta_adjoint(const Point& p, const Vector& w) const override {
    return coeff_map_.transpose() * fem1d::stiffness_element_products(grid_, w, p.u);
  }

  [[nodiscard]] Vector hess_uu(const Point&, const Vector& v) const override { return mass_.apply(v); }
  [[nodiscard]] Vector hess_uz(const Point&, const Vector&) const override { return Vector::Zero(cfg_.n_nodes); }
  [[nodiscard]] Vector hess_zu(const Point&, const Vector&) const override { return Vector::Zero(cfg_.n_nodes); }
  [[nodiscard]] Vector hess_zz(const Point&, const Vector& v) const override { return cfg_.gamma * mass_.apply(v); }
  [[nodiscard]] Vector hess_utheta(const Point& p, const Vector& v) const override {
    return fem1d::stiffness_matrix(grid_, coeff_map_ * v).apply(p.lambda);
  }
  [[nodiscard]] Vector hess_thetau(const Point& p, const Vector& v) const override {
    return coeff_map_.transpose() * fem1d::stiffness_element_products(grid_, p.lambda, v);
  }
  [[nodiscard]] Vector hess_ztheta(const Point&, const Vector&) const override { return Vector::Zero(cfg_.n_nodes); }
  [[nodiscard]] Vector hess_thetaz(const Point&, const Vector&) const override { return Vector::Zero(cfg_.n_params); }

  [[nodiscard]] Vector state_jacobian_solve(const Point& p, const Vector& rhs) const override {
    return stiffness(p.theta).solve(rhs);
  }
  [[nodiscard]] Vector state_jacobian_adjoint_solve(const Point& p, const Vector& rhs) const override {
    return stiffness(p.theta).solve_transpose(rhs);
  }

 private:
  DiffusionControlConfig cfg_;
  fem1d::Grid grid_;
  fem1d::Tridiagonal mass_;
  Matrix coeff_map_;  // element kappa perturbation per unit theta_k
  Vector target_;
  WeightedSpaces spaces_;
};

inline ProblemPtr build_diffusion_control_1d(const DiffusionControlConfig& cfg = {}) {
  return std::make_shared<const DiffusionControl1D>(cfg);
}

}  // namespace hdsa::problems
