// Source inversion for transient 1D advection-diffusion.
//
//   min 1/2 sum_{n,s} (c(t_n, x_s) - d_{n,s})^2 + alpha/2 |z|_M^2
//   s.t. dc/dt + (v c)' - (eps c')' = chi(t) w(t; theta) z(x),  c(0) = 0,
//        zero total flux at x = 0 and x = 1.
//
// Backward Euler in time, P1 elements in space. The state is the stacked
// concentration (c^1, ..., c^N); the residual stacks the per-step equations
//   E(theta) c^n - M c^{n-1} - dt s_n(theta) M z.
//
// Uncertain parameters, in order:
//   velocity field   v = v_bar (1 + a sum_k theta_k phi_k(x))   (hat basis)
//   diffusion        eps = eps_bar (1 + a theta_eps)
//   source window    s_n = chi(t_n) (1 + a sum_w theta_w eta_w(t_n)) (hat basis in time)
#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <vector>

#include "hdsa/fem1d.hpp"
#include "hdsa/problem.hpp"
#include "hdsa/random.hpp"

namespace hdsa::problems {

struct AdvDiffConfig {
  Index n_nodes = 64;  // spatial nodes including both boundaries
  Index n_steps = 40;
  double t_final = 0.4;
  double window_begin = 0.02;
  double window_end = 0.1;
  double diffusion_bar = 0.02;
  double velocity_bar = 1.0;
  double amplitude = 0.2;
  Index velocity_params = 16;
  Index window_params = 8;
  std::vector<double> sensors;  // explicit sensor locations; empty = n_sensors evenly spaced
  Index n_sensors = 16;
  double alpha = 0.0005;
  double noise_level = 0.03;
  std::uint64_t noise_seed = 11;
  Index data_refinement = 2;
  fem1d::AnalyticProfile true_source{fem1d::AnalyticProfile::Kind::kGaussianBump, 1.0, 0.3, 0.05, 1.0};
};

/// Space-time discretization on one grid. Used for the inverse problem and,
/// on a refined grid, for synthetic data.
class AdvDiffDiscretization {
 public:
  AdvDiffDiscretization(const AdvDiffConfig& cfg, Index n_elements) : cfg_(cfg) {
    if (n_elements < 2) throw std::invalid_argument("advdiff: need at least 2 elements");
    if (cfg.n_steps < 1) throw std::invalid_argument("advdiff: n_steps must be positive");
    if (!(cfg.t_final > 0.0)) throw std::invalid_argument("advdiff: t_final must be positive");
    if (!(cfg.window_end > cfg.window_begin)) throw std::invalid_argument("advdiff: empty source window");
    if (!(cfg.diffusion_bar > 0.0)) throw std::invalid_argument("advdiff: diffusion must be positive");
    if (cfg.velocity_params < 1 || cfg.window_params < 1) throw std::invalid_argument("advdiff: parameter counts must be positive");
    grid_ = {n_elements, false};
    mass_ = fem1d::mass_matrix(grid_);
    unit_stiffness_ = fem1d::stiffness_matrix(grid_, Vector::Ones(n_elements));
    velocity_map_ = cfg.velocity_bar * cfg.amplitude * fem1d::element_basis_matrix(grid_, cfg.velocity_params);
    dt_ = cfg.t_final / static_cast<double>(cfg.n_steps);

    std::vector<double> xs = cfg.sensors;
    if (xs.empty()) {
      if (cfg.n_sensors < 1) throw std::invalid_argument("advdiff: need at least one sensor");
      for (Index s = 0; s < cfg.n_sensors; ++s) xs.push_back((static_cast<double>(s) + 0.5) / static_cast<double>(cfg.n_sensors));
    }
    for (double x : xs) {
      if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("advdiff: sensor location outside the domain");
      sensors_.push_back(fem1d::point_evaluation(grid_, x));
    }

    chi_ = Vector::Zero(cfg.n_steps);
    window_basis_ = Matrix::Zero(cfg.n_steps, cfg.window_params);
    for (Index n = 0; n < cfg.n_steps; ++n) {
      const double t = dt_ * static_cast<double>(n + 1);
      if (t >= cfg.window_begin - 1e-12 && t <= cfg.window_end + 1e-12) {
        chi_[n] = 1.0;
        for (Index w = 0; w < cfg.window_params; ++w) {
          window_basis_(n, w) =
              cfg.amplitude * fem1d::hat(cfg.window_params, w, std::clamp(t, cfg.window_begin, cfg.window_end),
                                         cfg.window_begin, cfg.window_end);
        }
      }
    }
  }

  [[nodiscard]] const fem1d::Grid& grid() const { return grid_; }
  [[nodiscard]] const fem1d::Tridiagonal& mass() const { return mass_; }
  [[nodiscard]] Index nx() const { return grid_.n_dofs(); }
  [[nodiscard]] Index nt() const { return cfg_.n_steps; }
  [[nodiscard]] Index n_sensors() const { return static_cast<Index>(sensors_.size()); }
  [[nodiscard]] double dt() const { return dt_; }
  [[nodiscard]] Index n_theta() const { return cfg_.velocity_params + 1 + cfg_.window_params; }
  [[nodiscard]] Index diffusion_index() const { return cfg_.velocity_params; }
  [[nodiscard]] Index window_offset() const { return cfg_.velocity_params + 1; }
  [[nodiscard]] const Vector& window_indicator() const { return chi_; }

  [[nodiscard]] Vector velocity_part(const Vector& theta) const { return theta.head(cfg_.velocity_params); }
  [[nodiscard]] Vector window_part(const Vector& theta) const { return theta.tail(cfg_.window_params); }

  [[nodiscard]] double diffusion(const Vector& theta) const {
    const double eps = cfg_.diffusion_bar * (1.0 + cfg_.amplitude * theta[diffusion_index()]);
    if (!(eps > 0.0)) throw std::domain_error("advdiff: diffusion coefficient is non-positive");
    return eps;
  }
  [[nodiscard]] Vector element_velocity(const Vector& theta) const {
    return Vector::Constant(grid_.n_elements, cfg_.velocity_bar) + velocity_map_ * velocity_part(theta);
  }
  [[nodiscard]] Vector source_scale(const Vector& theta) const {
    return chi_ + window_basis_ * window_part(theta);
  }

  /// E(theta) = M + dt (eps K + C(v)).
  [[nodiscard]] fem1d::Tridiagonal step_matrix(const Vector& theta) const {
    require_dim(theta, n_theta(), "advdiff theta");
    fem1d::Tridiagonal op = diffusion(theta) * unit_stiffness_;
    op += fem1d::advection_matrix(grid_, element_velocity(theta));
    op *= dt_;
    op += mass_;
    return op;
  }

  [[nodiscard]] auto step(const Vector& stacked, Index n) const { return stacked.segment(n * nx(), nx()); }

  /// Forward simulation for a given source; returns the stacked state.
  [[nodiscard]] Vector simulate(const Vector& theta, const Vector& z) const {
    const fem1d::Tridiagonal e = step_matrix(theta);
    const Vector s = source_scale(theta);
    const Vector mz = mass_.apply(z);
    Vector u(nx() * nt());
    Vector prev = Vector::Zero(nx());
    for (Index n = 0; n < nt(); ++n) {
      prev = e.solve(mass_.apply(prev) + dt_ * s[n] * mz);
      u.segment(n * nx(), nx()) = prev;
    }
    return u;
  }

  /// Observations (n_steps x n_sensors) of a stacked state.
  [[nodiscard]] Matrix observe(const Vector& u) const {
    Matrix obs(nt(), n_sensors());
    for (Index n = 0; n < nt(); ++n) {
      const Vector c = step(u, n);
      for (Index s = 0; s < n_sensors(); ++s) obs(n, s) = sensors_[static_cast<std::size_t>(s)].apply(c);
    }
    return obs;
  }

  /// P^T applied to per-step sensor values, stacked.
  [[nodiscard]] Vector observe_transpose(const Matrix& values) const {
    Vector out = Vector::Zero(nx() * nt());
    for (Index n = 0; n < nt(); ++n) {
      Vector c = Vector::Zero(nx());
      for (Index s = 0; s < n_sensors(); ++s) sensors_[static_cast<std::size_t>(s)].add_transpose(c, values(n, s));
      out.segment(n * nx(), nx()) = c;
    }
    return out;
  }

  [[nodiscard]] const fem1d::Tridiagonal& unit_stiffness() const { return unit_stiffness_; }
  [[nodiscard]] const Matrix& velocity_map() const { return velocity_map_; }
  [[nodiscard]] const Matrix& window_basis() const { return window_basis_; }

 private:
  AdvDiffConfig cfg_;
  fem1d::Grid grid_;
  fem1d::Tridiagonal mass_;
  fem1d::Tridiagonal unit_stiffness_;
  Matrix velocity_map_;
  Matrix window_basis_;  // d s_n / d theta_w
  Vector chi_;
  double dt_ = 0.0;
  std::vector<fem1d::PointEvaluation> sensors_;
};

class AdvDiffInversion1D final : public ProblemDefinition {
 public:
  /// Generates synthetic data from the configured true source at nominal
  /// parameters on a grid refined by data_refinement.
  explicit AdvDiffInversion1D(const AdvDiffConfig& cfg) : AdvDiffInversion1D(cfg, Matrix{}) {
    const Index refinement = std::max<Index>(1, cfg.data_refinement);
    const AdvDiffDiscretization fine(cfg, (cfg.n_nodes - 1) * refinement);
    const Vector z_true = fem1d::interpolate(fine.grid(), cfg.true_source);
    const Vector theta0 = Vector::Zero(fine.n_theta());
    Matrix data = fine.observe(fine.simulate(theta0, z_true));
    for (Index n = 0; n < data.rows(); ++n) {
      for (Index s = 0; s < data.cols(); ++s) {
        KeyedRng rng(cfg.noise_seed, StreamPurpose::kSyntheticNoise, static_cast<std::uint64_t>(n),
                     static_cast<std::uint64_t>(s));
        data(n, s) += cfg.noise_level * std::abs(data(n, s)) * rng.normal();
      }
    }
    data_ = data;
  }

  /// Uses the given observations (n_steps x n_sensors) as data.
  AdvDiffInversion1D(const AdvDiffConfig& cfg, Matrix data) : cfg_(cfg), disc_(cfg, cfg.n_nodes - 1), data_(std::move(data)) {
    if (cfg.alpha < 0.0) throw std::invalid_argument("advdiff: alpha must be nonnegative");
    if (cfg.noise_level < 0.0) throw std::invalid_argument("advdiff: noise level must be nonnegative");
    if (data_.size() != 0 && (data_.rows() != disc_.nt() || data_.cols() != disc_.n_sensors())) {
      throw DimensionError("advdiff: data has the wrong shape");
    }
    if (data_.size() == 0) data_ = Matrix::Zero(disc_.nt(), disc_.n_sensors());
    const Matrix m = disc_.mass().dense();
    spaces_.m_z = SpdOperator::from_matrix(m);
    spaces_.m_theta = SpdOperator::block_diagonal(
        {SpdOperator::from_matrix(fem1d::hat_mass_matrix(cfg.velocity_params)), SpdOperator::identity(1),
         SpdOperator::from_matrix(fem1d::hat_mass_matrix(cfg.window_params, cfg.window_begin, cfg.window_end))});
    const Index nv = cfg.velocity_params;
    spaces_.partition = {{{"velocity", 0, nv}, {"diffusion", nv, nv + 1}, {"source_window", nv + 1, disc_.n_theta()}}};
  }

  [[nodiscard]] std::string name() const override { return "advdiff_inversion"; }
  [[nodiscard]] ProblemDims dims() const override {
    const Index nu = disc_.nx() * disc_.nt();
    return {nu, disc_.nx(), disc_.n_theta(), nu};
  }
  [[nodiscard]] const WeightedSpaces& spaces() const override { return spaces_; }
  [[nodiscard]] bool linear_in_state() const override { return true; }

  [[nodiscard]] const AdvDiffDiscretization& discretization() const { return disc_; }
  [[nodiscard]] const Matrix& data() const { return data_; }
  [[nodiscard]] const AdvDiffConfig& config() const { return cfg_; }

  /// True source interpolated on the inversion grid.
  [[nodiscard]] Vector true_source() const { return fem1d::interpolate(disc_.grid(), cfg_.true_source); }

  [[nodiscard]] double objective(const Point& p) const override {
    const Matrix misfit = disc_.observe(p.u) - data_;
    return 0.5 * misfit.squaredNorm() + 0.5 * cfg_.alpha * p.z.dot(disc_.mass().apply(p.z));
  }

  [[nodiscard]] Vector residual(const Point& p) const override {
    Vector r = jac_u(p, p.u);
    const Vector s = disc_.source_scale(p.theta);
    const Vector mz = disc_.mass().apply(p.z);
    for (Index n = 0; n < disc_.nt(); ++n) r.segment(n * disc_.nx(), disc_.nx()) -= disc_.dt() * s[n] * mz;
    return r;
  }

  [[nodiscard]] Vector grad_u(const Point& p) const override {
    return disc_.observe_transpose(disc_.observe(p.u) - data_);
  }
  [[nodiscard]] Vector grad_z(const Point& p) const override { return cfg_.alpha * disc_.mass().apply(p.z); }
  [[nodiscard]] Vector grad_theta(const Point&) const override { return Vector::Zero(disc_.n_theta()); }

  [[nodiscard]] Vector jac_u(const Point& p, const Vector& v) const override {
    const fem1d::Tridiagonal e = disc_.step_matrix(p.theta);
    const Index nx = disc_.nx();
    Vector out(v.size());
    for (Index n = 0; n < disc_.nt(); ++n) {
      Vector seg = e.apply(v.segment(n * nx, nx));
      if (n > 0) seg -= disc_.mass().apply(v.segment((n - 1) * nx, nx));
      out.segment(n * nx, nx) = seg;
    }
    return out;
  }
  [[nodiscard]] Vector jac_u_adjoint(const Point& p, const Vector& w) const override {
    const fem1d::Tridiagonal e = disc_.step_matrix(p.theta);
    const Index nx = disc_.nx();
    Vector out(w.size());
    for (Index n = 0; n < disc_.nt(); ++n) {
      Vector seg = e.apply_transpose(w.segment(n * nx, nx));
      if (n + 1 < disc_.nt()) seg -= disc_.mass().apply(w.segment((n + 1) * nx, nx));
      out.segment(n * nx, nx) = seg;
    }
    return out;
  }
  [[nodiscard]] Vector jac_z(const Point& p, const Vector& v) const override {
    const Vector s = disc_.source_scale(p.theta);
    const Vector mv = disc_.mass().apply(v);
    Vector out(dims().n_lambda);
    for (Index n = 0; n < disc_.nt(); ++n) out.segment(n * disc_.nx(), disc_.nx()) = -disc_.dt() * s[n] * mv;
    return out;
  }
  [[nodiscard]] Vector jac_z_adjoint(const Point& p, const Vector& w) const override {
    const Vector s = disc_.source_scale(p.theta);
    Vector acc = Vector::Zero(disc_.nx());
    for (Index n = 0; n < disc_.nt(); ++n) acc += s[n] * disc_.step(w, n);
    return -disc_.dt() * disc_.mass().apply(acc);
  }
  [[nodiscard]] Vector jac_theta(const Point& p, const Vector& v) const override {
    const fem1d::Tridiagonal de = step_matrix_derivative(v);
    const Vector ds = disc_.window_basis() * disc_.window_part(v);
    const Vector mz = disc_.mass().apply(p.z);
    Vector out(dims().n_lambda);
    for (Index n = 0; n < disc_.nt(); ++n) {
      out.segment(n * disc_.nx(), disc_.nx()) = de.apply(disc_.step(p.u, n)) - disc_.dt() * ds[n] * mz;
    }
    return out;
  }
  [[nodiscard]] Vector jac_theta_adjoint(const Point& p, const Vector& w) const override {
    Vector out = step_matrix_bilinear_gradient(w, p.u);
    const Vector mz = disc_.mass().apply(p.z);
    Vector per_step(disc_.nt());
    for (Index n = 0; n < disc_.nt(); ++n) per_step[n] = disc_.step(w, n).dot(mz);
    out.tail(disc_.window_basis().cols()) -= disc_.dt() * disc_.window_basis().transpose() * per_step;
    return out;
  }

  [[nodiscard]] Vector hess_uu(const Point&, const Vector& v) const override {
    return disc_.observe_transpose(disc_.observe(v));
  }
  [[nodiscard]] Vector hess_uz(const Point&, const Vector&) const override { return Vector::Zero(dims().n_u); }
  [[nodiscard]] Vector hess_zu(const Point&, const Vector&) const override { return Vector::Zero(dims().n_z); }
  [[nodiscard]] Vector hess_zz(const Point&, const Vector& v) const override {
    return cfg_.alpha * disc_.mass().apply(v);
  }
  [[nodiscard]] Vector hess_utheta(const Point& p, const Vector& v) const override {
    const fem1d::Tridiagonal de = step_matrix_derivative(v);
    Vector out(dims().n_u);
    for (Index n = 0; n < disc_.nt(); ++n) {
      out.segment(n * disc_.nx(), disc_.nx()) = de.apply_transpose(disc_.step(p.lambda, n));
    }
    return out;
  }
  [[nodiscard]] Vector hess_thetau(const Point& p, const Vector& v) const override {
    return step_matrix_bilinear_gradient(p.lambda, v);
  }
  [[nodiscard]] Vector hess_ztheta(const Point& p, const Vector& v) const override {
    const Vector ds = disc_.window_basis() * disc_.window_part(v);
    Vector acc = Vector::Zero(disc_.nx());
    for (Index n = 0; n < disc_.nt(); ++n) acc += ds[n] * disc_.step(p.lambda, n);
    return -disc_.dt() * disc_.mass().apply(acc);
  }
  [[nodiscard]] Vector hess_thetaz(const Point& p, const Vector& v) const override {
    const Vector mv = disc_.mass().apply(v);
    Vector per_step(disc_.nt());
    for (Index n = 0; n < disc_.nt(); ++n) per_step[n] = disc_.step(p.lambda, n).dot(mv);
    Vector out = Vector::Zero(disc_.n_theta());
    out.tail(disc_.window_basis().cols()) = -disc_.dt() * disc_.window_basis().transpose() * per_step;
    return out;
  }

  [[nodiscard]] Vector state_jacobian_solve(const Point& p, const Vector& rhs) const override {
    require_dim(rhs, dims().n_lambda, "advdiff state solve");
    const fem1d::Tridiagonal e = disc_.step_matrix(p.theta);
    const Index nx = disc_.nx();
    Vector x(rhs.size());
    Vector prev = Vector::Zero(nx);
    for (Index n = 0; n < disc_.nt(); ++n) {
      prev = e.solve(rhs.segment(n * nx, nx) + disc_.mass().apply(prev));
      x.segment(n * nx, nx) = prev;
    }
    return x;
  }
  [[nodiscard]] Vector state_jacobian_adjoint_solve(const Point& p, const Vector& rhs) const override {
    require_dim(rhs, dims().n_u, "advdiff adjoint solve");
    const fem1d::Tridiagonal et = disc_.step_matrix(p.theta).transpose();
    const Index nx = disc_.nx();
    Vector x(rhs.size());
    Vector next = Vector::Zero(nx);
    for (Index n = disc_.nt() - 1; n >= 0; --n) {
      next = et.solve(rhs.segment(n * nx, nx) + disc_.mass().apply(next));
      x.segment(n * nx, nx) = next;
    }
    return x;
  }

 private:
  // dE/dtheta applied to a direction: dt (d_eps K + C(dv)).
  [[nodiscard]] fem1d::Tridiagonal step_matrix_derivative(const Vector& dtheta) const {
    require_dim(dtheta, disc_.n_theta(), "advdiff theta direction");
    const double d_eps = cfg_.diffusion_bar * cfg_.amplitude * dtheta[disc_.diffusion_index()];
    fem1d::Tridiagonal op = d_eps * disc_.unit_stiffness();
    op += fem1d::advection_matrix(disc_.grid(), disc_.velocity_map() * disc_.velocity_part(dtheta));
    op *= disc_.dt();
    return op;
  }

  // Gradient in theta of sum_n a^n . E(theta) b^n.
  [[nodiscard]] Vector step_matrix_bilinear_gradient(const Vector& a, const Vector& b) const {
    Vector element = Vector::Zero(disc_.grid().n_elements);
    double diff = 0.0;
    for (Index n = 0; n < disc_.nt(); ++n) {
      const Vector an = disc_.step(a, n);
      const Vector bn = disc_.step(b, n);
      element += fem1d::advection_element_products(disc_.grid(), an, bn);
      diff += an.dot(disc_.unit_stiffness().apply(bn));
    }
    Vector out = Vector::Zero(disc_.n_theta());
    out.head(disc_.velocity_map().cols()) = disc_.dt() * disc_.velocity_map().transpose() * element;
    out[disc_.diffusion_index()] = disc_.dt() * cfg_.diffusion_bar * cfg_.amplitude * diff;
    return out;
  }

  AdvDiffConfig cfg_;
  AdvDiffDiscretization disc_;
  Matrix data_;
  WeightedSpaces spaces_;
};

inline ProblemPtr build_advdiff_inversion_1d(const AdvDiffConfig& cfg = {}) {
  return std::make_shared<const AdvDiffInversion1D>(cfg);
}

}  // namespace hdsa::problems
