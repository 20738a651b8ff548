// Piecewise-linear finite elements on uniform 1D grids.
//
// All assembled operators are tridiagonal. Element coefficients are evaluated
// at element midpoints, which keeps every operator affine in the coefficient.
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hdsa/linalg.hpp"

namespace hdsa::fem1d {

/// Tridiagonal matrix: lower[i] = A(i+1, i), upper[i] = A(i, i+1).
struct Tridiagonal {
  Vector lower;
  Vector diag;
  Vector upper;

  Tridiagonal() = default;
  explicit Tridiagonal(Index n) : lower(Vector::Zero(n > 0 ? n - 1 : 0)), diag(Vector::Zero(n)), upper(Vector::Zero(n > 0 ? n - 1 : 0)) {}

  [[nodiscard]] Index size() const { return diag.size(); }

  [[nodiscard]] Vector apply(const Vector& v) const {
    require_dim(v, size(), "Tridiagonal::apply");
    const Index n = size();
    Vector out = diag.cwiseProduct(v);
    for (Index i = 0; i + 1 < n; ++i) {
      out[i] += upper[i] * v[i + 1];
      out[i + 1] += lower[i] * v[i];
    }
    return out;
  }

  [[nodiscard]] Tridiagonal transpose() const {
    Tridiagonal t;
    t.lower = upper;
    t.diag = diag;
    t.upper = lower;
    return t;
  }

  [[nodiscard]] Vector apply_transpose(const Vector& v) const { return transpose().apply(v); }

  /// Thomas algorithm without pivoting; the operators assembled here are
  /// diagonally dominant or symmetric positive definite.
  [[nodiscard]] Vector solve(const Vector& rhs) const {
    require_dim(rhs, size(), "Tridiagonal::solve");
    const Index n = size();
    Vector c(n);
    Vector d(n);
    double pivot = diag[0];
    if (pivot == 0.0) throw NumericalError("Tridiagonal::solve: zero pivot at index 0");
    c[0] = n > 1 ? upper[0] / pivot : 0.0;
    d[0] = rhs[0] / pivot;
    for (Index i = 1; i < n; ++i) {
      pivot = diag[i] - lower[i - 1] * c[i - 1];
      if (pivot == 0.0) throw NumericalError("Tridiagonal::solve: zero pivot at index " + std::to_string(i));
      c[i] = i + 1 < n ? upper[i] / pivot : 0.0;
      d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / pivot;
    }
    Vector x(n);
    x[n - 1] = d[n - 1];
    for (Index i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
    return x;
  }

  [[nodiscard]] Vector solve_transpose(const Vector& rhs) const { return transpose().solve(rhs); }

  [[nodiscard]] Matrix dense() const {
    const Index n = size();
    Matrix m = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) m(i, i) = diag[i];
    for (Index i = 0; i + 1 < n; ++i) {
      m(i, i + 1) = upper[i];
      m(i + 1, i) = lower[i];
    }
    return m;
  }

  Tridiagonal& operator+=(const Tridiagonal& o) {
    lower += o.lower;
    diag += o.diag;
    upper += o.upper;
    return *this;
  }

  Tridiagonal& operator*=(double s) {
    lower *= s;
    diag *= s;
    upper *= s;
    return *this;
  }
};

inline Tridiagonal operator+(Tridiagonal a, const Tridiagonal& b) { return a += b; }
inline Tridiagonal operator*(double s, Tridiagonal a) { return a *= s; }

/// Uniform grid on [0, 1] with n_elements elements. With dirichlet = true the
/// unknowns are the interior nodes only.
struct Grid {
  Index n_elements = 1;
  bool dirichlet = false;

  [[nodiscard]] double h() const { return 1.0 / static_cast<double>(n_elements); }
  [[nodiscard]] Index n_dofs() const { return dirichlet ? n_elements - 1 : n_elements + 1; }
  [[nodiscard]] double node(Index k) const { return static_cast<double>(k) * h(); }  // global node index
  [[nodiscard]] double midpoint(Index e) const { return (static_cast<double>(e) + 0.5) * h(); }
  /// Coordinate of unknown i.
  [[nodiscard]] double dof_x(Index i) const { return node(dirichlet ? i + 1 : i); }
  /// Unknown index of global node k, or -1 for an eliminated boundary node.
  [[nodiscard]] Index dof_of_node(Index k) const {
    if (!dirichlet) return k;
    if (k == 0 || k == n_elements) return -1;
    return k - 1;
  }
};

namespace detail {
inline void scatter(Tridiagonal& t, const Grid& g, Index e, double a00, double a01, double a10, double a11) {
  const Index i = g.dof_of_node(e);
  const Index j = g.dof_of_node(e + 1);
  if (i >= 0) t.diag[i] += a00;
  if (j >= 0) t.diag[j] += a11;
  if (i >= 0 && j >= 0) {
    t.upper[i] += a01;
    t.lower[i] += a10;
  }
}
}  // namespace detail

inline Tridiagonal mass_matrix(const Grid& g) {
  Tridiagonal m(g.n_dofs());
  const double h = g.h();
  for (Index e = 0; e < g.n_elements; ++e) detail::scatter(m, g, e, h / 3.0, h / 6.0, h / 6.0, h / 3.0);
  return m;
}

/// Stiffness matrix for -(k u')' with one coefficient value per element.
inline Tridiagonal stiffness_matrix(const Grid& g, const Vector& element_coeff) {
  require_dim(element_coeff, g.n_elements, "stiffness_matrix coefficients");
  Tridiagonal k(g.n_dofs());
  const double h = g.h();
  for (Index e = 0; e < g.n_elements; ++e) {
    const double a = element_coeff[e] / h;
    detail::scatter(k, g, e, a, -a, -a, a);
  }
  return k;
}

/// Conservative advection (v c)' in weak form: C(i, j) = -int v phi_j phi_i'.
/// Column sums vanish, so with zero total flux the discrete mass is conserved.
inline Tridiagonal advection_matrix(const Grid& g, const Vector& element_velocity) {
  require_dim(element_velocity, g.n_elements, "advection_matrix velocities");
  Tridiagonal c(g.n_dofs());
  for (Index e = 0; e < g.n_elements; ++e) {
    const double half = 0.5 * element_velocity[e];
    detail::scatter(c, g, e, half, half, -half, -half);
  }
  return c;
}

/// Bilinear form w^T K(k) u for elementwise coefficient k, differentiated in k:
/// returns the per-element products (w_{e+1}-w_e)(u_{e+1}-u_e)/h.
inline Vector stiffness_element_products(const Grid& g, const Vector& w, const Vector& u) {
  const double h = g.h();
  Vector out(g.n_elements);
  auto val = [&](const Vector& v, Index node) {
    const Index i = g.dof_of_node(node);
    return i >= 0 ? v[i] : 0.0;
  };
  for (Index e = 0; e < g.n_elements; ++e) {
    out[e] = (val(w, e + 1) - val(w, e)) * (val(u, e + 1) - val(u, e)) / h;
  }
  return out;
}

/// Per-element derivative of w^T C(v) c with respect to the element velocity.
inline Vector advection_element_products(const Grid& g, const Vector& w, const Vector& c) {
  Vector out(g.n_elements);
  auto val = [&](const Vector& v, Index node) {
    const Index i = g.dof_of_node(node);
    return i >= 0 ? v[i] : 0.0;
  };
  for (Index e = 0; e < g.n_elements; ++e) {
    out[e] = 0.5 * (val(w, e) - val(w, e + 1)) * (val(c, e) + val(c, e + 1));
  }
  return out;
}

/// Hat function k of a uniform nodal basis with n_basis nodes on [lo, hi].
/// A single-function basis is the constant 1.
inline double hat(Index n_basis, Index k, double x, double lo = 0.0, double hi = 1.0) {
  if (n_basis == 1) return (x >= lo && x <= hi) ? 1.0 : 0.0;
  const double spacing = (hi - lo) / static_cast<double>(n_basis - 1);
  const double center = lo + static_cast<double>(k) * spacing;
  const double r = std::abs(x - center) / spacing;
  if (x < lo - 1e-14 || x > hi + 1e-14) return 0.0;
  return r < 1.0 ? 1.0 - r : 0.0;
}

/// Gram matrix of the hat basis on [lo, hi] (identity-like 1x1 block for a
/// constant basis scaled by the interval length).
inline Matrix hat_mass_matrix(Index n_basis, double lo = 0.0, double hi = 1.0) {
  if (n_basis == 1) return Matrix::Constant(1, 1, hi - lo);
  Grid g{n_basis - 1, false};
  Matrix m = mass_matrix(g).dense();
  return m * (hi - lo);
}

/// Matrix E(e, k) = hat_k(midpoint_e): maps basis coefficients to element values.
inline Matrix element_basis_matrix(const Grid& g, Index n_basis) {
  Matrix e(g.n_elements, n_basis);
  for (Index el = 0; el < g.n_elements; ++el) {
    for (Index k = 0; k < n_basis; ++k) e(el, k) = hat(n_basis, k, g.midpoint(el));
  }
  return e;
}

/// Linear interpolation row for point x: pairs (dof index, weight).
struct PointEvaluation {
  Index left = -1;
  Index right = -1;
  double w_left = 0.0;
  double w_right = 0.0;

  [[nodiscard]] double apply(const Vector& v) const {
    double out = 0.0;
    if (left >= 0) out += w_left * v[left];
    if (right >= 0) out += w_right * v[right];
    return out;
  }
  void add_transpose(Vector& out, double value) const {
    if (left >= 0) out[left] += w_left * value;
    if (right >= 0) out[right] += w_right * value;
  }
};

inline PointEvaluation point_evaluation(const Grid& g, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("point_evaluation: x outside [0, 1]");
  const double h = g.h();
  Index e = static_cast<Index>(std::floor(x / h));
  if (e >= g.n_elements) e = g.n_elements - 1;
  const double t = (x - static_cast<double>(e) * h) / h;
  PointEvaluation p;
  p.left = g.dof_of_node(e);
  p.right = g.dof_of_node(e + 1);
  p.w_left = 1.0 - t;
  p.w_right = t;
  return p;
}

// ---------------------------------------------------------------------------
// Analytic profiles used for targets and synthetic sources.
// ---------------------------------------------------------------------------

struct AnalyticProfile {
  enum class Kind { kGaussianBump, kSine, kConstant };
  Kind kind = Kind::kSine;
  double amplitude = 1.0;
  double center = 0.5;
  double width = 0.1;
  double frequency = 1.0;

  [[nodiscard]] double operator()(double x) const {
    switch (kind) {
      case Kind::kGaussianBump: {
        const double r = (x - center) / width;
        return amplitude * std::exp(-0.5 * r * r);
      }
      case Kind::kSine:
        return amplitude * std::sin(std::numbers::pi * frequency * x);
      case Kind::kConstant:
        return amplitude;
    }
    return 0.0;
  }
};

inline Vector interpolate(const Grid& g, const AnalyticProfile& f) {
  Vector v(g.n_dofs());
  for (Index i = 0; i < v.size(); ++i) v[i] = f(g.dof_x(i));
  return v;
}

}  // namespace hdsa::fem1d
