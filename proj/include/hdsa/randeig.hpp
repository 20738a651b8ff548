// Randomized solver for the generalized Jordan-Wielandt pencil
//
//   A = [[0, M_Z D], [D^T M_Z, 0]],   B = diag(M_Z, M_Theta),
//
// whose positive eigenpairs are the weighted singular triples of D. Stacked
// pencil vectors hold the z block first and the theta block second.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "hdsa/kkt.hpp"
#include "hdsa/linalg.hpp"
#include "hdsa/parallel.hpp"
#include "hdsa/random.hpp"

namespace hdsa {

struct RandEigConfig {
  int k_pairs = 4;
  int oversampling = 8;
  std::uint64_t seed = 1;
  int n_samples = 1;

  void validate(Index m, Index n) const {
    if (k_pairs < 1) throw std::invalid_argument("RandEigConfig: k_pairs must be at least 1");
    if (oversampling < 0) throw std::invalid_argument("RandEigConfig: oversampling must be nonnegative");
    if (n_samples < 1) throw std::invalid_argument("RandEigConfig: n_samples must be at least 1");
    if (2 * static_cast<Index>(k_pairs) + oversampling > m + n) {
      throw std::invalid_argument("RandEigConfig: 2K + L = " + std::to_string(2 * k_pairs + oversampling) +
                                  " exceeds the pencil dimension " + std::to_string(m + n));
    }
  }
};

struct SingularTriple {
  double sigma = 0.0;
  Vector theta_vec;
  Vector z_vec;
};

struct GenEigResult {
  std::vector<SingularTriple> triples;
  bool rank_deficient = false;
  Vector ritz_values;  // full Rayleigh-Ritz spectrum, descending
  int basis_size = 0;
  int dropped_probes = 0;
  double ritz_asymmetry = 0.0;  // ||T - T^T|| / ||T|| before symmetrization
};

/// Retention threshold for positive eigenvalues relative to the largest one.
inline constexpr double kRankTolerance = 1e-12;

/// Flips (theta, z) together so that the largest-magnitude entry of theta is
/// positive; makes returned vectors independent of the probe signs.
inline void canonical_sign(SingularTriple& t) {
  Index idx = 0;
  t.theta_vec.cwiseAbs().maxCoeff(&idx);
  if (t.theta_vec[idx] < 0.0) {
    t.theta_vec = -t.theta_vec;
    t.z_vec = -t.z_vec;
  }
}

/// A v for stacked v = (z~, theta~): (M_Z D theta~, D^T M_Z z~).
template <SensitivityLike Op>
Vector apply_pencil_a(const Op& d, const WeightedSpaces& spaces, const Vector& v) {
  const Index m = d.out_dim();
  const Index n = d.in_dim();
  require_dim(v, m + n, "apply_pencil_a");
  Vector out(m + n);
  out.head(m) = spaces.m_z.apply(d.apply(v.tail(n)));
  out.tail(n) = d.apply_adjoint(spaces.m_z.apply(v.head(m)));
  return out;
}

inline SpdOperator pencil_b(const WeightedSpaces& spaces) {
  return SpdOperator::block_diagonal({spaces.m_z, spaces.m_theta});
}

namespace detail {

inline std::vector<Vector> probe_vectors(std::uint64_t seed, StreamPurpose purpose, std::uint64_t key, int count,
                                         Index dim) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    KeyedRng rng(seed, purpose, key, static_cast<std::uint64_t>(i));
    out.push_back(rng.normal_vector(dim));
  }
  return out;
}

// Rayleigh-Ritz on span(Q): T = Q^T (A Q), symmetrized after recording the
// asymmetry left by inexact operator applications.
inline SymEig rayleigh_ritz(const std::vector<Vector>& q, const std::vector<Vector>& aq, double& asymmetry) {
  const Index r = static_cast<Index>(q.size());
  Matrix t(r, r);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < r; ++j) t(i, j) = q[static_cast<std::size_t>(i)].dot(aq[static_cast<std::size_t>(j)]);
  }
  const double scale = t.norm();
  asymmetry = scale > 0.0 ? (t - t.transpose()).norm() / scale : 0.0;
  return dense_sym_eig(0.5 * (t + t.transpose()));
}

}  // namespace detail

/// Probes are keyed by (seed, purpose, stream_key, probe index). Callers
/// pass the sample index as stream_key.
template <SensitivityLike Op>
GenEigResult randomized_geneig(const Op& d, const WeightedSpaces& spaces, const RandEigConfig& cfg,
                               std::uint64_t stream_key = 0, int workers = 1,
                               StreamPurpose purpose = StreamPurpose::kProbeVector) {
  const Index m = d.out_dim();
  const Index n = d.in_dim();
  cfg.validate(m, n);
  const int p = 2 * cfg.k_pairs + cfg.oversampling;
  const SpdOperator b = pencil_b(spaces);

  // y_i = B^{-1} A x_i = (D theta~, M_Theta^{-1} D^T M_Z z~)
  const std::vector<Vector> x = detail::probe_vectors(cfg.seed, purpose, stream_key, p, m + n);
  std::vector<Vector> y(static_cast<std::size_t>(p));
  parallel_for(static_cast<std::size_t>(p), workers, [&](std::size_t i) {
    Vector yi(m + n);
    yi.head(m) = d.apply(x[i].tail(n));
    yi.tail(n) = spaces.m_theta.solve(d.apply_adjoint(spaces.m_z.apply(x[i].head(m))));
    y[i] = std::move(yi);
  });

  GenEigResult out;
  const OrthonormalBasis basis = b_orthonormalize(y, b);
  out.basis_size = static_cast<int>(basis.vectors.size());
  out.dropped_probes = basis.dropped;
  if (basis.vectors.empty()) {
    out.rank_deficient = true;
    out.ritz_values = Vector::Zero(0);
    return out;
  }

  std::vector<Vector> aq(basis.vectors.size());
  parallel_for(basis.vectors.size(), workers, [&](std::size_t j) { aq[j] = apply_pencil_a(d, spaces, basis.vectors[j]); });
  const SymEig eig = detail::rayleigh_ritz(basis.vectors, aq, out.ritz_asymmetry);
  out.ritz_values = eig.values;

  const double top = eig.values[0];
  for (Index k = 0; k < eig.values.size() && static_cast<int>(out.triples.size()) < cfg.k_pairs; ++k) {
    const double lambda = eig.values[k];
    if (!(top > 0.0) || !(lambda > kRankTolerance * top)) break;
    Vector w = Vector::Zero(m + n);
    for (std::size_t j = 0; j < basis.vectors.size(); ++j) w += eig.vectors(static_cast<Index>(j), k) * basis.vectors[j];
    SingularTriple t;
    t.sigma = lambda;
    t.z_vec = w.head(m);
    t.theta_vec = w.tail(n);
    const double nz = spaces.m_z.norm(t.z_vec);
    const double nt = spaces.m_theta.norm(t.theta_vec);
    if (!(nz > 0.0) || !(nt > 0.0)) break;
    t.z_vec /= nz;
    t.theta_vec /= nt;
    canonical_sign(t);
    out.triples.push_back(std::move(t));
  }
  out.rank_deficient = static_cast<int>(out.triples.size()) < cfg.k_pairs;
  return out;
}

struct AlternativeResult {
  Vector alphas;  // eigenvalues of D^T M_Z D theta = alpha M_Theta theta, descending
  std::vector<SingularTriple> triples;  // sigma = sqrt(alpha), z = D theta / sigma
  bool rank_deficient = false;
};

/// Randomized solve of the n x n pencil (D^T M_Z D, M_Theta) with K + L probes.
template <SensitivityLike Op>
AlternativeResult alternative_formulation(const Op& d, const WeightedSpaces& spaces, const RandEigConfig& cfg,
                                          std::uint64_t stream_key = 0, int workers = 1) {
  const Index n = d.in_dim();
  if (cfg.k_pairs < 1 || cfg.oversampling < 0) throw std::invalid_argument("alternative_formulation: bad K or L");
  if (cfg.k_pairs + cfg.oversampling > n) {
    throw std::invalid_argument("alternative_formulation: K + L exceeds the parameter dimension");
  }
  const int p = cfg.k_pairs + cfg.oversampling;
  auto gram = [&](const Vector& v) -> Vector { return d.apply_adjoint(spaces.m_z.apply(d.apply(v))); };

  const std::vector<Vector> x = detail::probe_vectors(cfg.seed, StreamPurpose::kAlternativeProbe, stream_key, p, n);
  std::vector<Vector> y(static_cast<std::size_t>(p));
  parallel_for(static_cast<std::size_t>(p), workers, [&](std::size_t i) { y[i] = spaces.m_theta.solve(gram(x[i])); });

  AlternativeResult out;
  const OrthonormalBasis basis = b_orthonormalize(y, spaces.m_theta);
  if (basis.vectors.empty()) {
    out.rank_deficient = true;
    out.alphas = Vector::Zero(0);
    return out;
  }
  std::vector<Vector> gq(basis.vectors.size());
  parallel_for(basis.vectors.size(), workers, [&](std::size_t j) { gq[j] = gram(basis.vectors[j]); });
  double asym = 0.0;
  const SymEig eig = detail::rayleigh_ritz(basis.vectors, gq, asym);

  const double top = eig.values[0];
  std::vector<double> kept;
  for (Index k = 0; k < eig.values.size() && static_cast<int>(kept.size()) < cfg.k_pairs; ++k) {
    const double alpha = eig.values[k];
    if (!(top > 0.0) || !(alpha > kRankTolerance * top)) break;
    Vector th = Vector::Zero(n);
    for (std::size_t j = 0; j < basis.vectors.size(); ++j) th += eig.vectors(static_cast<Index>(j), k) * basis.vectors[j];
    th /= spaces.m_theta.norm(th);
    SingularTriple t;
    t.sigma = std::sqrt(alpha);
    t.theta_vec = th;
    kept.push_back(alpha);
    out.triples.push_back(std::move(t));
  }
  parallel_for(out.triples.size(), workers, [&](std::size_t k) {
    auto& t = out.triples[k];
    t.z_vec = d.apply(t.theta_vec) / t.sigma;
    canonical_sign(t);
  });
  out.alphas = Eigen::Map<const Vector>(kept.data(), static_cast<Index>(kept.size()));
  out.rank_deficient = static_cast<int>(kept.size()) < cfg.k_pairs;
  return out;
}

}  // namespace hdsa
