// Dense reference for the weighted SVD: D is assembled column by column and
// R_Z D R_Theta^{-1} is decomposed with a dense SVD, R the Cholesky factors of
// the mass matrices.
#pragma once

#include <vector>

#include "hdsa/kkt.hpp"
#include "hdsa/parallel.hpp"
#include "hdsa/randeig.hpp"

namespace hdsa {

template <SensitivityLike Op>
Matrix assemble_sensitivity(const Op& d, int workers = 1) {
  const Index n = d.in_dim();
  Matrix out(d.out_dim(), n);
  std::vector<Vector> cols(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), workers,
               [&](std::size_t j) { cols[j] = d.apply(Vector::Unit(n, static_cast<Index>(j))); });
  for (Index j = 0; j < n; ++j) out.col(j) = cols[static_cast<std::size_t>(j)];
  return out;
}

/// Weighted singular triples of an explicit matrix, all min(m, n) of them.
inline std::vector<SingularTriple> weighted_svd(const Matrix& d, const WeightedSpaces& spaces) {
  const Matrix rz = dense_cholesky(spaces.m_z.dense());
  const Matrix rt = dense_cholesky(spaces.m_theta.dense());
  // G = R_Z D R_Theta^{-1}  <=>  G^T = R_Theta^{-T} (R_Z D)^T
  const Matrix rzd = rz * d;
  const Matrix g = rt.transpose().triangularView<Eigen::Lower>().solve(rzd.transpose()).transpose();
  const Svd svd = dense_svd(g);
  std::vector<SingularTriple> out;
  for (Index k = 0; k < svd.values.size(); ++k) {
    SingularTriple t;
    t.sigma = svd.values[k];
    t.theta_vec = rt.triangularView<Eigen::Upper>().solve(svd.right.col(k));
    t.z_vec = rz.triangularView<Eigen::Upper>().solve(svd.left.col(k));
    t.theta_vec /= spaces.m_theta.norm(t.theta_vec);
    t.z_vec /= spaces.m_z.norm(t.z_vec);
    canonical_sign(t);
    out.push_back(std::move(t));
  }
  return out;
}

struct OracleResult {
  Matrix d;
  std::vector<SingularTriple> triples;
};

template <SensitivityLike Op>
OracleResult dense_oracle(const Op& d, const WeightedSpaces& spaces, int workers = 1) {
  if (d.in_dim() + d.out_dim() > kDenseThreshold) {
    throw DimensionError("dense_oracle: m + n = " + std::to_string(d.in_dim() + d.out_dim()) +
                         " exceeds the dense threshold; use randomized_geneig");
  }
  OracleResult out;
  out.d = assemble_sensitivity(d, workers);
  out.triples = weighted_svd(out.d, spaces);
  return out;
}

}  // namespace hdsa
