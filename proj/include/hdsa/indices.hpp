// Local, directional and set sensitivity indices.
#pragma once

#include <string>
#include <vector>

#include "hdsa/kkt.hpp"
#include "hdsa/randeig.hpp"

namespace hdsa {

/// ||D (phi / ||phi||_Theta)||_Z.
template <SensitivityLike Op>
double directional_sensitivity(const Op& d, const WeightedSpaces& spaces, const Vector& phi) {
  require_dim(phi, d.in_dim(), "directional_sensitivity");
  const double nrm = spaces.m_theta.norm(phi);
  if (!(nrm > 0.0)) throw std::invalid_argument("directional_sensitivity: zero direction");
  return spaces.m_z.norm(d.apply(phi / nrm));
}

/// S_i = sqrt(sum_k sigma_k^2 ((M_Theta theta_k)_i)^2).
inline Vector local_indices(const std::vector<SingularTriple>& triples, const SpdOperator& m_theta) {
  Vector acc = Vector::Zero(m_theta.dim());
  for (const auto& t : triples) {
    const Vector mt = m_theta.apply(t.theta_vec);
    acc += (t.sigma * t.sigma) * mt.cwiseAbs2();
  }
  return acc.cwiseSqrt();
}

enum class SetIndexMode { kTruncated, kDirect };

/// Throws unless M_Theta has no coupling between different sets.
inline void require_block_orthogonal(const SpdOperator& m_theta, const SetPartition& partition) {
  partition.validate(m_theta.dim());
  if (m_theta.is_identity()) return;
  const Matrix m = m_theta.dense();
  const double scale = m.cwiseAbs().maxCoeff();
  std::vector<std::size_t> owner(static_cast<std::size_t>(m.rows()));
  for (std::size_t s = 0; s < partition.sets.size(); ++s) {
    for (Index i = partition.sets[s].begin; i < partition.sets[s].end; ++i) owner[static_cast<std::size_t>(i)] = s;
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (owner[static_cast<std::size_t>(i)] != owner[static_cast<std::size_t>(j)] && std::abs(m(i, j)) > 1e-14 * scale) {
        throw std::invalid_argument("set_indices: parameter weighting couples sets '" +
                                    partition.sets[owner[static_cast<std::size_t>(i)]].name + "' and '" +
                                    partition.sets[owner[static_cast<std::size_t>(j)]].name + "'");
      }
    }
  }
}

/// Largest singular value of the rank-K operator restricted to each set:
/// sqrt(lambda_max(S)), S_kl = sigma_k sigma_l (P theta_k)^T M_Theta (P theta_l).
inline std::vector<double> set_indices(const std::vector<SingularTriple>& triples, const WeightedSpaces& spaces) {
  require_block_orthogonal(spaces.m_theta, spaces.partition);
  const Index k = static_cast<Index>(triples.size());
  std::vector<double> out;
  out.reserve(spaces.partition.sets.size());
  for (const auto& set : spaces.partition.sets) {
    if (k == 0) {
      out.push_back(0.0);
      continue;
    }
    std::vector<Vector> proj;
    std::vector<Vector> mproj;
    for (const auto& t : triples) {
      Vector v = Vector::Zero(t.theta_vec.size());
      v.segment(set.begin, set.end - set.begin) = t.theta_vec.segment(set.begin, set.end - set.begin);
      mproj.push_back(spaces.m_theta.apply(v));
      proj.push_back(std::move(v));
    }
    Matrix s(k, k);
    for (Index a = 0; a < k; ++a) {
      for (Index b = 0; b < k; ++b) {
        s(a, b) = triples[static_cast<std::size_t>(a)].sigma * triples[static_cast<std::size_t>(b)].sigma *
                  proj[static_cast<std::size_t>(a)].dot(mproj[static_cast<std::size_t>(b)]);
      }
    }
    const double top = dense_sym_eig(0.5 * (s + s.transpose())).values[0];
    out.push_back(std::sqrt(std::max(0.0, top)));
  }
  return out;
}

/// Leading weighted singular value of D restricted to each set, computed by
/// running the randomized solver on the restricted operator. Probe streams
/// are keyed by (sample << 16) + set index.
template <SensitivityLike Op>
std::vector<double> set_indices_direct(const Op& d, const WeightedSpaces& spaces, const RandEigConfig& cfg,
                                       std::uint64_t sample = 0, int workers = 1) {
  require_block_orthogonal(spaces.m_theta, spaces.partition);
  std::vector<double> out;
  for (std::size_t s = 0; s < spaces.partition.sets.size(); ++s) {
    const auto& set = spaces.partition.sets[s];
    const ProjectedSensitivity<Op> ds(d, set.begin, set.end);
    const GenEigResult r =
        randomized_geneig(ds, spaces, cfg, (sample << 16) + s, workers, StreamPurpose::kSetIndexProbe);
    out.push_back(r.triples.empty() ? 0.0 : r.triples.front().sigma);
  }
  return out;
}

}  // namespace hdsa
