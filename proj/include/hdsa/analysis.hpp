// Sampled analysis over (theta^j, I^j): optimize, decompose the sensitivity
// operator, compute indices; plus the perturbation and traditional-gradient
// diagnostics.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hdsa/indices.hpp"
#include "hdsa/kkt.hpp"
#include "hdsa/optimizer.hpp"
#include "hdsa/parallel.hpp"
#include "hdsa/randeig.hpp"

namespace hdsa {

struct AnalysisConfig {
  RandEigConfig eig;
  SamplingPlan plan;
  OptimizerConfig optimizer;
  KktConfig kkt;
  SetIndexMode set_mode = SetIndexMode::kTruncated;
  int workers = 1;
};

struct SampleResult {
  std::uint64_t j = 0;
  bool ok = false;
  std::string error;
  Vector theta;
  OptimalPoint optimum;
  GenEigResult eig;
  Vector local;
  std::vector<double> sets;
  Vector traditional;
  KktTotals kkt;
  double decay_ratio = 0.0;  // sigma_K / sigma_1
};

struct HdsaReport {
  std::string problem;
  ProblemDims dims;
  std::vector<std::string> set_names;
  std::vector<SampleResult> samples;
  Vector local_mean;
  Vector local_std;
  std::vector<double> set_mean;
  std::vector<double> set_std;
  int failures = 0;
};

/// |dg/dtheta_i| for the reduced objective g(theta) = J(u(z0, theta), z0, theta)
/// at fixed z0.
inline Vector traditional_comparison(const ProblemDefinition& p, const OptimalPoint& opt,
                                     const ForwardConfig& fwd = {}) {
  const Point pt = complete_point(p, opt.point.z, opt.point.theta, opt.point.u, fwd);
  return (p.grad_theta(pt) + p.jac_theta_adjoint(pt, pt.lambda)).cwiseAbs();
}

/// Full pipeline for one sample. Errors are captured in the result.
inline SampleResult analyze_sample(const ProblemPtr& problem, const AnalysisConfig& cfg, std::uint64_t j, int workers) {
  SampleResult r;
  r.j = j;
  const ProblemDims d = problem->dims();
  try {
    const SampledInputs in = sample_inputs(cfg.plan, d.n_theta, d.n_z, j);
    r.theta = in.theta;
    r.optimum = solve_optimization(*problem, in.theta, in.z_init, cfg.optimizer);
    const SensitivityOperator sens(problem, r.optimum.point, cfg.kkt);
    r.eig = randomized_geneig(sens, problem->spaces(), cfg.eig, j, workers);
    r.local = local_indices(r.eig.triples, problem->spaces().m_theta);
    r.sets = cfg.set_mode == SetIndexMode::kTruncated ? set_indices(r.eig.triples, problem->spaces())
                                                      : set_indices_direct(sens, problem->spaces(), cfg.eig, j, workers);
    r.traditional = traditional_comparison(*problem, r.optimum, cfg.optimizer.forward);
    r.kkt = sens.kkt().totals();
    if (!r.eig.triples.empty() && r.eig.triples.front().sigma > 0.0) {
      r.decay_ratio = r.eig.triples.back().sigma / r.eig.triples.front().sigma;
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

inline HdsaReport global_analysis(const ProblemPtr& problem, const AnalysisConfig& cfg) {
  const ProblemDims d = problem->dims();
  cfg.eig.validate(d.n_z, d.n_theta);
  problem->spaces().partition.validate(d.n_theta);
  HdsaReport rep;
  rep.problem = problem->name();
  rep.dims = d;
  for (const auto& s : problem->spaces().partition.sets) rep.set_names.push_back(s.name);

  const int n = cfg.eig.n_samples;
  const int workers = std::max(1, cfg.workers);
  const int outer = std::min(workers, n);
  const int inner = std::max(1, workers / outer);
  rep.samples.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), outer, [&](std::size_t j) {
    rep.samples[j] = analyze_sample(problem, cfg, static_cast<std::uint64_t>(j), inner);
  });

  const std::size_t n_sets = rep.set_names.size();
  rep.local_mean = Vector::Zero(d.n_theta);
  rep.local_std = Vector::Zero(d.n_theta);
  rep.set_mean.assign(n_sets, 0.0);
  rep.set_std.assign(n_sets, 0.0);
  int ok = 0;
  for (const auto& s : rep.samples) {
    if (!s.ok) {
      ++rep.failures;
      continue;
    }
    ++ok;
    rep.local_mean += s.local;
    for (std::size_t i = 0; i < n_sets; ++i) rep.set_mean[i] += s.sets[i];
  }
  if (ok == 0) return rep;
  rep.local_mean /= ok;
  for (auto& v : rep.set_mean) v /= ok;
  for (const auto& s : rep.samples) {
    if (!s.ok) continue;
    rep.local_std += (s.local - rep.local_mean).cwiseAbs2();
    for (std::size_t i = 0; i < n_sets; ++i) rep.set_std[i] += (s.sets[i] - rep.set_mean[i]) * (s.sets[i] - rep.set_mean[i]);
  }
  rep.local_std = (rep.local_std / ok).cwiseSqrt();
  for (auto& v : rep.set_std) v = std::sqrt(v / ok);
  return rep;
}

struct PerturbationResult {
  double delta = 0.0;
  double lhs = 0.0;         // ||z_opt(theta0 + delta phi) - z_opt(theta0)||_Z
  double prediction = 0.0;  // delta * ||D phi||_Z
  double ratio = 1.0;
};

/// Re-solves at theta0 + delta phi (warm start at the base optimum) and
/// compares the change in z_opt with the linear prediction. phi must have
/// unit Theta norm.
inline PerturbationResult perturbation_check(const ProblemPtr& problem, const OptimalPoint& base, const Vector& phi,
                                             double delta, const OptimizerConfig& opt_cfg = {},
                                             const KktConfig& kkt_cfg = {}) {
  const WeightedSpaces& sp = problem->spaces();
  require_dim(phi, problem->dims().n_theta, "perturbation_check direction");
  if (std::abs(sp.m_theta.norm(phi) - 1.0) > 1e-8) {
    throw std::invalid_argument("perturbation_check: direction must have unit norm");
  }
  PerturbationResult r;
  r.delta = delta;
  if (delta == 0.0) return r;
  // The difference quotient divides optimizer error by delta, so both solves
  // are tightened well below the default stationarity tolerance.
  OptimizerConfig tight = opt_cfg;
  tight.stationarity_tol = std::min(opt_cfg.stationarity_tol, 1e-12);
  const OptimalPoint polished = solve_optimization(*problem, base.point.theta, base.point.z, tight, &base.point.u);
  const SensitivityOperator sens(problem, polished.point, kkt_cfg);
  r.prediction = std::abs(delta) * sp.m_z.norm(sens.apply(phi));
  const OptimalPoint moved =
      solve_optimization(*problem, polished.point.theta + delta * phi, polished.point.z, tight, &polished.point.u);
  r.lhs = sp.m_z.norm(moved.point.z - polished.point.z);
  r.ratio = r.prediction > 0.0 ? r.lhs / r.prediction : (r.lhs == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
  return r;
}

/// Least-squares slope of log(error) against log(delta).
inline double observed_order(const std::vector<double>& deltas, const std::vector<double>& errors) {
  const std::size_t n = deltas.size();
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(deltas[i]);
    my += std::log(errors[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(deltas[i]) - mx;
    sxy += dx * (std::log(errors[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace hdsa
