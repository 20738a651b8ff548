// The three subcommands: run, verify, report. Each returns a process exit
// status (0 success, 1 compute or verification failure, 2 usage, config or
// bundle error) and writes human-readable output to the given streams.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hdsa/analysis.hpp"
#include "hdsa/cli/bundle.hpp"
#include "hdsa/cli/config.hpp"
#include "hdsa/oracle.hpp"

namespace hdsa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::string num(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct Loaded {
  RunConfig cfg;
  ProblemPtr problem;
};

/// Parses, builds and validates; every failure becomes a ConfigError.
inline Loaded load(const std::string& path) {
  Loaded l;
  l.cfg = load_config(path);
  try {
    l.problem = build_problem(l.cfg.problem);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config error at /problem: ") + e.what());
  }
  validate_against(l.cfg, *l.problem);
  return l;
}

inline bool dir_has_entries(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir) && std::filesystem::is_directory(dir) &&
         std::filesystem::directory_iterator(dir) != std::filesystem::directory_iterator();
}

inline Vector unit_direction(const WeightedSpaces& sp, Index n, Index i) {
  const Vector e = Vector::Unit(n, i);
  return e / sp.m_theta.norm(e);
}

/// Relative error of sigma and M-norm error of sign-aligned vectors between
/// the first `count` triples of two lists.
struct TripleGap {
  double sigma = 0.0;
  double vectors = 0.0;
};

inline TripleGap compare_triples(const std::vector<SingularTriple>& a, const std::vector<SingularTriple>& b,
                                 const WeightedSpaces& sp, std::size_t count) {
  TripleGap g;
  for (std::size_t k = 0; k < count; ++k) {
    g.sigma = std::max(g.sigma, std::abs(a[k].sigma - b[k].sigma) / std::max(b[k].sigma, 1e-300));
    const double s = a[k].theta_vec.dot(sp.m_theta.apply(b[k].theta_vec)) < 0.0 ? -1.0 : 1.0;
    g.vectors = std::max({g.vectors, sp.m_theta.norm(s * a[k].theta_vec - b[k].theta_vec),
                          sp.m_z.norm(s * a[k].z_vec - b[k].z_vec)});
  }
  return g;
}

/// Number of pairs needed for the randomized solver to capture the range of
/// D exactly.
inline int range_capturing_pairs(Index m, Index n) { return static_cast<int>(std::min(m, n)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// workers <= 0 selects the available parallelism.
inline int cmd_run(const std::string& config_path, bool force, int workers, std::ostream& out, std::ostream& err) {
  detail::Loaded l;
  try {
    l = detail::load(config_path);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }
  RunConfig& cfg = l.cfg;
  const ProblemPtr& problem = l.problem;
  if (workers <= 0) workers = default_workers();
  cfg.analysis.workers = workers;

  const std::filesystem::path dir(cfg.output_dir);
  if (detail::dir_has_entries(dir)) {
    if (!force) {
      err << "output directory '" << dir.string() << "' is not empty; pass --force to replace its bundle\n";
      return kExitUsage;
    }
    for (const auto& f : bundle_csv_files()) std::filesystem::remove(dir / f);
    std::filesystem::remove(dir / "report.json");
    std::filesystem::remove(dir / "manifest.json");
  }

  const auto start = std::chrono::steady_clock::now();
  HdsaReport rep;
  BundleExtras extras;
  try {
    rep = global_analysis(problem, cfg.analysis);
    const ProblemDims d = problem->dims();
    if (cfg.diagnostics.oracle) {
      if (d.n_z + d.n_theta > kDenseThreshold) {
        err << "oracle skipped: n_z + n_theta exceeds " << kDenseThreshold << '\n';
      } else {
        for (const auto& s : rep.samples) {
          if (!s.ok) continue;
          const SensitivityOperator sens(problem, s.optimum.point, cfg.analysis.kkt);
          const auto oracle = dense_oracle(sens, problem->spaces(), workers);
          Vector sig(static_cast<Index>(oracle.triples.size()));
          for (std::size_t k = 0; k < oracle.triples.size(); ++k) sig[static_cast<Index>(k)] = oracle.triples[k].sigma;
          extras.oracle_sigma[s.j] = sig;
        }
      }
    }
    if (!cfg.diagnostics.perturbation_deltas.empty() && !rep.samples.empty() && rep.samples.front().ok) {
      const Vector phi = detail::unit_direction(problem->spaces(), d.n_theta, cfg.diagnostics.perturbation_parameter);
      for (double delta : cfg.diagnostics.perturbation_deltas) {
        extras.perturbation.push_back(perturbation_check(problem, rep.samples.front().optimum, phi, delta,
                                                         cfg.analysis.optimizer, cfg.analysis.kkt));
      }
    }
  } catch (const std::exception& e) {
    err << "compute failure: " << e.what() << '\n';
    if (rep.samples.empty()) return kExitFailure;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  try {
    write_bundle(dir, cfg, rep, extras, workers, seconds);
  } catch (const std::exception& e) {
    err << "cannot write bundle: " << e.what() << '\n';
    return kExitFailure;
  }

  out << "problem " << rep.problem << ": n_theta=" << rep.dims.n_theta << " n_z=" << rep.dims.n_z
      << " samples=" << rep.samples.size() << " failures=" << rep.failures << '\n';
  const Index n = rep.local_mean.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return rep.local_mean[a] > rep.local_mean[b]; });
  out << "top local indices (mean over samples):\n";
  for (std::size_t r = 0; r < std::min<std::size_t>(10, order.size()); ++r) {
    const Index i = order[r];
    out << "  S_hat[" << i << "] = " << detail::num(rep.local_mean[i]) << " +/- " << detail::num(rep.local_std[i]) << '\n';
  }
  for (const auto& s : rep.samples) {
    if (!s.ok) {
      out << "  sample " << s.j << " failed: " << s.error << '\n';
      continue;
    }
    out << "  sample " << s.j << ": sigma[0]=" << detail::num(s.eig.triples.empty() ? 0.0 : s.eig.triples.front().sigma)
        << " sigma[K-1]/sigma[0]=" << detail::num(s.decay_ratio) << (s.eig.rank_deficient ? " (rank deficient)" : "")
        << '\n';
  }
  out << "bundle written to " << dir.string() << '\n';
  return rep.failures > 0 ? kExitFailure : kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyCheck {
  std::string name;
  enum class Status { kPass, kFail, kSkip } status = Status::kPass;
  std::string detail;
};

/// Runs every check against the optimum of sample 0.
inline std::vector<VerifyCheck> verify_problem(const RunConfig& cfg, const ProblemPtr& problem) {
  using S = VerifyCheck::Status;
  std::vector<VerifyCheck> checks;
  const ProblemDims d = problem->dims();
  const WeightedSpaces& sp = problem->spaces();
  auto add = [&](std::string name, bool ok, std::string detail) {
    checks.push_back({std::move(name), ok ? S::kPass : S::kFail, std::move(detail)});
  };
  auto skip = [&](std::string name, std::string detail) { checks.push_back({std::move(name), S::kSkip, std::move(detail)}); };

  const SampledInputs in = sample_inputs(cfg.analysis.plan, d.n_theta, d.n_z, 0);
  OptimalPoint opt;
  try {
    opt = solve_optimization(*problem, in.theta, in.z_init, cfg.analysis.optimizer);
    add("optimizer", true, "grad " + detail::num(opt.grad_norm, 3) + ", iterations " + std::to_string(opt.iterations));
  } catch (const std::exception& e) {
    add("optimizer", false, e.what());
    return checks;
  }

  {
    const DerivativeReport dr = check_derivatives(*problem, opt.point);
    std::string worst;
    double worst_ratio = 0.0;
    for (const auto& c : dr.checks) {
      const double ratio = c.error / c.tolerance;
      if (ratio > worst_ratio) {
        worst_ratio = ratio;
        worst = c.block + " error " + detail::num(c.error, 3) + " (tol " + detail::num(c.tolerance, 3) + ")";
      }
    }
    add("derivatives", dr.passed(), worst);
  }

  const SensitivityOperator sens(problem, opt.point, cfg.analysis.kkt);
  {
    const KktOperator& k = sens.kkt();
    double worst = 0.0;
    for (std::uint64_t t = 0; t < 20; ++t) {
      KeyedRng rng(cfg.analysis.eig.seed, StreamPurpose::kTesting, 100, t);
      const Vector x = rng.normal_vector(k.dim());
      const Vector y = rng.normal_vector(k.dim());
      const Vector kx = k.apply(x);
      const Vector ky = k.apply(y);
      worst = std::max(worst, std::abs(kx.dot(y) - x.dot(ky)) / (kx.norm() * y.norm() + x.norm() * ky.norm()));
    }
    add("kkt_self_adjoint", worst <= 1e-10, "max relative gap " + detail::num(worst, 3));
  }
  {
    const ParamJacobianOperator& b = sens.param_jacobian();
    double worst = 0.0;
    for (std::uint64_t t = 0; t < 20; ++t) {
      KeyedRng rng(cfg.analysis.eig.seed, StreamPurpose::kTesting, 200, t);
      const Vector x = rng.normal_vector(b.in_dim());
      const Vector y = rng.normal_vector(b.out_dim());
      const Vector bx = b.apply(x);
      const Vector bty = b.apply_adjoint(y);
      const double scale = bx.norm() * y.norm() + x.norm() * bty.norm();
      worst = std::max(worst, scale > 0.0 ? std::abs(bx.dot(y) - x.dot(bty)) / scale : 0.0);
    }
    add("param_jacobian_adjoint", worst <= 1e-10, "max relative gap " + detail::num(worst, 3));
  }

  const RandEigConfig& eig = cfg.analysis.eig;
  std::vector<SingularTriple> oracle;
  if (d.n_z + d.n_theta > kDenseThreshold) {
    skip("oracle_vs_randomized", "n_z + n_theta exceeds the dense threshold");
    skip("alternative_formulation", "needs the oracle");
  } else {
    try {
      oracle = dense_oracle(sens, sp).triples;
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(eig.k_pairs), oracle.size());
      // Configured K and L are trusted only behind a clear spectral gap;
      // otherwise the solver is given enough probes to capture the range.
      const bool gap = k < oracle.size() && oracle[k].sigma > 0.0 ? oracle[k - 1].sigma / oracle[k].sigma >= 10.0 : true;
      RandEigConfig rc = eig;
      std::string mode = "K=" + std::to_string(eig.k_pairs) + " L=" + std::to_string(eig.oversampling);
      if (!gap) {
        rc.k_pairs = detail::range_capturing_pairs(d.n_z, d.n_theta);
        rc.oversampling = 0;
        mode = "no gap after K, range-capturing K=" + std::to_string(rc.k_pairs);
      }
      const GenEigResult r = randomized_geneig(sens, sp, rc);
      const std::size_t cmp = std::min({k, r.triples.size(), oracle.size()});
      // Only triples above the rank threshold have well-defined vectors.
      std::size_t meaningful = 0;
      while (meaningful < cmp && oracle[meaningful].sigma > 1e-6 * oracle.front().sigma) ++meaningful;
      const auto g = detail::compare_triples(r.triples, oracle, sp, meaningful);
      add("oracle_vs_randomized", cmp == k && g.sigma <= 1e-6 && g.vectors <= 1e-5,
          mode + ": sigma rel " + detail::num(g.sigma, 3) + ", vectors " + detail::num(g.vectors, 3));

      RandEigConfig ac = eig;
      ac.k_pairs = static_cast<int>(std::min<Index>(eig.k_pairs, d.n_theta));
      ac.oversampling = static_cast<int>(d.n_theta) - ac.k_pairs;
      const AlternativeResult alt = alternative_formulation(sens, sp, ac);
      double worst = 0.0;
      const std::size_t na = std::min<std::size_t>(static_cast<std::size_t>(alt.alphas.size()), meaningful);
      for (std::size_t i = 0; i < na; ++i) {
        const double s2 = oracle[i].sigma * oracle[i].sigma;
        worst = std::max(worst, std::abs(alt.alphas[static_cast<Index>(i)] - s2) / s2);
      }
      add("alternative_formulation", na == meaningful && worst <= 1e-6, "alpha vs sigma^2 rel " + detail::num(worst, 3));
    } catch (const std::exception& e) {
      add("oracle_vs_randomized", false, e.what());
    }
  }

  {
    std::vector<double> deltas = cfg.diagnostics.perturbation_deltas;
    if (deltas.empty()) deltas = {1e-2, 1e-3, 1e-4};
    std::sort(deltas.begin(), deltas.end(), std::greater<>());
    try {
      const Vector phi = detail::unit_direction(sp, d.n_theta, cfg.diagnostics.perturbation_parameter);
      std::vector<double> errs;
      std::string detail_text;
      for (double delta : deltas) {
        const PerturbationResult p = perturbation_check(problem, opt, phi, delta, cfg.analysis.optimizer, cfg.analysis.kkt);
        errs.push_back(std::abs(p.ratio - 1.0));
        detail_text += (detail_text.empty() ? "|ratio-1| = " : ", ") + detail::num(errs.back(), 3);
      }
      // Either the linearization error shrinks with delta, or the problem is
      // linear in theta and the error sits at round-off.
      bool decreasing = true;
      for (std::size_t i = 1; i < errs.size(); ++i) decreasing = decreasing && errs[i] < errs[i - 1];
      const double worst = *std::max_element(errs.begin(), errs.end());
      add("perturbation_sweep", (decreasing && errs.back() <= 1e-3) || worst <= 1e-6, detail_text);
    } catch (const std::exception& e) {
      add("perturbation_sweep", false, e.what());
    }
  }

  const bool linear_case = cfg.problem.type == "diffusion_control" && cfg.problem.diffusion.gamma == 0.0;
  if (!linear_case) {
    skip("linearity", "applies to diffusion_control with gamma = 0");
  } else if (d.n_z + d.n_theta > kDenseThreshold) {
    skip("linearity", "n_z + n_theta exceeds the dense threshold");
  } else {
    try {
      std::vector<std::vector<SingularTriple>> per;
      std::vector<Vector> locals;
      const int samples = std::max(2, cfg.diagnostics.linearity_samples);
      for (int j = 0; j < samples; ++j) {
        const SampledInputs sj = sample_inputs(cfg.analysis.plan, d.n_theta, d.n_z, static_cast<std::uint64_t>(j));
        const OptimalPoint oj = solve_optimization(*problem, sj.theta, sj.z_init, cfg.analysis.optimizer);
        const SensitivityOperator sj_op(problem, oj.point, cfg.analysis.kkt);
        per.push_back(dense_oracle(sj_op, sp).triples);
        locals.push_back(local_indices(per.back(), sp.m_theta));
      }
      double worst = 0.0;
      for (std::size_t j = 1; j < per.size(); ++j) {
        for (std::size_t k = 0; k < per[0].size(); ++k) {
          worst = std::max(worst, std::abs(per[j][k].sigma - per[0][k].sigma) / per[0].front().sigma);
        }
        worst = std::max(worst, (locals[j] - locals[0]).norm() / locals[0].norm());
      }
      add("linearity", worst <= 1e-6,
          std::to_string(samples) + " parameter samples, max relative change " + detail::num(worst, 3));
    } catch (const std::exception& e) {
      add("linearity", false, e.what());
    }
  }
  return checks;
}

inline int cmd_verify(const std::string& config_path, std::ostream& out, std::ostream& err) {
  detail::Loaded l;
  try {
    l = detail::load(config_path);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  }
  std::vector<VerifyCheck> checks;
  try {
    checks = verify_problem(l.cfg, l.problem);
  } catch (const std::exception& e) {
    err << "verification aborted: " << e.what() << '\n';
    return kExitFailure;
  }
  std::size_t width = 5;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "check" << "  status  detail\n";
  std::vector<std::string> failed;
  for (const auto& c : checks) {
    const char* status = c.status == VerifyCheck::Status::kPass ? "pass" : c.status == VerifyCheck::Status::kFail ? "FAIL" : "skip";
    out << std::left << std::setw(static_cast<int>(width)) << c.name << "  " << std::setw(6) << status << "  " << c.detail
        << '\n';
    if (c.status == VerifyCheck::Status::kFail) failed.push_back(c.name);
  }
  if (failed.empty()) {
    out << "all checks passed\n";
    return kExitOk;
  }
  err << "failed checks:";
  for (const auto& f : failed) err << ' ' << f;
  err << '\n';
  return kExitFailure;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  int count = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.count = static_cast<int>(v.size());
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / static_cast<double>(v.size()));
  return m;
}

/// Tables rebuilt from the CSV files of a bundle.
struct BundleSummary {
  std::string problem;
  std::vector<std::pair<std::string, MeanStd>> sets;  // descending by mean
  std::vector<std::pair<long, MeanStd>> parameters;   // descending by mean
  std::vector<MeanStd> sigma;                         // per triple index k
  MeanStd decay;                                      // sigma_last / sigma_0 per sample
  int samples = 0;
};

inline BundleSummary summarize_bundle(const std::filesystem::path& dir) {
  const Json manifest = read_manifest(dir);
  BundleSummary s;
  {
    std::ifstream in(dir / "report.json", std::ios::binary);
    Json rep;
    try {
      in >> rep;
    } catch (const Json::exception& e) {
      throw BundleError("corrupt report.json: " + std::string(e.what()));
    }
    if (!rep.is_object() || !rep.contains("problem") || !rep["problem"].is_string()) {
      throw BundleError("report.json lacks a problem name");
    }
    s.problem = rep["problem"].get<std::string>();
  }
  auto as_long = [](const std::string& v, const std::string& where) {
    const double x = parse_number(v, where);
    if (x < 0 || x != std::floor(x)) throw BundleError("bad index '" + v + "' in " + where);
    return static_cast<long>(x);
  };

  std::map<long, std::map<long, double>> sigma_by_sample;
  for (const auto& row : read_csv(dir / "singular_values.csv", {"j", "k", "sigma"}).rows) {
    sigma_by_sample[as_long(row[0], "singular_values.csv")][as_long(row[1], "singular_values.csv")] =
        parse_number(row[2], "singular_values.csv");
  }
  std::map<long, std::vector<double>> per_param;
  std::set<long> samples;
  for (const auto& row : read_csv(dir / "local_indices.csv", {"j", "i", "S_hat"}).rows) {
    samples.insert(as_long(row[0], "local_indices.csv"));
    per_param[as_long(row[1], "local_indices.csv")].push_back(parse_number(row[2], "local_indices.csv"));
  }
  std::vector<std::string> set_order;
  std::map<std::string, std::vector<double>> per_set;
  for (const auto& row : read_csv(dir / "set_indices.csv", {"j", "set", "value"}).rows) {
    if (!per_set.count(row[1])) set_order.push_back(row[1]);
    per_set[row[1]].push_back(parse_number(row[2], "set_indices.csv"));
  }
  s.samples = static_cast<int>(samples.size());

  for (const auto& name : set_order) s.sets.emplace_back(name, mean_std(per_set[name]));
  std::stable_sort(s.sets.begin(), s.sets.end(), [](const auto& a, const auto& b) { return a.second.mean > b.second.mean; });
  for (const auto& [i, v] : per_param) s.parameters.emplace_back(i, mean_std(v));
  std::stable_sort(s.parameters.begin(), s.parameters.end(),
                   [](const auto& a, const auto& b) { return a.second.mean > b.second.mean; });

  std::map<long, std::vector<double>> per_k;
  std::vector<double> decay;
  for (const auto& [j, ks] : sigma_by_sample) {
    for (const auto& [k, v] : ks) per_k[k].push_back(v);
    if (!ks.empty() && ks.begin()->second > 0.0) decay.push_back(ks.rbegin()->second / ks.begin()->second);
  }
  for (const auto& [k, v] : per_k) s.sigma.push_back(mean_std(v));
  s.decay = mean_std(decay);
  return s;
}

inline void render_summary(const BundleSummary& s, std::ostream& out) {
  auto row = [&](const std::string& label, const MeanStd& m) {
    out << "  " << std::left << std::setw(24) << label << std::right << std::setw(14) << detail::num(m.mean) << "  +/- "
        << std::setw(12) << detail::num(m.std) << '\n';
  };
  out << "problem: " << s.problem << "  samples: " << s.samples << "\n\n";
  out << "set sensitivity indices (mean +/- std over samples)\n";
  for (const auto& [name, m] : s.sets) row(name, m);
  out << "\ntop parameter indices\n";
  for (std::size_t r = 0; r < std::min<std::size_t>(10, s.parameters.size()); ++r) {
    row("theta[" + std::to_string(s.parameters[r].first) + "]", s.parameters[r].second);
  }
  out << "\nspectral decay\n";
  for (std::size_t k = 0; k < s.sigma.size(); ++k) row("sigma[" + std::to_string(k) + "]", s.sigma[k]);
  row("sigma_last / sigma_0", s.decay);
}

inline int cmd_report(const std::string& bundle_dir, std::ostream& out, std::ostream& err) {
  try {
    render_summary(summarize_bundle(bundle_dir), out);
  } catch (const BundleError& e) {
    err << "bundle error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace hdsa::cli
