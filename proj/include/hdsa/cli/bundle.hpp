// Result bundle on disk: manifest.json, report.json and flat CSV tables.
//
// CSV conventions: every table starts with a header naming its columns; j is
// the sample index, k the singular triple index (0 = largest), i the parameter
// or optimization-variable coordinate (0-based). Numbers use %.17g so reruns
// compare byte for byte.
#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdsa/analysis.hpp"
#include "hdsa/cli/config.hpp"

namespace hdsa::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kBundleFormat = "hdsa-bundle";
inline constexpr int kBundleFormatVersion = 1;

inline const std::vector<std::string>& bundle_csv_files() {
  static const std::vector<std::string> files{"singular_values.csv",        "local_indices.csv",
                                              "set_indices.csv",            "singular_vectors_theta.csv",
                                              "singular_vectors_z.csv",     "optimal_z.csv"};
  return files;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v[i]) ? Json(v[i]) : Json(nullptr));
  return a;
}

inline Json to_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

struct BundleExtras {
  std::vector<PerturbationResult> perturbation;
  std::map<std::uint64_t, Vector> oracle_sigma;  // per sample
};

inline Json report_json(const RunConfig& cfg, const HdsaReport& rep, const BundleExtras& extras) {
  Json j;
  j["problem"] = rep.problem;
  j["dims"] = {{"n_u", rep.dims.n_u}, {"n_z", rep.dims.n_z}, {"n_theta", rep.dims.n_theta}, {"n_lambda", rep.dims.n_lambda}};
  j["k_pairs"] = cfg.analysis.eig.k_pairs;
  j["oversampling"] = cfg.analysis.eig.oversampling;
  j["n_samples"] = cfg.analysis.eig.n_samples;
  j["seed"] = cfg.analysis.eig.seed;
  j["sampling_seed"] = cfg.analysis.plan.seed;
  j["set_index_mode"] = cfg.analysis.set_mode == SetIndexMode::kDirect ? "direct" : "truncated";
  j["sets"] = rep.set_names;
  j["failures"] = rep.failures;
  Json samples = Json::array();
  for (const auto& s : rep.samples) {
    Json e;
    e["j"] = s.j;
    e["status"] = s.ok ? "ok" : "failed";
    if (!s.ok) {
      e["error"] = s.error;
      if (s.theta.size() > 0) e["theta"] = to_json(s.theta);
      samples.push_back(e);
      continue;
    }
    e["theta"] = to_json(s.theta);
    e["optimizer"] = {{"objective", to_json(s.optimum.objective)},
                      {"iterations", s.optimum.iterations},
                      {"reduced_gradient_norm", to_json(s.optimum.grad_norm)},
                      {"constraint_residual_norm", to_json(s.optimum.residual_norm)},
                      {"adjoint_residual_norm", to_json(s.optimum.adjoint_residual)},
                      {"sosc_checked", s.optimum.sosc_checked},
                      {"sosc_min_eig", to_json(s.optimum.sosc_min_eig)}};
    Vector sigma(static_cast<Index>(s.eig.triples.size()));
    for (std::size_t k = 0; k < s.eig.triples.size(); ++k) sigma[static_cast<Index>(k)] = s.eig.triples[k].sigma;
    e["sigma"] = to_json(sigma);
    e["rank_deficient"] = s.eig.rank_deficient;
    e["ritz_values"] = to_json(s.eig.ritz_values);
    e["basis_size"] = s.eig.basis_size;
    e["decay_ratio"] = to_json(s.decay_ratio);
    e["local_indices"] = to_json(s.local);
    Json sets = Json::object();
    for (std::size_t i = 0; i < rep.set_names.size(); ++i) sets[rep.set_names[i]] = to_json(s.sets[i]);
    e["set_indices"] = sets;
    e["traditional_sensitivity"] = to_json(s.traditional);
    e["kkt"] = {{"solves", s.kkt.solves},
                {"iterations", s.kkt.iterations},
                {"max_backward_error", to_json(s.kkt.max_relative_residual)}};
    if (auto it = extras.oracle_sigma.find(s.j); it != extras.oracle_sigma.end()) e["oracle_sigma"] = to_json(it->second);
    samples.push_back(e);
  }
  j["samples"] = samples;
  Json agg;
  agg["local_mean"] = to_json(rep.local_mean);
  agg["local_std"] = to_json(rep.local_std);
  Json sm = Json::object();
  Json ss = Json::object();
  for (std::size_t i = 0; i < rep.set_names.size(); ++i) {
    sm[rep.set_names[i]] = to_json(rep.set_mean[i]);
    ss[rep.set_names[i]] = to_json(rep.set_std[i]);
  }
  agg["set_mean"] = sm;
  agg["set_std"] = ss;
  j["aggregates"] = agg;
  if (!extras.perturbation.empty()) {
    Json pc = Json::array();
    for (const auto& p : extras.perturbation) {
      pc.push_back({{"delta", p.delta}, {"lhs", to_json(p.lhs)}, {"prediction", to_json(p.prediction)}, {"ratio", to_json(p.ratio)}});
    }
    j["perturbation_check"] = {{"parameter", cfg.diagnostics.perturbation_parameter}, {"results", pc}};
  }
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

/// CSV tables keyed by file name.
inline std::map<std::string, std::string> bundle_tables(const HdsaReport& rep) {
  std::ostringstream sv, li, si, vt, vz, oz;
  sv << "j,k,sigma\n";
  li << "j,i,S_hat\n";
  si << "j,set,value\n";
  vt << "j,k,i,value\n";
  vz << "j,k,i,value\n";
  oz << "j,i,value\n";
  for (const auto& s : rep.samples) {
    if (!s.ok) continue;
    for (std::size_t k = 0; k < s.eig.triples.size(); ++k) {
      const auto& t = s.eig.triples[k];
      sv << s.j << ',' << k << ',' << fmt(t.sigma) << '\n';
      for (Index i = 0; i < t.theta_vec.size(); ++i) vt << s.j << ',' << k << ',' << i << ',' << fmt(t.theta_vec[i]) << '\n';
      for (Index i = 0; i < t.z_vec.size(); ++i) vz << s.j << ',' << k << ',' << i << ',' << fmt(t.z_vec[i]) << '\n';
    }
    for (Index i = 0; i < s.local.size(); ++i) li << s.j << ',' << i << ',' << fmt(s.local[i]) << '\n';
    for (std::size_t i = 0; i < rep.set_names.size(); ++i) si << s.j << ',' << rep.set_names[i] << ',' << fmt(s.sets[i]) << '\n';
    const Vector& z = s.optimum.point.z;
    for (Index i = 0; i < z.size(); ++i) oz << s.j << ',' << i << ',' << fmt(z[i]) << '\n';
  }
  return {{"singular_values.csv", sv.str()},        {"local_indices.csv", li.str()},
          {"set_indices.csv", si.str()},            {"singular_vectors_theta.csv", vt.str()},
          {"singular_vectors_z.csv", vz.str()},     {"optimal_z.csv", oz.str()}};
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_bundle(const std::filesystem::path& dir, const RunConfig& cfg, const HdsaReport& rep,
                         const BundleExtras& extras, int workers, double wall_seconds) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : bundle_tables(rep)) write_text(dir / name, content);
  write_text(dir / "report.json", report_json(cfg, rep, extras).dump(2) + "\n");
  Json files = Json::array();
  for (const auto& f : bundle_csv_files()) files.push_back(f);
  files.push_back("report.json");
  Json manifest;
  manifest["format"] = kBundleFormat;
  manifest["format_version"] = kBundleFormatVersion;
  manifest["tool"] = "hdsa";
  manifest["version"] = kToolVersion;
  manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);
  manifest["config"] = cfg.echo;
  manifest["seed"] = cfg.analysis.eig.seed;
  manifest["sampling_seed"] = cfg.analysis.plan.seed;
  manifest["workers"] = workers;
  manifest["wall_clock_seconds"] = wall_seconds;
  manifest["created_utc"] = utc_timestamp();
  manifest["files"] = files;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("missing file '" + path.string() + "'");
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw BundleError("empty file '" + path.string() + "'");
  t.header = split(line);
  if (t.header != expected_header) throw BundleError("unexpected header in '" + path.string() + "'");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != t.header.size()) {
      throw BundleError("malformed row at line " + std::to_string(lineno) + " of '" + path.string() + "'");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw BundleError("not a number '" + s + "' in " + where);
  }
}

inline Json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("missing manifest '" + path.string() + "'");
  Json m;
  try {
    in >> m;
  } catch (const Json::exception& e) {
    throw BundleError("corrupt manifest: " + std::string(e.what()));
  }
  if (!m.is_object() || m.value("format", "") != kBundleFormat || !m.contains("files") || !m["files"].is_array()) {
    throw BundleError("manifest is not an hdsa bundle manifest");
  }
  if (m.value("format_version", 0) != kBundleFormatVersion) throw BundleError("unsupported bundle format version");
  for (const auto& f : m["files"]) {
    if (!f.is_string() || !std::filesystem::exists(dir / f.get<std::string>())) {
      throw BundleError("bundle file listed in manifest is missing: " + f.dump());
    }
  }
  return m;
}

}  // namespace hdsa::cli
