// JSON run configuration: parsing, validation and problem construction.
//
// Every object is checked for unknown keys. Errors carry the JSON path and,
// when it can be located, the line of the offending key.
#pragma once

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hdsa/analysis.hpp"
#include "hdsa/problems/advdiff_inversion.hpp"
#include "hdsa/problems/decorators.hpp"
#include "hdsa/problems/diffusion_control.hpp"
#include "hdsa/problems/logistic.hpp"

namespace hdsa::cli {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProblemSpec {
  std::string type = "logistic";
  problems::DiffusionControlConfig diffusion;
  problems::AdvDiffConfig advdiff;
  std::vector<SetPartition::Set> partition;  // empty: keep the problem's own
  bool corrupt_derivative = false;
};

struct DiagnosticsSpec {
  bool oracle = false;
  std::vector<double> perturbation_deltas;
  Index perturbation_parameter = 0;
  int linearity_samples = 2;
};

struct RunConfig {
  ProblemSpec problem;
  AnalysisConfig analysis;
  DiagnosticsSpec diagnostics;
  std::string output_dir = "hdsa_output";
  bool sampling_seed_explicit = false;
  Json echo;  // the document as read, for the manifest
};

namespace detail {

inline int line_of(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) line += text[i] == '\n' ? 1 : 0;
  return line;
}

// Reads one JSON object, tracking the path and which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path, const std::string& text) : obj_(obj), path_(std::move(path)), text_(text) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    std::ostringstream msg;
    msg << "config error";
    const std::size_t slash = where.find_last_of('/');
    const std::string key = slash == std::string::npos ? where : where.substr(slash + 1);
    if (!key.empty()) {
      const std::size_t pos = text_.find("\"" + key + "\"");
      if (pos != std::string::npos) msg << " (line " << line_of(text_, pos) << ")";
    }
    msg << " at " << (where.empty() ? "/" : where) << ": " << what;
    throw ConfigError(msg.str());
  }

  [[nodiscard]] bool has(const std::string& key) const { return obj_.contains(key); }
  [[nodiscard]] std::string at(const std::string& key) const { return path_ + "/" + key; }

  const Json& get(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const Json& v = get(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    return v.get<double>();
  }

  double positive(const std::string& key, double fallback) {
    const double v = number(key, fallback);
    if (!(v > 0.0)) fail(at(key), "must be positive");
    return v;
  }

  double nonnegative(const std::string& key, double fallback) {
    const double v = number(key, fallback);
    if (!(v >= 0.0)) fail(at(key), "must be nonnegative");
    return v;
  }

  long long integer(const std::string& key, long long fallback, long long lo, long long hi) {
    if (!has(key)) return fallback;
    const Json& v = get(key);
    if (!v.is_number_integer()) fail(at(key), "expected an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) {
      fail(at(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(x));
    }
    return x;
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const Json& v = get(key);
    if (!v.is_number_unsigned()) fail(at(key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = get(key);
    if (!v.is_boolean()) fail(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback, const std::vector<std::string>& allowed = {}) {
    if (!has(key)) return fallback;
    const Json& v = get(key);
    if (!v.is_string()) fail(at(key), "expected a string");
    auto s = v.get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail(at(key), "unknown value '" + s + "' (expected one of: " + list + ")");
    }
    return s;
  }

  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    if (!has(key)) return out;
    const Json& v = get(key);
    if (!v.is_array()) fail(at(key), "expected an array of numbers");
    for (const auto& e : v) {
      if (!e.is_number()) fail(at(key), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  ObjectReader child(const std::string& key) { return {get(key), at(key), text_}; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key '" + it.key() + "'");
    }
  }

  [[nodiscard]] const std::string& path() const { return path_; }
  [[nodiscard]] const std::string& text() const { return text_; }

 private:
  const Json& obj_;
  std::string path_;
  const std::string& text_;
  std::set<std::string> seen_;
};

inline fem1d::AnalyticProfile read_profile(ObjectReader r, const fem1d::AnalyticProfile& fallback) {
  fem1d::AnalyticProfile p = fallback;
  const std::string kind = r.string("kind", "", {"gaussian_bump", "sine", "constant"});
  if (kind == "gaussian_bump") p.kind = fem1d::AnalyticProfile::Kind::kGaussianBump;
  if (kind == "sine") p.kind = fem1d::AnalyticProfile::Kind::kSine;
  if (kind == "constant") p.kind = fem1d::AnalyticProfile::Kind::kConstant;
  p.amplitude = r.number("amplitude", p.amplitude);
  p.center = r.number("center", p.center);
  p.width = r.positive("width", p.width);
  p.frequency = r.number("frequency", p.frequency);
  r.finish();
  return p;
}

inline Distribution read_distribution(const Json& j, const std::string& path, const std::string& text) {
  ObjectReader r(j, path, text);
  const std::string type = r.string("type", "", {"uniform", "normal", "fixed"});
  Distribution d;
  if (type == "uniform") {
    d = Distribution::uniform(r.number("low", -1.0), r.number("high", 1.0));
    if (d.b < d.a) r.fail(r.at("high"), "must not be below low");
  } else if (type == "normal") {
    d = Distribution::normal(r.number("mean", 0.0), r.nonnegative("std", 1.0));
  } else if (type == "fixed") {
    d = Distribution::fixed(r.number("value", 0.0));
  } else {
    r.fail(r.at("type"), "required");
  }
  r.finish();
  return d;
}

inline void read_problem(ObjectReader r, ProblemSpec& spec) {
  spec.type = r.string("type", "", {"logistic", "diffusion_control", "advdiff_inversion"});
  if (spec.type.empty()) r.fail(r.at("type"), "required");
  if (spec.type == "diffusion_control") {
    auto& c = spec.diffusion;
    c.n_nodes = r.integer("n_nodes", c.n_nodes, 2, 100000);
    c.n_params = r.integer("n_params", c.n_params, 1, 10000);
    c.gamma = r.nonnegative("gamma", c.gamma);
    c.kappa_bar = r.positive("kappa_bar", c.kappa_bar);
    c.amplitude = r.number("amplitude", c.amplitude);
    if (r.has("target")) c.target = read_profile(r.child("target"), c.target);
  } else if (spec.type == "advdiff_inversion") {
    auto& c = spec.advdiff;
    c.n_nodes = r.integer("n_nodes", c.n_nodes, 3, 100000);
    c.n_steps = r.integer("n_steps", c.n_steps, 1, 100000);
    c.t_final = r.positive("t_final", c.t_final);
    if (r.has("source_window")) {
      const auto w = r.numbers("source_window");
      if (w.size() != 2 || !(w[1] > w[0])) r.fail(r.at("source_window"), "expected [begin, end] with end > begin");
      c.window_begin = w[0];
      c.window_end = w[1];
    }
    c.diffusion_bar = r.positive("diffusion", c.diffusion_bar);
    c.velocity_bar = r.number("velocity", c.velocity_bar);
    c.amplitude = r.number("amplitude", c.amplitude);
    c.velocity_params = r.integer("velocity_params", c.velocity_params, 1, 10000);
    c.window_params = r.integer("window_params", c.window_params, 1, 10000);
    if (r.has("sensors") && r.has("n_sensors")) r.fail(r.at("sensors"), "give either sensors or n_sensors, not both");
    c.sensors = r.numbers("sensors");
    for (double x : c.sensors) {
      if (!(x >= 0.0 && x <= 1.0)) r.fail(r.at("sensors"), "sensor location outside [0, 1]");
    }
    c.n_sensors = r.integer("n_sensors", c.n_sensors, 1, 100000);
    c.alpha = r.nonnegative("alpha", c.alpha);
    c.noise_level = r.nonnegative("noise_level", c.noise_level);
    c.noise_seed = r.seed("noise_seed", c.noise_seed);
    c.data_refinement = r.integer("data_refinement", c.data_refinement, 1, 16);
    if (r.has("true_source")) c.true_source = read_profile(r.child("true_source"), c.true_source);
  }
  r.finish();
}

}  // namespace detail

/// Builds the configured problem, including partition override and the
/// corrupted-derivative fixture.
inline ProblemPtr build_problem(const ProblemSpec& spec) {
  ProblemPtr p;
  if (spec.type == "logistic") {
    p = problems::build_logistic_toy();
  } else if (spec.type == "diffusion_control") {
    p = problems::build_diffusion_control_1d(spec.diffusion);
  } else if (spec.type == "advdiff_inversion") {
    p = problems::build_advdiff_inversion_1d(spec.advdiff);
  } else {
    throw std::invalid_argument("unknown problem type '" + spec.type + "'");
  }
  if (!spec.partition.empty()) p = std::make_shared<const problems::RepartitionedProblem>(p, SetPartition{spec.partition});
  if (spec.corrupt_derivative) p = std::make_shared<const problems::CorruptedHessianProblem>(p);
  return p;
}

/// Parses a configuration document. The HDSA_SEED environment variable, when
/// set, replaces hdsa.seed (and the sampling seed unless given explicitly).
inline RunConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::ostringstream msg;
    msg << "config error (line " << detail::line_of(text, e.byte > 0 ? e.byte - 1 : 0) << "): " << e.what();
    throw ConfigError(msg.str());
  }
  RunConfig cfg;
  cfg.echo = doc;
  detail::ObjectReader root(doc, "", text);
  if (!root.has("problem")) root.fail("/problem", "required");
  detail::read_problem(root.child("problem"), cfg.problem);

  AnalysisConfig& a = cfg.analysis;
  if (root.has("hdsa")) {
    auto r = root.child("hdsa");
    a.eig.n_samples = static_cast<int>(r.integer("n_samples", a.eig.n_samples, 1, 100000));
    a.eig.k_pairs = static_cast<int>(r.integer("k_pairs", a.eig.k_pairs, 1, 10000));
    a.eig.oversampling = static_cast<int>(r.integer("oversampling", a.eig.oversampling, 0, 10000));
    a.eig.seed = r.seed("seed", a.eig.seed);
    const std::string mode = r.string("set_index_mode", "truncated", {"truncated", "direct"});
    a.set_mode = mode == "direct" ? SetIndexMode::kDirect : SetIndexMode::kTruncated;
    r.finish();
  }
  a.plan.seed = a.eig.seed;
  a.plan.coordinates = {Distribution::uniform(-1.0, 1.0)};
  if (root.has("sampling")) {
    auto r = root.child("sampling");
    if (r.has("parameters")) {
      const Json& p = r.get("parameters");
      a.plan.coordinates.clear();
      if (p.is_array()) {
        if (p.empty()) r.fail(r.at("parameters"), "must not be empty");
        for (std::size_t i = 0; i < p.size(); ++i) {
          a.plan.coordinates.push_back(detail::read_distribution(p[i], r.at("parameters") + "/" + std::to_string(i), text));
        }
      } else {
        a.plan.coordinates.push_back(detail::read_distribution(p, r.at("parameters"), text));
      }
    }
    const std::string init = r.string("initial_iterate", "zero", {"zero", "random"});
    a.plan.init_mode = init == "random" ? InitialIterateMode::kRandom : InitialIterateMode::kZero;
    a.plan.init_scale = r.nonnegative("initial_scale", a.plan.init_scale);
    cfg.sampling_seed_explicit = r.has("seed");
    a.plan.seed = r.seed("seed", a.plan.seed);
    r.finish();
  }
  if (root.has("optimizer")) {
    auto r = root.child("optimizer");
    a.optimizer.stationarity_tol = r.positive("stationarity_tol", a.optimizer.stationarity_tol);
    a.optimizer.max_outer = static_cast<int>(r.integer("max_iterations", a.optimizer.max_outer, 0, 100000));
    a.optimizer.enforce_sosc = r.boolean("enforce_sosc", a.optimizer.enforce_sosc);
    a.optimizer.forward.tol = r.positive("forward_tol", a.optimizer.forward.tol);
    a.optimizer.forward.max_iter = static_cast<int>(r.integer("forward_max_iterations", a.optimizer.forward.max_iter, 1, 100000));
    r.finish();
  }
  if (root.has("kkt")) {
    auto r = root.child("kkt");
    const std::string m = r.string("method", "auto", {"auto", "dense", "minres", "reduced"});
    a.kkt.method = m == "dense" ? KktMethod::kDense
                   : m == "minres" ? KktMethod::kMinres
                   : m == "reduced" ? KktMethod::kReduced
                                    : KktMethod::kAuto;
    a.kkt.tol = r.positive("tol", a.kkt.tol);
    a.kkt.max_iter = static_cast<int>(r.integer("max_iterations", a.kkt.max_iter, 1, 10000000));
    a.kkt.dense_fallback = r.boolean("dense_fallback", a.kkt.dense_fallback);
    r.finish();
  }
  if (root.has("partition")) {
    const Json& p = root.get("partition");
    if (!p.is_array() || p.empty()) root.fail("/partition", "expected a nonempty array of sets");
    for (std::size_t i = 0; i < p.size(); ++i) {
      detail::ObjectReader r(p[i], "/partition/" + std::to_string(i), text);
      SetPartition::Set s;
      s.name = r.string("name", "");
      if (s.name.empty() || s.name.find_first_of(",\"\n") != std::string::npos) {
        r.fail(r.at("name"), "required; must not contain commas, quotes or newlines");
      }
      s.begin = r.integer("begin", -1, 0, 1000000);
      s.end = r.integer("end", -1, 1, 1000000);
      if (!r.has("begin") || !r.has("end")) r.fail(r.path(), "begin and end are required");
      r.finish();
      cfg.problem.partition.push_back(s);
    }
  }
  if (root.has("diagnostics")) {
    auto r = root.child("diagnostics");
    cfg.diagnostics.oracle = r.boolean("oracle", false);
    cfg.diagnostics.perturbation_deltas = r.numbers("perturbation_deltas");
    for (double d : cfg.diagnostics.perturbation_deltas) {
      if (!(d > 0.0)) r.fail(r.at("perturbation_deltas"), "deltas must be positive");
    }
    cfg.diagnostics.perturbation_parameter = r.integer("perturbation_parameter", 0, 0, 1000000);
    cfg.diagnostics.linearity_samples = static_cast<int>(r.integer("linearity_samples", 2, 2, 1000));
    r.finish();
  }
  if (root.has("testing")) {
    auto r = root.child("testing");
    cfg.problem.corrupt_derivative = r.boolean("corrupt_derivative", false);
    r.finish();
  }
  cfg.output_dir = root.string("output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) root.fail("/output_dir", "must not be empty");
  root.finish();

  if (const char* env = std::getenv("HDSA_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || end == env || *end != '\0' || env[0] == '-') {
      throw ConfigError(std::string("config error: HDSA_SEED must be a nonnegative integer, got '") + env + "'");
    }
    a.eig.seed = v;
    if (!cfg.sampling_seed_explicit) a.plan.seed = v;
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config error: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Dimension-dependent checks that need the built problem.
inline void validate_against(const RunConfig& cfg, const ProblemDefinition& p) {
  const ProblemDims d = p.dims();
  try {
    cfg.analysis.eig.validate(d.n_z, d.n_theta);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config error at /hdsa: ") + e.what());
  }
  const auto& coords = cfg.analysis.plan.coordinates;
  if (coords.size() != 1 && static_cast<Index>(coords.size()) != d.n_theta) {
    throw ConfigError("config error at /sampling/parameters: expected 1 or " + std::to_string(d.n_theta) +
                      " distributions, got " + std::to_string(coords.size()));
  }
  if (cfg.diagnostics.perturbation_parameter >= d.n_theta) {
    throw ConfigError("config error at /diagnostics/perturbation_parameter: must be below " + std::to_string(d.n_theta));
  }
  try {
    require_block_orthogonal(p.spaces().m_theta, p.spaces().partition);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config error at /partition: ") + e.what());
  }
}

}  // namespace hdsa::cli
