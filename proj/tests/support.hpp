// Shared fixtures for the test executables.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hdsa/hdsa.hpp"

namespace hdsa::testing {

inline Vector random_vector(Index n, std::uint64_t key, std::uint64_t seed = 99) {
  KeyedRng rng(seed, StreamPurpose::kTesting, key);
  return rng.normal_vector(n);
}

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t key) {
  KeyedRng rng(99, StreamPurpose::kTesting, key, 1);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

/// G^T G + shift I.
inline Matrix random_spd(Index n, std::uint64_t key, double shift = 1.0) {
  const Matrix g = random_matrix(n, n, key);
  return g.transpose() * g + shift * Matrix::Identity(n, n);
}

inline double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }
inline double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }
inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hdsa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Solves the optimization at theta from zero and returns the optimum.
inline OptimalPoint optimum(const ProblemPtr& p, const Vector& theta, OptimizerConfig cfg = {}) {
  return solve_optimization(*p, theta, Vector::Zero(p->dims().n_z), cfg);
}

}  // namespace hdsa::testing
