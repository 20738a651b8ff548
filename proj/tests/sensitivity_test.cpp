#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

namespace hdsa {
namespace {

using problems::DiffusionControl1D;
using problems::LogisticToy;
using testing::random_vector;
using testing::rel;

const Vector kHalfHalf{{0.5, 0.5}};

std::shared_ptr<const DiffusionControl1D> small_diffusion(double gamma = 0.01) {
  problems::DiffusionControlConfig cfg;
  cfg.n_nodes = 16;
  cfg.n_params = 4;
  cfg.gamma = gamma;
  return std::make_shared<const DiffusionControl1D>(cfg);
}

std::vector<ProblemPtr> all_problems() {
  problems::AdvDiffConfig small;
  small.n_nodes = 17;
  small.n_steps = 10;
  return {problems::build_logistic_toy(), small_diffusion(), problems::build_advdiff_inversion_1d(small)};
}

Vector some_theta(const ProblemDefinition& p, std::uint64_t key) {
  if (p.name() == "logistic") return kHalfHalf;
  return 0.5 * random_vector(p.dims().n_theta, key).cwiseMax(-1.0).cwiseMin(1.0);
}

OptimalPoint optimum_of(const ProblemPtr& p, std::uint64_t key = 1) { return testing::optimum(p, some_theta(*p, key)); }

WeightedSpaces identity_spaces(Index m, Index n) {
  WeightedSpaces s;
  s.m_z = SpdOperator::identity(m);
  s.m_theta = SpdOperator::identity(n);
  s.partition = SetPartition::single("all", n);
  return s;
}

// U diag(values) V^T with random orthonormal U, V.
Matrix with_spectrum(Index m, Index n, const Vector& values, std::uint64_t key) {
  const Matrix u = testing::random_matrix(m, m, key).householderQr().householderQ();
  const Matrix v = testing::random_matrix(n, n, key + 1).householderQr().householderQ();
  Matrix s = Matrix::Zero(m, n);
  for (Index k = 0; k < values.size(); ++k) s(k, k) = values[k];
  return u * s * v.transpose();
}

// Logistic optimum and its derivatives s', s'' at theta_1 z.
struct LogisticAt {
  OptimalPoint opt;
  double s1 = 0.0;
  double s2 = 0.0;
};

LogisticAt logistic_at(const Vector& theta) {
  LogisticAt out;
  OptimizerConfig cfg;
  cfg.stationarity_tol = 1e-14;
  out.opt = solve_optimization(*problems::build_logistic_toy(), theta, Vector::Zero(1), cfg);
  const double s = LogisticToy::logistic(theta[0] * out.opt.point.z[0]);
  out.s1 = s * (1.0 - s);
  out.s2 = s * (1.0 - s) * (1.0 - 2.0 * s);
  return out;
}

// ---------------------------------------------------------------------------
// KKT operator
// ---------------------------------------------------------------------------

TEST(KktOperator, DiffusionMatchesHandAssembledBlocks) {
  const auto p = small_diffusion(0.01);
  const OptimalPoint opt = optimum_of(p);
  const Matrix k = p->stiffness(opt.point.theta).dense();
  const Matrix m = p->mass().dense();
  const Index n = 16;
  Matrix expected = Matrix::Zero(3 * n, 3 * n);
  expected.block(0, 0, n, n) = m;
  expected.block(0, 2 * n, n, n) = k.transpose();
  expected.block(n, n, n, n) = 0.01 * m;
  expected.block(n, 2 * n, n, n) = -m;
  expected.block(2 * n, 0, n, n) = k;
  expected.block(2 * n, n, n, n) = -m;
  const KktOperator kkt(p, opt.point);
  EXPECT_LE(rel(kkt.dense(), expected), 1e-12);
}

TEST(KktOperator, LogisticMatchesClosedForm) {
  const LogisticAt at = logistic_at(kHalfHalf);
  const Point& pt = at.opt.point;
  const double t1 = pt.theta[0];
  const double cz = -t1 * at.s1;
  const double lzz = 0.001 - pt.lambda[0] * t1 * t1 * at.s2;
  const Matrix expected{{2.0, 0.0, 1.0}, {0.0, lzz, cz}, {1.0, cz, 0.0}};
  const KktOperator kkt(problems::build_logistic_toy(), pt);
  EXPECT_LE(rel(kkt.dense(), expected), 1e-12);
}

TEST(KktOperator, ZeroRightHandSideGivesZero) {
  const auto p = small_diffusion();
  const KktOperator kkt(p, optimum_of(p).point);
  const auto [x, stats] = kkt.solve(Vector::Zero(kkt.dim()));
  EXPECT_EQ(x.norm(), 0.0);
  EXPECT_TRUE(stats.converged);
}

TEST(KktOperator, SelfAdjointOnAllProblems) {
  for (const auto& p : all_problems()) {
    const KktOperator kkt(p, optimum_of(p).point);
    for (std::uint64_t i = 0; i < 20; ++i) {
      const Vector v = random_vector(kkt.dim(), 100 + 2 * i);
      const Vector w = random_vector(kkt.dim(), 101 + 2 * i);
      const Vector kv = kkt.apply(v);
      const Vector kw = kkt.apply(w);
      EXPECT_LE(std::abs(kv.dot(w) - v.dot(kw)), 1e-10 * kv.norm() * w.norm()) << p->name();
    }
  }
}

TEST(KktOperator, SolveRoundTripForEveryMethod) {
  const auto p = small_diffusion();
  const Point pt = optimum_of(p).point;
  for (KktMethod method : {KktMethod::kAuto, KktMethod::kDense, KktMethod::kReduced}) {
    KktConfig cfg;
    cfg.method = method;
    const KktOperator kkt(p, pt, cfg);
    const Vector w = random_vector(kkt.dim(), 7);
    const auto [x, stats] = kkt.solve(kkt.apply(w));
    EXPECT_TRUE(stats.converged);
    EXPECT_LE(rel(x, w), 1e-8) << static_cast<int>(method);
  }
}

TEST(KktOperator, MinresForwardErrorWithinConditionBound) {
  // MINRES stops on the backward error, so the forward error is bounded by
  // cond(K) times the tolerance rather than by the tolerance itself.
  const auto p = small_diffusion();
  KktConfig cfg;
  cfg.method = KktMethod::kMinres;
  cfg.dense_fallback = false;
  const KktOperator kkt(p, optimum_of(p).point, cfg);
  const Vector sv = dense_svd(kkt.dense()).values;
  const double cond = sv[0] / sv[sv.size() - 1];
  const Vector w = random_vector(kkt.dim(), 7);
  const Vector b = kkt.apply(w);
  const auto [x, stats] = kkt.solve(b);
  EXPECT_TRUE(stats.converged);
  EXPECT_LE((b - kkt.apply(x)).norm(), cfg.tol * (kkt.norm_estimate() * x.norm() + b.norm()));
  EXPECT_LE(rel(x, w), 2.0 * cond * cfg.tol);
}

TEST(KktOperator, IterativeMatchesDense) {
  for (const auto& p : all_problems()) {
    const Point pt = optimum_of(p).point;
    KktConfig dense_cfg;
    dense_cfg.method = KktMethod::kDense;
    const KktOperator dense(p, pt, dense_cfg);
    const KktOperator reduced(p, pt);
    const Vector rhs = random_vector(dense.dim(), 8);
    EXPECT_LE(rel(reduced.solve(rhs).first, dense.solve(rhs).first), 1e-8) << p->name();
  }
}

TEST(KktOperator, TracksSolveTotals) {
  const auto p = small_diffusion();
  const KktOperator kkt(p, optimum_of(p).point);
  (void)kkt.solve(random_vector(kkt.dim(), 9));
  (void)kkt.solve(random_vector(kkt.dim(), 10));
  const KktTotals t = kkt.totals();
  EXPECT_EQ(t.solves, 2);
  EXPECT_LE(t.max_relative_residual, kkt.config().tol);
}

// ---------------------------------------------------------------------------
// Parameter Jacobian and sensitivity operator
// ---------------------------------------------------------------------------

TEST(ParamJacobian, AdjointPairing) {
  for (const auto& p : all_problems()) {
    const ParamJacobianOperator b(p, optimum_of(p).point);
    const Vector phi = random_vector(b.in_dim(), 11);
    const Vector w = random_vector(b.out_dim(), 12);
    const Vector bphi = b.apply(phi);
    const Vector btw = b.apply_adjoint(w);
    EXPECT_LE(std::abs(bphi.dot(w) - phi.dot(btw)), 1e-10 * bphi.norm() * w.norm()) << p->name();
  }
}

TEST(Sensitivity, LogisticMatchesFiniteDifferenceOfOptimum) {
  const LogisticAt at = logistic_at(kHalfHalf);
  const SensitivityOperator d(problems::build_logistic_toy(), at.opt.point);
  const double h = 1e-5;
  for (Index i = 0; i < 2; ++i) {
    const Vector e = Vector::Unit(2, i);
    const double fd = (logistic_at(kHalfHalf + h * e).opt.point.z[0] - logistic_at(kHalfHalf - h * e).opt.point.z[0]) /
                      (2.0 * h);
    EXPECT_LE(rel(d.apply(e)[0], fd), 1e-6) << "i = " << i;
  }
}

TEST(Sensitivity, LogisticColumnMagnitudes) {
  const LogisticAt at = logistic_at(kHalfHalf);
  const SensitivityOperator d(problems::build_logistic_toy(), at.opt.point);
  EXPECT_NEAR(std::abs(d.apply(Vector::Unit(2, 0))[0]), 9.98954, 1e-4);
  EXPECT_NEAR(std::abs(d.apply(Vector::Unit(2, 1))[0]), 3.11988, 1e-4);
}

TEST(Sensitivity, LogisticMatchesImplicitFunctionFormula) {
  // Eliminating u and lambda: dz/dtheta = -(L_zz_reduced)^{-1} (mixed terms).
  const LogisticAt at = logistic_at(kHalfHalf);
  const Point& pt = at.opt.point;
  const double t1 = pt.theta[0];
  const double z = pt.z[0];
  const Matrix k{{2.0, 0.0, 1.0},
                 {0.0, 0.001 - pt.lambda[0] * t1 * t1 * at.s2, -t1 * at.s1},
                 {1.0, -t1 * at.s1, 0.0}};
  // L_z theta_1 = -lambda (s' + theta_1 z s''); c_theta = (-z s', -1)
  const Matrix b{{0.0, 0.0}, {pt.lambda[0] * (at.s1 + t1 * z * at.s2), 0.0}, {z * at.s1, 1.0}};
  const Matrix sol = k.partialPivLu().solve(b);
  const SensitivityOperator d(problems::build_logistic_toy(), pt);
  for (Index i = 0; i < 2; ++i) EXPECT_LE(rel(d.apply(Vector::Unit(2, i))[0], sol(1, i)), 1e-10);
}

TEST(Sensitivity, ZeroDirectionGivesZero) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  EXPECT_EQ(d.apply(Vector::Zero(4)).norm(), 0.0);
  EXPECT_EQ(d.apply_adjoint(Vector::Zero(16)).norm(), 0.0);
}

TEST(Sensitivity, AdjointPairingOnAllProblems) {
  for (const auto& p : all_problems()) {
    const SensitivityOperator d(p, optimum_of(p).point);
    for (std::uint64_t i = 0; i < 5; ++i) {
      const Vector phi = random_vector(d.in_dim(), 20 + 2 * i);
      const Vector w = random_vector(d.out_dim(), 21 + 2 * i);
      const Vector dphi = d.apply(phi);
      const Vector dtw = d.apply_adjoint(w);
      EXPECT_LE(std::abs(dphi.dot(w) - phi.dot(dtw)), 1e-8 * dphi.norm() * w.norm()) << p->name();
    }
  }
}

TEST(Sensitivity, WeightedAdjointPairing) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const auto& s = p->spaces();
  const Vector phi = random_vector(4, 30);
  const Vector w = random_vector(16, 31);
  const double lhs = s.m_z.inner(d.apply(phi), w);
  const double rhs = s.m_theta.inner(phi, d.apply_weighted_adjoint(w));
  EXPECT_LE(rel(lhs, rhs), 1e-8);
}

// ---------------------------------------------------------------------------
// Directional sensitivity
// ---------------------------------------------------------------------------

TEST(DirectionalSensitivity, ScaleInvariant) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const Vector phi = random_vector(4, 40);
  const double base = directional_sensitivity(d, p->spaces(), phi);
  for (double c : {1e-3, 2.0, -7.5}) EXPECT_LE(rel(directional_sensitivity(d, p->spaces(), c * phi), base), 1e-12);
}

TEST(DirectionalSensitivity, LogisticFirstParameter) {
  const auto p = problems::build_logistic_toy();
  const SensitivityOperator d(p, logistic_at(kHalfHalf).opt.point);
  EXPECT_NEAR(directional_sensitivity(d, p->spaces(), Vector::Unit(2, 0)), 9.98954, 1e-4);
}

TEST(DirectionalSensitivity, RejectsZeroDirection) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  EXPECT_THROW((void)directional_sensitivity(d, p->spaces(), Vector::Zero(4)), std::invalid_argument);
}

TEST(DirectionalSensitivity, MatchesSingularValueExpansion) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const auto& s = p->spaces();
  const OracleResult oracle = dense_oracle(d, s);
  for (std::uint64_t key : {50u, 51u, 52u}) {
    Vector phi = random_vector(4, key);
    phi /= s.m_theta.norm(phi);
    double sum = 0.0;
    for (const auto& t : oracle.triples) sum += t.sigma * t.sigma * std::pow(s.m_theta.inner(t.theta_vec, phi), 2);
    EXPECT_LE(rel(directional_sensitivity(d, s, phi), std::sqrt(sum)), 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Pencil and randomized solver
// ---------------------------------------------------------------------------

TEST(PencilA, ZeroGivesZero) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  EXPECT_EQ(apply_pencil_a(d, p->spaces(), Vector::Zero(20)).norm(), 0.0);
}

TEST(PencilA, MatchesAssembledBlocks) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const auto& s = p->spaces();
  const Matrix dm = assemble_sensitivity(d);
  const Matrix mz = s.m_z.dense();
  Matrix a = Matrix::Zero(20, 20);
  a.block(0, 16, 16, 4) = mz * dm;
  a.block(16, 0, 4, 16) = dm.transpose() * mz;
  for (std::uint64_t key : {60u, 61u}) {
    const Vector v = random_vector(20, key);
    EXPECT_LE(rel(apply_pencil_a(d, s, v), a * v), 1e-8);
  }
  EXPECT_LE(rel(Matrix(a), Matrix(a.transpose())), 1e-8);
}

TEST(PencilA, SelfAdjoint) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const Vector v = random_vector(20, 62);
  const Vector w = random_vector(20, 63);
  const Vector av = apply_pencil_a(d, p->spaces(), v);
  const Vector aw = apply_pencil_a(d, p->spaces(), w);
  EXPECT_LE(std::abs(av.dot(w) - v.dot(aw)), 1e-8 * av.norm() * w.norm());
}

TEST(RandomizedGenEig, DiffusionMatchesDenseOracle) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const auto& s = p->spaces();
  const OracleResult oracle = dense_oracle(d, s);
  RandEigConfig cfg;
  cfg.k_pairs = 4;
  cfg.oversampling = 8;
  const GenEigResult r = randomized_geneig(d, s, cfg);
  ASSERT_EQ(r.triples.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LE(rel(r.triples[k].sigma, oracle.triples[k].sigma), 1e-8);
    EXPECT_LE(rel(r.triples[k].theta_vec, oracle.triples[k].theta_vec), 1e-6);
    EXPECT_LE(rel(r.triples[k].z_vec, oracle.triples[k].z_vec), 1e-6);
  }
}

TEST(RandomizedGenEig, UsesTwoKPlusLProbes) {
  Vector values(12);
  for (Index k = 0; k < 12; ++k) values[k] = std::pow(10.0, -static_cast<double>(k));
  const MatrixSensitivity d(with_spectrum(30, 20, values, 70));
  RandEigConfig cfg;
  cfg.k_pairs = 4;
  cfg.oversampling = 8;
  const GenEigResult r = randomized_geneig(d, identity_spaces(30, 20), cfg);
  EXPECT_EQ(r.basis_size, 16);
  ASSERT_EQ(r.triples.size(), 4u);
  for (Index k = 0; k < 4; ++k) EXPECT_LE(rel(r.triples[static_cast<std::size_t>(k)].sigma, values[k]), 1e-6);
}

TEST(RandomizedGenEig, ParameterIndependentOptimumHasNoSensitivity) {
  const MatrixSensitivity d(Matrix::Zero(16, 4));
  RandEigConfig cfg;
  cfg.k_pairs = 4;
  cfg.oversampling = 8;
  const GenEigResult r = randomized_geneig(d, identity_spaces(16, 4), cfg);
  EXPECT_TRUE(r.rank_deficient);
  EXPECT_TRUE(r.triples.empty());
  const Vector s = local_indices(r.triples, SpdOperator::identity(4));
  EXPECT_LE(s.maxCoeff(), 1e-12);
}

TEST(RandomizedGenEig, FlagsRankDeficiency) {
  const MatrixSensitivity d(with_spectrum(10, 6, Vector{{3.0, 1.0}}, 71));
  RandEigConfig cfg;
  cfg.k_pairs = 4;
  cfg.oversampling = 2;
  const GenEigResult r = randomized_geneig(d, identity_spaces(10, 6), cfg);
  EXPECT_TRUE(r.rank_deficient);
  ASSERT_EQ(r.triples.size(), 2u);
  EXPECT_NEAR(r.triples[0].sigma, 3.0, 1e-10);
  EXPECT_NEAR(r.triples[1].sigma, 1.0, 1e-10);
}

TEST(RandomizedGenEig, RejectsTooManyProbes) {
  const MatrixSensitivity d(Matrix::Identity(3, 2));
  RandEigConfig cfg;
  cfg.k_pairs = 2;
  cfg.oversampling = 2;
  EXPECT_THROW((void)randomized_geneig(d, identity_spaces(3, 2), cfg), std::invalid_argument);
}

TEST(RandomizedGenEig, DeterministicForFixedSeed) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  RandEigConfig cfg;
  cfg.k_pairs = 2;
  cfg.oversampling = 4;
  const GenEigResult a = randomized_geneig(d, p->spaces(), cfg, 3);
  const GenEigResult b = randomized_geneig(d, p->spaces(), cfg, 3, 4);
  ASSERT_EQ(a.triples.size(), b.triples.size());
  for (std::size_t k = 0; k < a.triples.size(); ++k) {
    EXPECT_EQ(a.triples[k].sigma, b.triples[k].sigma);
    EXPECT_EQ(a.triples[k].theta_vec, b.triples[k].theta_vec);
  }
}

// ---------------------------------------------------------------------------
// Indices
// ---------------------------------------------------------------------------

TEST(LocalIndices, RankOneExample) {
  const std::vector<SingularTriple> t{{2.0, Vector{{0.6, 0.8}}, Vector::Ones(1)}};
  const Vector s = local_indices(t, SpdOperator::identity(2));
  EXPECT_NEAR(s[0], 1.2, 1e-15);
  EXPECT_NEAR(s[1], 1.6, 1e-15);
}

TEST(LocalIndices, LogisticValues) {
  const auto p = problems::build_logistic_toy();
  const SensitivityOperator d(p, logistic_at(kHalfHalf).opt.point);
  RandEigConfig cfg;
  cfg.k_pairs = 1;
  cfg.oversampling = 1;
  const GenEigResult r = randomized_geneig(d, p->spaces(), cfg);
  const Vector s = local_indices(r.triples, p->spaces().m_theta);
  EXPECT_NEAR(s[0], 9.98954, 1e-4);
  EXPECT_NEAR(s[1], 3.11988, 1e-4);
}

TEST(LocalIndices, ParsevalWithIdentityWeights) {
  const Matrix dm = testing::random_matrix(7, 5, 80);
  const WeightedSpaces s = identity_spaces(7, 5);
  const Vector idx = local_indices(weighted_svd(dm, s), s.m_theta);
  for (Index i = 0; i < 5; ++i) EXPECT_LE(rel(idx[i], dm.col(i).norm()), 1e-10);
  EXPECT_LE(rel(idx.squaredNorm(), dm.squaredNorm()), 1e-10);
}

TEST(SetIndices, SingleSetIsLeadingSingularValue) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const OracleResult oracle = dense_oracle(d, p->spaces());
  const std::vector<double> sets = set_indices(oracle.triples, p->spaces());
  ASSERT_EQ(sets.size(), 1u);
  EXPECT_LE(rel(sets[0], oracle.triples[0].sigma), 1e-10);
}

TEST(SetIndices, HalfMassInEachSet) {
  WeightedSpaces s = identity_spaces(1, 2);
  s.partition = {{{"a", 0, 1}, {"b", 1, 2}}};
  const std::vector<SingularTriple> t{{1.0, Vector{{1.0, 1.0}} / std::sqrt(2.0), Vector::Ones(1)}};
  const std::vector<double> sets = set_indices(t, s);
  EXPECT_NEAR(sets[0], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(sets[1], std::sqrt(0.5), 1e-15);
}

TEST(SetIndices, DirectMatchesRestrictedOracle) {
  const Matrix dm = testing::random_matrix(6, 4, 81);
  WeightedSpaces s = identity_spaces(6, 4);
  s.partition = {{{"a", 0, 1}, {"b", 1, 4}}};
  RandEigConfig cfg;
  cfg.k_pairs = 3;
  cfg.oversampling = 2;
  const std::vector<double> sets = set_indices_direct(MatrixSensitivity(dm), s, cfg);
  EXPECT_LE(rel(sets[0], dm.col(0).norm()), 1e-10);
  EXPECT_LE(rel(sets[1], dense_svd(dm.rightCols(3)).values[0]), 1e-10);
}

TEST(SetIndices, RefusesCoupledWeighting) {
  WeightedSpaces s;
  s.m_z = SpdOperator::identity(1);
  s.m_theta = SpdOperator::from_matrix(Matrix{{2.0, 0.5}, {0.5, 2.0}});
  s.partition = {{{"a", 0, 1}, {"b", 1, 2}}};
  const std::vector<SingularTriple> t{{1.0, Vector{{1.0, 0.0}}, Vector::Ones(1)}};
  EXPECT_THROW((void)set_indices(t, s), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Dense oracle and alternative formulation
// ---------------------------------------------------------------------------

TEST(DenseOracle, IdentityWeightsReduceToSvd) {
  const Matrix dm = testing::random_matrix(6, 4, 90);
  const OracleResult r = dense_oracle(MatrixSensitivity(dm), identity_spaces(6, 4));
  const Svd svd = dense_svd(dm);
  ASSERT_EQ(r.triples.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LE(rel(r.triples[k].sigma, svd.values[static_cast<Index>(k)]), 1e-12);
    EXPECT_LE(rel(Vector(dm * r.triples[k].theta_vec), Vector(r.triples[k].sigma * r.triples[k].z_vec)), 1e-12);
  }
}

TEST(DenseOracle, WeightedTriplesSatisfyDefinition) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const auto& s = p->spaces();
  const OracleResult r = dense_oracle(d, s);
  for (const auto& t : r.triples) {
    EXPECT_LE(rel(Vector(r.d * t.theta_vec), Vector(t.sigma * t.z_vec)), 1e-8);
    EXPECT_LE(rel(s.m_theta.solve(r.d.transpose() * s.m_z.apply(t.z_vec)), t.sigma * t.theta_vec), 1e-8);
  }
}

TEST(DenseOracle, RefusesLargeOperators) {
  const MatrixSensitivity d(Matrix::Zero(kDenseThreshold, 1));
  EXPECT_THROW((void)dense_oracle(d, identity_spaces(kDenseThreshold, 1)), DimensionError);
}

TEST(AlternativeFormulation, EigenvaluesAreSquaredSingularValues) {
  const auto p = small_diffusion();
  const SensitivityOperator d(p, optimum_of(p).point);
  const OracleResult oracle = dense_oracle(d, p->spaces());
  RandEigConfig cfg;
  cfg.k_pairs = 4;
  cfg.oversampling = 0;
  const AlternativeResult alt = alternative_formulation(d, p->spaces(), cfg);
  ASSERT_EQ(alt.triples.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    const double sigma = oracle.triples[k].sigma;
    EXPECT_LE(rel(alt.alphas[static_cast<Index>(k)], sigma * sigma), 1e-8);
    EXPECT_LE(rel(alt.triples[k].z_vec, oracle.triples[k].z_vec), 1e-6);
  }
}

TEST(AlternativeFormulation, RankOneOperator) {
  const Matrix dm = Vector{{1.0, 2.0, 2.0}} * Vector{{0.0, 3.0}}.transpose();
  RandEigConfig cfg;
  cfg.k_pairs = 2;
  cfg.oversampling = 0;
  const AlternativeResult alt = alternative_formulation(MatrixSensitivity(dm), identity_spaces(3, 2), cfg);
  EXPECT_TRUE(alt.rank_deficient);
  ASSERT_EQ(alt.triples.size(), 1u);
  EXPECT_NEAR(alt.triples[0].sigma, 9.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Traditional comparison
// ---------------------------------------------------------------------------

TEST(TraditionalComparison, LogisticValues) {
  const auto p = problems::build_logistic_toy();
  const Vector g = traditional_comparison(*p, logistic_at(kHalfHalf).opt);
  EXPECT_NEAR(g[0], 0.135, 5e-4);
  EXPECT_NEAR(g[1], 1.03, 5e-3);
}

TEST(TraditionalComparison, MatchesFiniteDifferenceAtFixedControl) {
  const auto p = problems::build_logistic_toy();
  const OptimalPoint opt = logistic_at(kHalfHalf).opt;
  const double z = opt.point.z[0];
  auto g = [z](const Vector& theta) {
    const double u = LogisticToy::logistic(theta[0] * z) + theta[1];
    return (u - 2.0) * (u - 2.0) + 0.0005 * z * z;
  };
  const Vector tc = traditional_comparison(*p, opt);
  const double h = 1e-6;
  for (Index i = 0; i < 2; ++i) {
    const Vector e = Vector::Unit(2, i);
    const double fd = (g(kHalfHalf + h * e) - g(kHalfHalf - h * e)) / (2.0 * h);
    EXPECT_LE(rel(tc[i], std::abs(fd)), 1e-6);
  }
}

}  // namespace
}  // namespace hdsa
