#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"

namespace hdsa {
namespace {

using problems::AdvDiffConfig;
using problems::DiffusionControlConfig;
using testing::random_vector;
using testing::rel;

Point random_point(const ProblemDefinition& p, std::uint64_t key, double theta_scale = 0.5) {
  const ProblemDims d = p.dims();
  return {random_vector(d.n_u, key), random_vector(d.n_z, key + 1), random_vector(d.n_lambda, key + 2),
          theta_scale * random_vector(d.n_theta, key + 3).cwiseMax(-1.0).cwiseMin(1.0)};
}

std::vector<ProblemPtr> all_problems() {
  AdvDiffConfig small;
  small.n_nodes = 17;
  small.n_steps = 10;
  return {problems::build_logistic_toy(), problems::build_diffusion_control_1d(),
          problems::build_advdiff_inversion_1d(small)};
}

// ---------------------------------------------------------------------------
// Logistic toy
// ---------------------------------------------------------------------------

TEST(LogisticToy, ShapeAndWeights) {
  const auto p = problems::build_logistic_toy();
  const ProblemDims d = p->dims();
  EXPECT_EQ(d.n_u, 1);
  EXPECT_EQ(d.n_z, 1);
  EXPECT_EQ(d.n_theta, 2);
  EXPECT_EQ(d.n_lambda, 1);
  EXPECT_TRUE(p->spaces().m_theta.is_identity());
  EXPECT_TRUE(p->spaces().m_z.is_identity());
}

TEST(LogisticToy, ResidualVanishesAtLogisticOfZero) {
  const auto p = problems::build_logistic_toy();
  for (double t1 : {-3.0, 0.0, 0.5, 7.0}) {
    const double t2 = 0.25;
    const Point pt{Vector::Constant(1, 0.5 + t2), Vector::Zero(1), Vector::Zero(1), Vector{{t1, t2}}};
    EXPECT_EQ(p->residual(pt)[0], 0.0);
  }
}

TEST(LogisticToy, ObjectiveZeroAtTarget) {
  const auto p = problems::build_logistic_toy();
  const Point pt{Vector::Constant(1, 2.0), Vector::Zero(1), Vector::Zero(1), Vector{{0.5, 0.5}}};
  EXPECT_EQ(p->objective(pt), 0.0);
}

TEST(LogisticToy, DerivativeCheckPasses) {
  const auto p = problems::build_logistic_toy();
  const Point pt{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0), Vector::Constant(1, 0.3), Vector{{0.5, 0.5}}};
  const DerivativeReport r = check_derivatives(*p, pt, 1e-4);
  for (const auto& c : r.checks) EXPECT_TRUE(c.passed) << c.block << " error " << c.error;
  EXPECT_TRUE(r.passed());
}

// ---------------------------------------------------------------------------
// Diffusion control
// ---------------------------------------------------------------------------

TEST(DiffusionControl, ZeroForcingGivesZeroState) {
  const auto p = problems::build_diffusion_control_1d();
  const ProblemDims d = p->dims();
  const Vector theta = Vector::Zero(d.n_theta);
  const Vector u = solve_forward(*p, Vector::Zero(d.n_z), theta, Vector::Zero(d.n_u));
  EXPECT_EQ(u.norm(), 0.0);
}

TEST(DiffusionControl, LinearityGammaZeroOptimalControl) {
  // With gamma = 0 the state matches the target, so z = M^{-1} A(theta) d.
  DiffusionControlConfig cfg;
  cfg.gamma = 0.0;
  const auto p = problems::build_diffusion_control_1d(cfg);
  const auto& dc = dynamic_cast<const problems::DiffusionControl1D&>(*p);
  const ProblemDims d = p->dims();
  OptimizerConfig oc;
  oc.stationarity_tol = 1e-15;
  for (std::uint64_t j = 0; j < 2; ++j) {
    const Vector theta = 0.8 * random_vector(d.n_theta, 40 + j).cwiseMax(-1.0).cwiseMin(1.0);
    const OptimalPoint opt = testing::optimum(p, theta, oc);
    const Vector expected = dc.mass().solve(dc.stiffness(theta).apply(dc.target()));
    EXPECT_LT(rel(opt.point.z, expected), 1e-8);
    EXPECT_LT(rel(opt.point.u, dc.target()), 1e-10);
  }
}

TEST(DiffusionControl, ManufacturedSolutionConvergesSecondOrder) {
  // -(u')' = sin(pi x) has u = sin(pi x) / pi^2.
  auto error_for = [](Index n_nodes) {
    DiffusionControlConfig cfg;
    cfg.n_nodes = n_nodes;
    cfg.amplitude = 0.0;
    const auto p = problems::build_diffusion_control_1d(cfg);
    const auto& dc = dynamic_cast<const problems::DiffusionControl1D&>(*p);
    const fem1d::AnalyticProfile sine{fem1d::AnalyticProfile::Kind::kSine, 1.0, 0.0, 1.0, 1.0};
    const Vector z = fem1d::interpolate(dc.grid(), sine);
    const Vector u = solve_forward(*p, z, Vector::Zero(cfg.n_params), Vector::Zero(n_nodes));
    double err = 0.0;
    for (Index i = 0; i < n_nodes; ++i) {
      const double x = dc.grid().dof_x(i);
      err = std::max(err, std::abs(u[i] - std::sin(std::numbers::pi * x) / (std::numbers::pi * std::numbers::pi)));
    }
    return err;
  };
  const double e1 = error_for(31);
  const double e2 = error_for(63);
  const double e3 = error_for(127);
  EXPECT_LT(e1, 1e-3);
  EXPECT_NEAR(e1 / e2, 4.0, 0.3);
  EXPECT_NEAR(e2 / e3, 4.0, 0.3);
}

TEST(DiffusionControl, RejectsNonPositiveKappa) {
  const auto p = problems::build_diffusion_control_1d();
  const auto& dc = dynamic_cast<const problems::DiffusionControl1D&>(*p);
  EXPECT_THROW((void)dc.element_kappa(Vector::Constant(16, -10.0)), std::domain_error);
  EXPECT_NO_THROW((void)dc.element_kappa(Vector::Constant(16, 1.0)));
}

TEST(DiffusionControl, ControlHessianIsScaledMass) {
  DiffusionControlConfig cfg;
  cfg.gamma = 0.37;
  const auto p = problems::build_diffusion_control_1d(cfg);
  const Point pt = random_point(*p, 50);
  const Vector v = random_vector(p->dims().n_z, 55);
  EXPECT_EQ(p->hess_zz(pt, v), 0.37 * p->spaces().m_z.apply(v));
}

TEST(DiffusionControl, DerivativeCheckPasses) {
  const auto p = problems::build_diffusion_control_1d();
  EXPECT_TRUE(check_derivatives(*p, random_point(*p, 60)).passed());
}

// ---------------------------------------------------------------------------
// Advection-diffusion inversion
// ---------------------------------------------------------------------------

TEST(AdvDiff, ZeroSourceGivesZeroObservations) {
  const auto p = problems::build_advdiff_inversion_1d();
  const auto& ad = dynamic_cast<const problems::AdvDiffInversion1D&>(*p);
  const ProblemDims d = p->dims();
  const Vector theta = Vector::Zero(d.n_theta);
  const Vector u = solve_forward(*p, Vector::Zero(d.n_z), theta, Vector::Zero(d.n_u));
  EXPECT_EQ(ad.discretization().observe(u).norm(), 0.0);
  const Point pt{u, Vector::Zero(d.n_z), Vector::Zero(d.n_lambda), theta};
  EXPECT_NEAR(p->objective(pt), 0.5 * ad.data().squaredNorm(), 1e-14 * ad.data().squaredNorm());
}

TEST(AdvDiff, InverseCrimeRecoversSource) {
  AdvDiffConfig cfg;
  cfg.noise_level = 0.0;
  cfg.data_refinement = 1;
  cfg.alpha = 1e-8;
  const auto p = problems::build_advdiff_inversion_1d(cfg);
  const auto& ad = dynamic_cast<const problems::AdvDiffInversion1D&>(*p);
  OptimizerConfig oc;
  oc.enforce_sosc = false;
  const OptimalPoint opt = testing::optimum(p, Vector::Zero(p->dims().n_theta), oc);
  const Vector truth = ad.true_source();
  const SpdOperator& m = p->spaces().m_z;
  EXPECT_LE(m.norm(opt.point.z - truth), 0.05 * m.norm(truth));
}

TEST(AdvDiff, NoisyReconstructionLocalizesPeak) {
  const auto p = problems::build_advdiff_inversion_1d();
  const auto& ad = dynamic_cast<const problems::AdvDiffInversion1D&>(*p);
  const OptimalPoint opt = testing::optimum(p, Vector::Zero(p->dims().n_theta));
  Index peak = 0;
  Index true_peak = 0;
  opt.point.z.maxCoeff(&peak);
  ad.true_source().maxCoeff(&true_peak);
  EXPECT_LE(std::abs(peak - true_peak), 2);
}

TEST(AdvDiff, RejectsBadSensorsAndDiffusion) {
  AdvDiffConfig cfg;
  cfg.sensors = {0.5, 1.5};
  EXPECT_THROW((void)problems::build_advdiff_inversion_1d(cfg), std::invalid_argument);
  cfg.sensors = {};
  cfg.diffusion_bar = 0.0;
  EXPECT_THROW((void)problems::build_advdiff_inversion_1d(cfg), std::invalid_argument);
  const auto p = problems::build_advdiff_inversion_1d();
  const auto& ad = dynamic_cast<const problems::AdvDiffInversion1D&>(*p);
  Vector theta = Vector::Zero(p->dims().n_theta);
  theta[ad.discretization().diffusion_index()] = -10.0;
  EXPECT_THROW((void)ad.discretization().step_matrix(theta), std::domain_error);
}

TEST(AdvDiff, SyntheticDataIsReproducible) {
  const auto a = problems::build_advdiff_inversion_1d();
  const auto b = problems::build_advdiff_inversion_1d();
  const Matrix& da = dynamic_cast<const problems::AdvDiffInversion1D&>(*a).data();
  const Matrix& db = dynamic_cast<const problems::AdvDiffInversion1D&>(*b).data();
  EXPECT_EQ(da, db);
  AdvDiffConfig other;
  other.noise_seed = 12;
  EXPECT_NE(dynamic_cast<const problems::AdvDiffInversion1D&>(*problems::build_advdiff_inversion_1d(other)).data(), da);
}

TEST(AdvDiff, BlockDiagonalParameterWeighting) {
  const auto p = problems::build_advdiff_inversion_1d();
  EXPECT_NO_THROW(require_block_orthogonal(p->spaces().m_theta, p->spaces().partition));
  EXPECT_EQ(p->spaces().partition.sets.size(), 3u);
}

TEST(AdvDiff, DerivativeCheckPasses) {
  AdvDiffConfig cfg;
  cfg.n_nodes = 17;
  cfg.n_steps = 10;
  const auto p = problems::build_advdiff_inversion_1d(cfg);
  EXPECT_TRUE(check_derivatives(*p, random_point(*p, 70)).passed());
}

// ---------------------------------------------------------------------------
// Properties shared by every instance
// ---------------------------------------------------------------------------

TEST(AllProblems, AdjointAndSymmetryPairings) {
  for (const auto& p : all_problems()) {
    const Point pt = random_point(*p, 80);
    const DerivativeReport r = check_derivatives(*p, pt);
    for (const auto& c : r.checks) {
      if (c.block.find("adjoint") != std::string::npos || c.block.find("symmetry") != std::string::npos) {
        EXPECT_LE(c.error, 1e-10) << p->name() << ' ' << c.block;
      }
    }
  }
}

TEST(AllProblems, StateSolveRoundTrip) {
  for (const auto& p : all_problems()) {
    const Point pt = random_point(*p, 90);
    const Vector rhs = random_vector(p->dims().n_lambda, 95);
    EXPECT_LE(rel(p->jac_u(pt, p->state_jacobian_solve(pt, rhs)), rhs), 1e-10) << p->name();
    EXPECT_LE(rel(p->jac_u_adjoint(pt, p->state_jacobian_adjoint_solve(pt, rhs)), rhs), 1e-10) << p->name();
  }
}

TEST(AllProblems, SquareConstraints) {
  for (const auto& p : all_problems()) EXPECT_EQ(p->dims().n_lambda, p->dims().n_u) << p->name();
}

TEST(DerivativeCheck, CatchesCorruptedHessian) {
  const auto p = std::make_shared<const problems::CorruptedHessianProblem>(problems::build_logistic_toy());
  const Point pt{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0), Vector::Constant(1, 0.3), Vector{{0.5, 0.5}}};
  const DerivativeReport r = check_derivatives(*p, pt);
  EXPECT_FALSE(r.passed());
  for (const auto& c : r.checks) {
    if (c.block == "L_zz") EXPECT_FALSE(c.passed);
  }
}

TEST(DerivativeCheck, RejectsStepOutsideRange) {
  const auto p = problems::build_logistic_toy();
  EXPECT_THROW((void)check_derivatives(*p, zero_point(p->dims()), 1.0), std::invalid_argument);
}

TEST(SetPartition, ValidatesCoverage) {
  SetPartition ok{{{"a", 0, 2}, {"b", 2, 5}}};
  EXPECT_NO_THROW(ok.validate(5));
  SetPartition gap{{{"a", 0, 2}, {"b", 3, 5}}};
  EXPECT_THROW(gap.validate(5), std::invalid_argument);
  SetPartition overlap{{{"a", 0, 3}, {"b", 2, 5}}};
  EXPECT_THROW(overlap.validate(5), std::invalid_argument);
}

}  // namespace
}  // namespace hdsa
