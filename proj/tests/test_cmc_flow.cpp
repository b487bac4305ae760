#include "flatcmc/cmc_flow.hpp"
#include "flatcmc/csv.hpp"
#include "flatcmc/errors.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace flatcmc {
namespace {

using testing::max_abs;
using testing::Random;

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

TEST(FlatResidual, ExactSlicesVanish) {
  for (int n = 2; n <= 4; ++n) {
    const FlowProblem cone = cone_problem(ConeModel{n, 1.0}, -2.0 * n);
    const FlatResidual rc = flat_constraint_residual(cone.geometry, cone.state);
    EXPECT_LT(rc.gauss, 1e-12);
    EXPECT_LT(rc.codazzi, 1e-12);
    const FlowProblem kas = kasner_problem(KasnerModel{n, 1.0, 1.0}, -0.7);
    const FlatResidual rk = flat_constraint_residual(kas.geometry, kas.state);
    EXPECT_LT(rk.gauss, 1e-12);
    EXPECT_LT(rk.codazzi, 1e-12);
  }
}

TEST(FlatResidual, ScaledConeCurvatureIsDetected) {
  FlowProblem cone = cone_problem(ConeModel{3, 1.0}, -3.0);
  cone.state.k_blocks[0] *= 1.1;
  EXPECT_GT(flat_constraint_residual(cone.geometry, cone.state).gauss, 0.1);
}

// Hyperbolic block of dimension d and scale A has mixed Ricci -(d-1)/A; flat blocks 0.
struct BlockOracle {
  double ricci_scalar = 0.0;
  double k2 = 0.0;
  double tr = 0.0;
  double gauss = 0.0;
};

BlockOracle oracle(const BlockGeometry& geo, const FlowState& s) {
  BlockOracle o;
  std::vector<double> kappa, ric;
  for (std::size_t i = 0; i < geo.blocks.size(); ++i) {
    const double a = s.g_blocks[i](0);
    const int d = geo.blocks[i].dim;
    kappa.push_back(s.k_blocks[i](0) / a);
    ric.push_back(geo.blocks[i].curvature == BlockCurvature::Hyperbolic ? -(d - 1.0) / a : 0.0);
    o.ricci_scalar += d * ric.back();
    o.k2 += d * kappa.back() * kappa.back();
    o.tr += d * kappa.back();
  }
  for (std::size_t i = 0; i < kappa.size(); ++i) {
    o.gauss = std::max(o.gauss, std::abs(ric[i] - kappa[i] * kappa[i] + o.tr * kappa[i]));
  }
  return o;
}

TEST(VacuumResidual, ExactSlicesVanish) {
  for (int n = 2; n <= 4; ++n) {
    const FlowProblem cone = cone_problem(ConeModel{n, 2.0}, -1.5);
    const VacuumResidual vc = vacuum_constraint_residual(cone.geometry, cone.state);
    EXPECT_LT(vc.scalar, 1e-12);
    EXPECT_LT(vc.momentum, 1e-12);
    const FlowProblem kas = kasner_problem(KasnerModel{n, 1.0, 1.0}, -1.5);
    const VacuumResidual vk = vacuum_constraint_residual(kas.geometry, kas.state);
    EXPECT_LT(vk.scalar, 1e-12);
    EXPECT_LT(vk.momentum, 1e-12);
  }
}

TEST(VacuumResidual, RandomBlockDataMatchesDirectFormula) {
  Random rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    BlockGeometry geo;
    geo.blocks = {{2, BlockCurvature::Hyperbolic}, {1, BlockCurvature::Flat}};
    FlowState s;
    s.g_blocks = {Eigen::VectorXd::Constant(1, rng.uniform(0.5, 3.0)), Eigen::VectorXd::Constant(1, rng.uniform(0.5, 3.0))};
    s.k_blocks = {Eigen::VectorXd::Constant(1, rng.uniform(-2.0, -0.1)), Eigen::VectorXd::Constant(1, rng.uniform(-1.0, 1.0))};
    s.tau = trace_k(geo, s)(0);
    const BlockOracle o = oracle(geo, s);
    const VacuumResidual v = vacuum_constraint_residual(geo, s);
    const double expected = std::abs(o.ricci_scalar - o.k2 + o.tr * o.tr);
    EXPECT_NEAR(v.scalar, expected, 1e-12 * std::max(1.0, expected));
    EXPECT_GT(v.scalar, 0.0);
    EXPECT_EQ(v.momentum, 0.0);
    EXPECT_NEAR(flat_constraint_residual(geo, s).gauss, o.gauss, 1e-12 * std::max(1.0, o.gauss));
  }
}

TEST(Lapse, HomogeneousModelValues) {
  for (int n = 2; n <= 4; ++n) {
    const double tau = -1.7;
    const FlowProblem cone = cone_problem(ConeModel{n, 1.0}, tau);
    EXPECT_NEAR(cone.state.lapse(0), n / (tau * tau), 1e-15);
    const FlowProblem kas = kasner_problem(KasnerModel{n, 1.0, 1.0}, tau);
    EXPECT_NEAR(kas.state.lapse(0), (n - 1) / (tau * tau), 1e-15);
    EXPECT_LT(lapse_equation_residual(kas.geometry, kas.state), 1e-14);
  }
}

TEST(Lapse, ConstantGridMatchesHomogeneous) {
  const FlowProblem hom = kasner_problem(KasnerModel{3, 1.0, 2.0}, -0.9);
  const FlowProblem grid = kasner_problem(KasnerModel{3, 1.0, 2.0}, -0.9, 64);
  ASSERT_EQ(grid.state.lapse.size(), 64);
  EXPECT_LT(max_abs(grid.state.lapse.array() - hom.state.lapse(0)), 1e-12 * hom.state.lapse(0));
}

TEST(Lapse, VaryingCurvatureMatchesDenseSolve) {
  // Hyperbolic scale held constant, so the Laplacian is the plain periodic
  // second difference; the oracle is a dense LU solve.
  const int m = 48;
  FlowProblem p = kasner_problem(KasnerModel{3, 1.0, 2.0}, -1.0, m);
  const double h = p.geometry.spacing();
  for (int k = 0; k < m; ++k) p.state.k_blocks[0](k) *= 1.0 + 0.3 * std::sin(2.0 * M_PI * k / m);
  const Eigen::VectorXd k2 = k_norm_sq(p.geometry, p.state);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < m; ++k) {
    a(k, k) = 2.0 / (h * h) + k2(k);
    a(k, (k + 1) % m) -= 1.0 / (h * h);
    a(k, (k + m - 1) % m) -= 1.0 / (h * h);
  }
  const Eigen::VectorXd expected = a.partialPivLu().solve(Eigen::VectorXd::Ones(m));
  const Eigen::VectorXd got = solve_lapse(p.geometry, p.state);
  EXPECT_LT(max_abs(got - expected) / max_abs(expected), 1e-12);
  p.state.lapse = got;
  EXPECT_LT(lapse_backward_error(p.geometry, p.state), 1e-14);
  EXPECT_LT(lapse_equation_residual(p.geometry, p.state), 1e-10);
}

TEST(Lapse, DegenerateCurvatureThrows) {
  FlowProblem p = kasner_problem(KasnerModel{3, 1.0, 1.0}, -1.0);
  p.state.k_blocks[0].setZero();
  EXPECT_THROW(solve_lapse(p.geometry, p.state), DegenerateLapseError);
}

TEST(FlowStep, ConeStaysUmbilicForAnyStep) {
  for (int n = 2; n <= 4; ++n) {
    const FlowProblem p = cone_problem(ConeModel{n, 1.0}, -3.0);
    for (double dtau : {0.01, 0.3, 1.5}) {
      const FlowState next = flow_step(p.geometry, p.state, dtau);
      EXPECT_LT(n_khat2_integral(p.geometry, next), 1e-12);
    }
  }
}

TEST(FlowStep, ConeMatchesExactSlice) {
  for (int n = 2; n <= 4; ++n) {
    const ConeModel m{n, 1.0};
    const FlowProblem p = cone_problem(m, -3.0);
    // One RK4 step: local error below 1e-10 for this step size.
    const FlowState next = flow_step(p.geometry, p.state, 0.01);
    const FlowProblem exact = cone_problem(m, -2.99);
    EXPECT_LT(rel(next.g_blocks[0](0), exact.state.g_blocks[0](0)), 1e-10);
    EXPECT_LT(rel(next.k_blocks[0](0), exact.state.k_blocks[0](0)), 1e-10);
    // Larger steps go through the gauge check, which halves until the drift is below 1e-9.
    for (double dtau : {0.3, 1.5}) {
      const FlowRun run = run_flow(p.geometry, p.state, -3.0 + dtau, 1);
      const FlowProblem target = cone_problem(m, -3.0 + dtau);
      EXPECT_LT(rel(run.final_state.g_blocks[0](0), target.state.g_blocks[0](0)), 2e-9);
      EXPECT_LE(std::abs(trace_k(p.geometry, run.final_state)(0) - (-3.0 + dtau)), 1e-9 + 1e-14);
      EXPECT_GE(run.trace.retried_steps, 1);
    }
  }
}

TEST(FlowStep, KasnerRadiusAfterThousandSteps) {
  const KasnerModel m{3, 1.0, 1.0};
  const FlowProblem p = kasner_problem(m, -2.0);
  const FlowRun run = run_flow(p.geometry, p.state, -0.5, 1000);
  const double rho = -(m.dim - 1) / -0.5;
  EXPECT_LT(std::abs(std::sqrt(run.final_state.g_blocks[0](0)) - rho), 1e-8);
}

double kasner_global_error(int steps) {
  const KasnerModel m{3, 1.0, 1.0};
  const FlowProblem p = kasner_problem(m, -2.0);
  // Without the gauge retry, so the step size is exactly the one requested.
  FlowOptions opts;
  opts.retry_on_drift = false;
  const FlowRun run = run_flow(p.geometry, p.state, -0.5, steps, opts);
  return std::abs(run.final_state.g_blocks[0](0) - 16.0);
}

TEST(FlowStep, FourthOrderUnderStepHalving) {
  const double e1 = kasner_global_error(10), e2 = kasner_global_error(20), e3 = kasner_global_error(40);
  EXPECT_NEAR(e1 / e2, 16.0, 4.0);
  EXPECT_NEAR(e2 / e3, 16.0, 4.0);
}

TEST(RunFlow, ZeroLengthRunHasOneRecord) {
  const FlowProblem p = cone_problem(ConeModel{3, 1.0}, -2.0);
  const FlowRun run = run_flow(p.geometry, p.state, -2.0, 10);
  EXPECT_EQ(run.trace.records.size(), 1u);
  EXPECT_THROW(run_flow(p.geometry, p.state, -3.0, 10), DomainError);
  EXPECT_THROW(run_flow(p.geometry, p.state, 0.5, 10), DomainError);
}

TEST(RunFlow, ConeHamConstant) {
  for (int n = 2; n <= 4; ++n) {
    const ConeModel m{n, default_base_volume(n)};
    const FlowProblem p = cone_problem(m, -10.0);
    const FlowRun run = run_flow(p.geometry, p.state, -0.1, 10000);
    const double expected = ham_closed_form(m, -1.0);
    double drift = 0.0;
    for (const HamRecord& r : run.trace.records) drift = std::max(drift, rel(r.ham, expected));
    EXPECT_LT(drift, 1e-8) << "n = " << n;
    EXPECT_TRUE(run.trace.violations.empty());
  }
}

TEST(RunFlow, KasnerClosedFormAndStrictDecrease) {
  for (int n = 2; n <= 4; ++n) {
    const KasnerModel m{n, 1.3, 0.8};
    const FlowProblem p = kasner_problem(m, -10.0);
    const FlowRun run = run_flow(p.geometry, p.state, -0.1, 10000);
    double worst = 0.0;
    for (std::size_t i = 0; i < run.trace.records.size(); ++i) {
      const HamRecord& r = run.trace.records[i];
      worst = std::max(worst, rel(r.ham, ham_closed_form(m, r.tau)));
      if (i > 0) {
        EXPECT_LT(r.ham, run.trace.records[i - 1].ham);
        EXPECT_GT(r.tau, run.trace.records[i - 1].tau);
      }
    }
    EXPECT_LT(worst, 1e-6) << "n = " << n;
  }
}

TEST(RunFlow, LapseBoundsAndGauge) {
  const FlowProblem p = kasner_problem(KasnerModel{4, 1.0, 1.0}, -5.0, 32);
  const FlowRun run = run_flow(p.geometry, p.state, -0.2, 4000);
  const int n = 4;
  for (const HamRecord& r : run.trace.records) {
    const double t2 = r.tau * r.tau;
    EXPECT_GE(r.lapse_min * t2, 1.0 - kBoundSlack);
    EXPECT_LE(r.lapse_max * t2, n * (1.0 + kBoundSlack));
    EXPECT_LE(std::abs(r.gauge_drift), 1e-9);
    EXPECT_LE(r.k2_over_tau2_max, 1.0 + kBoundSlack);
    EXPECT_LE(r.ricci_over_tau4_max, ricci_bound_constant(n) * (1.0 + kBoundSlack));
  }
  EXPECT_TRUE(run.trace.violations.empty());
}

TEST(Monotonicity, ConeBothSidesZero) {
  const FlowProblem p = cone_problem(ConeModel{3, 1.0}, -4.0);
  const FlowRun run = run_flow(p.geometry, p.state, -1.0, 3000);
  const MonotonicityReport rep = ham_monotonicity_check(run.trace);
  EXPECT_TRUE(rep.pass());
  EXPECT_LT(rep.max_absolute_error, 1e-10);
  for (const HamRecord& r : run.trace.records) EXPECT_LT(r.n_khat2_integral, 1e-12);
}

TEST(Monotonicity, KasnerBothSidesEqualClosedForm) {
  const KasnerModel m{3, 1.2, 0.9};
  const FlowProblem p = kasner_problem(m, -4.0);
  const FlowRun run = run_flow(p.geometry, p.state, -1.0, 3000);
  const MonotonicityReport rep = ham_monotonicity_check(run.trace);
  EXPECT_TRUE(rep.pass());
  EXPECT_LT(rep.max_relative_error, 1e-4);
  const double expected = -4.0 * 1.2 * 0.9;
  for (const HamRecord& r : run.trace.records) {
    const double rhs = -3.0 * r.tau * r.tau * r.n_khat2_integral;
    EXPECT_NEAR(rhs, expected, 1e-9);
  }
}

TEST(Monotonicity, CorruptedTraceFlagged) {
  const FlowProblem p = kasner_problem(KasnerModel{3, 1.0, 1.0}, -4.0);
  FlowRun run = run_flow(p.geometry, p.state, -1.0, 100);
  run.trace.records[50].ham *= 1.1;
  const MonotonicityReport rep = ham_monotonicity_check(run.trace);
  EXPECT_FALSE(rep.pass());
  EXPECT_FALSE(rep.increases.empty());
}

TEST(LapseIdentity, ModelsAndPerturbation) {
  const FlowProblem cone = cone_problem(ConeModel{3, 1.0}, -2.0);
  const LapseIdentity ic = lapse_identity_check(cone.geometry, cone.state);
  EXPECT_LT(std::abs(ic.lhs), 1e-14);
  EXPECT_LT(std::abs(ic.rhs), 1e-14);
  const KasnerModel km{3, 1.5, 2.0};
  const FlowProblem kas = kasner_problem(km, -2.0, 64);
  const LapseIdentity ik = lapse_identity_check(kas.geometry, kas.state);
  // N = 2/tau^2, |K_hat|^2 = tau^2/6: both sides Vol/3.
  const double vol = volume(kas.geometry, kas.state);
  EXPECT_NEAR(ik.rhs, vol / 3.0, 1e-10);
  EXPECT_LT(ik.residual, 1e-10);
  FlowState bad = kas.state;
  for (int k = 0; k < 64; ++k) bad.lapse(k) *= 1.05 + 0.1 * std::cos(2.0 * M_PI * k / 64.0);
  EXPECT_GT(lapse_identity_check(kas.geometry, bad).residual, 1e-4);
}

TEST(TraceCsv, HeaderAndRows) {
  const FlowProblem p = cone_problem(ConeModel{2, 1.0}, -2.0);
  const FlowRun run = run_flow(p.geometry, p.state, -1.0, 4);
  const CsvTable t = parse_csv(trace_to_csv(run.trace));
  EXPECT_EQ(t.header, std::vector<std::string>({"tau", "volume", "ham", "n_khat2_integral", "gauss_residual",
                                                "codazzi_residual", "lapse_min", "lapse_max"}));
  EXPECT_EQ(t.rows.size(), 5u);
  EXPECT_EQ(t.rows.back()[0], -1.0);
}

TEST(RicciBound, ModelRatios) {
  // The frozen C_n is the larger of the cone and Kasner ratios, so one of them attains it.
  for (int n = 2; n <= 4; ++n) {
    const FlowProblem cone = cone_problem(ConeModel{n, 1.0}, -1.3);
    const FlowProblem kas = kasner_problem(KasnerModel{n, 1.0, 1.0}, -1.3);
    const double rc = make_record(cone.geometry, cone.state).ricci_over_tau4_max;
    const double rk = make_record(kas.geometry, kas.state).ricci_over_tau4_max;
    EXPECT_NEAR(std::max(rc, rk), ricci_bound_constant(n), 1e-12);
  }
  EXPECT_THROW(ricci_bound_constant(5), DimensionError);
}

}  // namespace
}  // namespace flatcmc
