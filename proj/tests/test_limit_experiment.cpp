#include "flatcmc/errors.hpp"
#include "flatcmc/limit_experiment.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace flatcmc {
namespace {

using testing::max_abs;

HolonomyRep zero_structure() {
  const GroupPresentation p = bolza_generators();
  return {p, zero_cocycle(p)};
}

TEST(LimitOptions, Validation) {
  EXPECT_NO_THROW(validate(LimitOptions{}));
  LimitOptions o;
  o.tau_target = 0.0;
  EXPECT_THROW(validate(o), DomainError);
  o = {};
  o.spacing = -0.1;
  EXPECT_THROW(validate(o), DomainError);
  o = {};
  o.tol = 0.0;
  EXPECT_THROW(validate(o), DomainError);
  o = {};
  o.max_bisections = -1;
  EXPECT_THROW(validate(o), DomainError);
  EXPECT_THROW(limit_experiment(zero_structure(), {}), DomainError);
  EXPECT_THROW(limit_experiment(zero_structure(), {1.0, -2.0}), DomainError);
}

TEST(LimitTable, Layout) {
  LimitRow r;
  r.lambda = 2.0;
  r.tau_mean = -2.0;
  r.volume = 4.0 * M_PI;
  r.ham_ratio = 1.0;
  r.residual = 1e-9;
  const CsvTable t = limit_table({r});
  EXPECT_EQ(t.header, std::vector<std::string>({"lambda", "tau_mean", "volume", "ham_ratio", "residual"}));
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0], std::vector<double>({2.0, -2.0, 4.0 * M_PI, 1.0, 1e-9}));
}

TEST(BolzaDeformation, NontrivialUnitCocycle) {
  const HolonomyRep rep = bolza_deformation(0.5);
  const Eigen::VectorXd t = stacked_translations(rep.cocycle);
  EXPECT_NEAR(t.norm(), 0.5, 1e-14);
  for (const Word& r : rep.presentation.relators) {
    EXPECT_LT(max_abs(extend_cocycle(rep, r).components()), 1e-10);
  }
  // Orthogonal to every coboundary, so not cohomologous to zero.
  const Eigen::MatrixXd b = coboundary_space_basis(rep.presentation);
  EXPECT_LT(max_abs(b.transpose() * t), 1e-12);
  const Eigen::VectorXd doubled = stacked_translations(bolza_deformation(1.0).cocycle);
  EXPECT_LT(max_abs(doubled - 2.0 * t), 1e-14);
}

TEST(EquivariantProblem, UnitHyperboloidSolvesZeroCocycle) {
  LimitOptions o;
  o.richardson = false;
  const EquivariantProblem prob(zero_structure(), o);
  ASSERT_FALSE(prob.region().empty());
  HeightField phi = prob.initial();
  prob.fill_ghosts(phi);
  const auto r = prob.residual(phi);
  ASSERT_TRUE(r.has_value());
  const auto nr = static_cast<Eigen::Index>(prob.region().size());
  // H rows carry the O(h^2) discretisation error of the exact hyperboloid.
  EXPECT_LT(r->head(nr).cwiseAbs().maxCoeff(), 0.05);
  const RelaxResult sol = prob.solve(phi);
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(sol.residual, o.tol);
  EXPECT_LT(sol.max_gradient, 1.0);
  // The discrete solution stays close to the unit hyperboloid.
  double dev = 0.0;
  for (std::size_t k : prob.region()) dev = std::max(dev, std::abs(sol.field[k] - phi[k]));
  EXPECT_LT(dev, 1e-2);
}

TEST(EquivariantProblem, NonSpacelikeStartIsRepairedOrRejected) {
  LimitOptions o;
  o.richardson = false;
  const EquivariantProblem prob(zero_structure(), o);
  HeightField steep = prob.initial();
  for (std::size_t k = 0; k < steep.size(); ++k) steep[k] = 3.0 * steep.position(k)(0);
  EXPECT_FALSE(prob.residual(steep).has_value());
  EXPECT_THROW(prob.solve(steep), SpacelikeViolation);
}

TEST(LimitExperiment, ZeroCocycleRatioIsOne) {
  const std::vector<LimitRow> rows = limit_experiment(zero_structure(), {1.0, 3.0});
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.ham_ratio, 1.0, 1e-4);
    EXPECT_NEAR(r.tau_mean, -2.0, 1e-6);
    EXPECT_EQ(r.clipped_cells, 0u);
  }
  // Scaling a zero cocycle changes nothing.
  EXPECT_EQ(rows[0].volume, rows[1].volume);
}

TEST(LimitExperiment, CoboundaryRatioIsOne) {
  const GroupPresentation p = bolza_generators();
  const HolonomyRep cob{p, coboundary_cocycle(p, MinkVector::basis(2, 1) * 0.05)};
  const std::vector<LimitRow> rows = limit_experiment(cob, {1.0});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].converged);
  EXPECT_NEAR(rows[0].ham_ratio, 1.0, 1e-4);
}

TEST(LimitExperiment, RichardsonReducesBias) {
  LimitOptions single;
  single.richardson = false;
  const double coarse = limit_experiment(zero_structure(), {1.0}, single)[0].ham_ratio;
  const double extrapolated = limit_experiment(zero_structure(), {1.0})[0].ham_ratio;
  EXPECT_LT(std::abs(extrapolated - 1.0), std::abs(coarse - 1.0));
}

TEST(RelaxEquivariant, NontrivialStructureConverges) {
  LimitOptions o;
  o.richardson = false;
  const EquivariantSurface s = relax_equivariant(scale_structure(bolza_deformation(0.5), 0.25), o);
  EXPECT_TRUE(s.relax.converged);
  EXPECT_LE(s.relax.residual, o.tol);
  EXPECT_LT(s.relax.max_gradient, 1.0 - kSpacelikeMargin);
  EXPECT_LE(cmc_residual(s.field, o.tau_target, s.region), 1e-6);
}

}  // namespace
}  // namespace flatcmc
