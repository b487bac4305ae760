#include "flatcmc/errors.hpp"
#include "flatcmc/lorentz.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace flatcmc {
namespace {

using testing::max_abs;
using testing::Random;

TEST(MinkVector, InnerProductSignature) {
  const MinkVector e0 = MinkVector::basis(3, 0);
  const MinkVector e2 = MinkVector::basis(3, 2);
  EXPECT_EQ(mink_inner(e0, e0), -1.0);
  EXPECT_EQ(mink_inner(e2, e2), 1.0);
  EXPECT_EQ(mink_inner(e0, e2), 0.0);
  EXPECT_THROW(mink_inner(e0, MinkVector::basis(2, 0)), DimensionError);
}

TEST(MinkVector, CausalType) {
  EXPECT_EQ(causal_type(MinkVector::basis(2, 0)), CausalType::Timelike);
  EXPECT_EQ(causal_type(MinkVector::basis(2, 1)), CausalType::Spacelike);
  EXPECT_EQ(causal_type(MinkVector(Eigen::Vector3d(1.0, 1.0, 0.0))), CausalType::Null);
  // Just outside the null band.
  EXPECT_EQ(causal_type(MinkVector(Eigen::Vector3d(1.0, std::sqrt(1.0 - 1e-9), 0.0))), CausalType::Timelike);
}

TEST(MinkVector, HyperboloidPoint) {
  const MinkVector p = MinkVector::hyperboloid_point(Eigen::Vector3d(0.3, -1.2, 2.0));
  EXPECT_NEAR(mink_inner(p, p), -1.0, 1e-12);
  EXPECT_GT(p.time(), 0.0);
}

TEST(LorentzMap, FromMatrixRejectsNonLorentz) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(3, 3);
  m(1, 2) = 0.1;
  EXPECT_THROW(LorentzMap::from_matrix(m), DomainError);
  EXPECT_NO_THROW(LorentzMap::from_matrix(Eigen::MatrixXd::Identity(3, 3)));
}

TEST(LorentzMap, BoostZeroRapidityIsIdentity) {
  const LorentzMap b = make_boost(Eigen::Vector3d(0.0, 0.6, 0.8), 0.0);
  EXPECT_EQ(max_abs(b.matrix() - Eigen::MatrixXd::Identity(4, 4)), 0.0);
}

TEST(LorentzMap, BoostAndInverseRapidityCompose) {
  const Eigen::Vector2d dir(0.6, 0.8);
  const LorentzMap m = make_boost(dir, 0.7) * make_boost(dir, -0.7);
  EXPECT_LT(max_abs(m.matrix() - Eigen::MatrixXd::Identity(3, 3)), 1e-14);
}

TEST(LorentzMap, UnitBoostAlongE1) {
  const LorentzMap b = make_boost(Eigen::Vector2d(1.0, 0.0), 1.0);
  const MinkVector image = b * MinkVector::basis(2, 0);
  EXPECT_NEAR(image[0], std::cosh(1.0), 1e-15);
  EXPECT_NEAR(image[1], std::sinh(1.0), 1e-15);
  EXPECT_EQ(image[2], 0.0);
  EXPECT_TRUE(verify_lorentz(b.matrix()));
}

TEST(LorentzMap, BoostFixesOrthogonalComplement) {
  const Eigen::Vector3d dir = Eigen::Vector3d(1.0, 2.0, -2.0) / 3.0;
  const LorentzMap b = make_boost(dir, 1.3);
  const MinkVector perp(Eigen::Vector4d(0.0, 2.0, -1.0, 0.0));
  EXPECT_LT(max_abs((b * perp - perp).components()), 1e-14);
}

TEST(LorentzMap, BoostRejectsNonUnitDirection) {
  EXPECT_THROW(make_boost(Eigen::Vector2d(1.0, 1.0), 0.5), DomainError);
}

TEST(LorentzMap, InverseAndDefect) {
  Random rng(11);
  for (int n = 2; n <= 4; ++n) {
    const LorentzMap a = rng.lorentz(n);
    EXPECT_LT(a.defect(), 1e-12);
    EXPECT_LT(max_abs((a * a.inverse()).matrix() - Eigen::MatrixXd::Identity(n + 1, n + 1)), 1e-12);
  }
}

TEST(LorentzMap, ReorthonormalizeRepairsPerturbation) {
  Random rng(5);
  const LorentzMap a = rng.lorentz(3);
  Eigen::MatrixXd m = a.matrix();
  m(1, 2) += 1e-7;
  m(0, 3) -= 2e-7;
  EXPECT_FALSE(verify_lorentz(m));
  const Eigen::MatrixXd fixed = reorthonormalize(m);
  EXPECT_TRUE(verify_lorentz(fixed));
  EXPECT_LT(max_abs(fixed - a.matrix()), 1e-6);
}

TEST(LorentzMap, ReorthonormalizeLeavesLargeBoostAlone) {
  // A rapidity-12 boost has entries ~1e5: its defect sits at eps |A|^2 and a
  // further iteration would only move the entries by rounding noise.
  const LorentzMap b = make_boost(Eigen::Vector2d(0.6, 0.8), 12.0) * make_rotation(2, 1, 2, 0.4);
  EXPECT_EQ(max_abs(reorthonormalize(b.matrix()) - b.matrix()), 0.0);
}

TEST(MinkIsometry, TranslationAndLinearParts) {
  const MinkVector a(Eigen::Vector3d(0.5, -1.0, 2.0));
  const MinkVector x(Eigen::Vector3d(1.0, 0.25, -0.5));
  EXPECT_EQ(max_abs((MinkIsometry::translation(a).apply(x) - (x + a)).components()), 0.0);
  const LorentzMap r = make_rotation(2, 1, 2, 0.3);
  const MinkIsometry lin(r, MinkVector::zero(2));
  EXPECT_EQ(max_abs((lin.apply(x) - r * x).components()), 0.0);
}

TEST(MinkIsometry, BoostAfterTranslationOfOrigin) {
  const LorentzMap b = make_boost(Eigen::Vector2d(1.0, 0.0), 1.0);
  const MinkIsometry g = MinkIsometry(b, MinkVector::zero(2)).compose(MinkIsometry::translation(MinkVector::basis(2, 1)));
  const MinkVector image = g.apply(MinkVector::zero(2));
  // Direct arithmetic: the boost sends e1 to (sinh 1, cosh 1, 0).
  EXPECT_NEAR(image[0], std::sinh(1.0), 1e-15);
  EXPECT_NEAR(image[1], std::cosh(1.0), 1e-15);
  EXPECT_EQ(image[2], 0.0);
}

TEST(MinkIsometry, DimensionMismatchThrows) {
  EXPECT_THROW(MinkIsometry(LorentzMap::identity(2), MinkVector::zero(3)), DimensionError);
  EXPECT_THROW(MinkIsometry::identity(2).apply(MinkVector::zero(3)), DimensionError);
  EXPECT_THROW(MinkIsometry::identity(2).compose(MinkIsometry::identity(3)), DimensionError);
}

TEST(LorentzProperty, PreservesInnerProduct) {
  Random rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 3;
    const LorentzMap a = rng.lorentz(n);
    const MinkVector u = rng.mink(n), v = rng.mink(n);
    worst = std::max(worst, std::abs(mink_inner(a * u, a * v) - mink_inner(u, v)));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(LorentzProperty, CompositionAssociativeAndActsInOrder) {
  Random rng(202);
  double assoc = 0.0, action = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 3;
    const MinkIsometry f(rng.lorentz(n), rng.mink(n));
    const MinkIsometry g(rng.lorentz(n), rng.mink(n));
    const MinkIsometry h(rng.lorentz(n), rng.mink(n));
    const MinkVector x = rng.mink(n);
    const MinkVector left = f.compose(g).compose(h).apply(x);
    const MinkVector right = f.compose(g.compose(h)).apply(x);
    const double scale = std::max(1.0, max_abs(left.components()));
    assoc = std::max(assoc, max_abs((left - right).components()) / scale);
    const MinkVector nested = f.apply(g.apply(x));
    action = std::max(action, max_abs((f.compose(g).apply(x) - nested).components()) /
                                  std::max(1.0, max_abs(nested.components())));
  }
  EXPECT_LT(assoc, 1e-12);
  EXPECT_LT(action, 1e-12);
}

TEST(LorentzProperty, OrthochronousMapsPreserveHyperboloid) {
  Random rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 3;
    const LorentzMap a = rng.lorentz(n);
    ASSERT_TRUE(a.orthochronous());
    const MinkVector p = MinkVector::hyperboloid_point(rng.vector(n, 2.0));
    const MinkVector q = a * p;
    EXPECT_GT(q.time(), 0.0);
    worst = std::max(worst, std::abs(mink_inner(q, q) + 1.0));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(LorentzProperty, IsometryInverse) {
  Random rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 3;
    const MinkIsometry f(rng.lorentz(n), rng.mink(n));
    const MinkVector x = rng.mink(n);
    EXPECT_LT(max_abs((f.inverse().apply(f.apply(x)) - x).components()), 1e-11);
  }
}

}  // namespace
}  // namespace flatcmc
