#include "helpers.hpp"

#include "mfpod/core.hpp"
#include "mfpod/models.hpp"

#include <gtest/gtest.h>

using namespace mfpod;
using namespace testing_helpers;

TEST(Metric, EuclideanInnerIsPlainDot) {
  std::mt19937_64 gen(1);
  const Vector u = random_vector(17, gen);
  const Vector v = random_vector(17, gen);
  const Metric m = Metric::euclidean(17);
  EXPECT_EQ(inner(u, v, m), u.dot(v));
  EXPECT_EQ(inner(Vector::Unit(17, 0), Vector::Unit(17, 0), m), 1.0);
}

TEST(Metric, InnerIsSymmetric) {
  std::mt19937_64 gen(2);
  const Metric m = mass_metric(33);
  for (int k = 0; k < 10; ++k) {
    const Vector u = random_vector(33, gen);
    const Vector v = random_vector(33, gen);
    EXPECT_NEAR(inner(u, v, m), inner(v, u, m), 1e-14 * u.norm() * v.norm());
  }
}

TEST(Metric, MassMatrixIntegratesLinearFunctionExactly) {
  // ∫₀¹ (1 − x)² dx = 1/3; P1 mass matrix integrates products of P1 functions exactly.
  for (Index n : {3, 17, 129}) {
    const Vector u = Vector::Ones(n) - models::mesh_nodes(n);
    EXPECT_NEAR(inner(u, u, mass_metric(n)), 1.0 / 3.0, 1e-12);
  }
}

TEST(Metric, FactorRoundTrip) {
  const Metric m = mass_metric(65);
  const Matrix w = Matrix(m.weight());
  const SparseMatrix f = m.factor();
  const Matrix ffT = Matrix(f) * Matrix(f).transpose();
  EXPECT_LE((ffT - w).norm(), 1e-12 * w.norm());
}

TEST(Metric, CoordinatesPreserveInnerProducts) {
  std::mt19937_64 gen(3);
  const Metric m = mass_metric(40);
  const Matrix x = random_matrix(40, 3, gen);
  const Matrix y = m.to_coords(x);
  const Matrix g1 = x.transpose() * m.apply(x);
  const Matrix g2 = y.transpose() * y;
  EXPECT_LE((g1 - g2).norm(), 1e-12 * g1.norm());
  EXPECT_LE((m.from_coords(y) - x).norm(), 1e-10 * x.norm());
}

TEST(Metric, RejectsAsymmetricWeight) {
  SparseMatrix w(2, 2);
  w.insert(0, 0) = 2.0;
  w.insert(0, 1) = 1.0;
  w.insert(1, 1) = 2.0;
  EXPECT_THROW(Metric::weighted(w), std::invalid_argument);
}

TEST(Metric, RejectsIndefiniteWeight) {
  SparseMatrix w(2, 2);
  w.insert(0, 0) = 1.0;
  w.insert(1, 1) = -1.0;
  EXPECT_THROW(Metric::weighted(w), std::invalid_argument);
}

TEST(Metric, DimensionMismatchRejected) {
  const Metric m = Metric::euclidean(3);
  EXPECT_THROW(inner(Vector::Ones(3), Vector::Ones(4), m), DimensionError);
}

TEST(Project, EmptyBasisGivesZero) {
  std::mt19937_64 gen(4);
  const Vector u = random_vector(10, gen);
  EXPECT_EQ(project(Basis::empty(Metric::euclidean(10)), u).norm(), 0.0);
}

TEST(Project, FullBasisIsIdentity) {
  std::mt19937_64 gen(5);
  const Metric m = mass_metric(12);
  const Basis b = orthonormalize(random_matrix(12, 12, gen), m);
  ASSERT_EQ(b.dim(), 12);
  const Vector u = random_vector(12, gen);
  EXPECT_LE((project(b, u) - u).norm(), 1e-10 * u.norm());
}

TEST(Project, IdempotentOrthogonalResidualAndPythagoras) {
  std::mt19937_64 gen(6);
  const Metric m = mass_metric(50);
  const Basis b = orthonormalize(random_matrix(50, 6, gen), m);
  for (int k = 0; k < 20; ++k) {
    const Vector u = random_vector(50, gen);
    const Vector pu = project(b, u);
    EXPECT_LE((project(b, pu) - pu).norm(), 1e-10 * u.norm());
    const Vector res = u - pu;
    const Vector c = b.vectors.transpose() * m.apply(Matrix(res)).col(0);
    EXPECT_LE(c.cwiseAbs().maxCoeff(), 1e-10 * std::sqrt(norm_squared(u, m)));
    const double total = norm_squared(u, m);
    EXPECT_NEAR(norm_squared(res, m) + norm_squared(pu, m), total, 1e-9 * total);
  }
}

TEST(Orthonormalize, IdentityColumnsUnchanged) {
  const Matrix id = Matrix::Identity(5, 5);
  const Basis b = orthonormalize(id, Metric::euclidean(5));
  EXPECT_EQ(b.dim(), 5);
  EXPECT_LE((b.vectors - id).norm(), 1e-15);
}

TEST(Orthonormalize, DropsDependentColumns) {
  std::mt19937_64 gen(7);
  const Vector u = random_vector(8, gen);
  Matrix x(8, 2);
  x << u, 2.0 * u;
  EXPECT_EQ(orthonormalize(x, Metric::euclidean(8)).dim(), 1);
}

TEST(Orthonormalize, RandomInputSatisfiesBasisInvariant) {
  std::mt19937_64 gen(8);
  for (const Metric& m : {Metric::euclidean(100), mass_metric(100)}) {
    const Basis b = orthonormalize(random_matrix(100, 10, gen), m);
    EXPECT_EQ(b.dim(), 10);
    const Matrix g = b.vectors.transpose() * m.apply(b.vectors);
    EXPECT_LE((g - Matrix::Identity(10, 10)).norm(), 1e-10);
  }
}

TEST(Orthonormalize, RejectsNonPositiveTolerance) {
  EXPECT_THROW(orthonormalize(Matrix::Identity(3, 3), Metric::euclidean(3), 0.0), std::invalid_argument);
}

TEST(SnapshotSet, TwoLevelHierarchyIsValid) {
  std::mt19937_64 gen(9);
  const auto sets = random_two_level(6, 2, 5, gen);
  EXPECT_NO_THROW(validate_hierarchy(sets));
  EXPECT_EQ(sample_sizes(sets), (std::vector<Index>{2, 5}));
  EXPECT_EQ(sets[1].shared.cols(), 2);
  EXPECT_EQ(sets[1].extra.cols(), 3);
}

TEST(SnapshotSet, SharingViolationsRejected) {
  std::mt19937_64 gen(10);
  auto sets = random_two_level(6, 2, 5, gen);
  auto bad_ids = sets;
  bad_ids[1].sample_ids[0] = 99;
  EXPECT_THROW(validate_hierarchy(bad_ids), SharingError);

  auto bad_shared = sets;
  bad_shared[1] = make_level_set(1, sets[1].combined(), 1, 0.1);
  EXPECT_THROW(validate_hierarchy(bad_shared), SharingError);

  auto bad_cost = sets;
  bad_cost[1].cost_per_sample = 2.0;
  EXPECT_THROW(validate_hierarchy(bad_cost), SharingError);

  auto no_extra = random_two_level(6, 3, 3, gen);
  EXPECT_THROW(validate_hierarchy(no_extra), SharingError);
}
