#include "helpers.hpp"

#include "mfpod/solver.hpp"

#include <gtest/gtest.h>

using namespace mfpod;
using namespace testing_helpers;

namespace {

/// Random symmetric rank-r matrix with both signs: U diag(d) Uᵀ.
struct LowRank {
  Matrix a;
  Matrix factor;  // spans the range
};

LowRank indefinite_low_rank(Index n, Index r, std::mt19937_64& gen) {
  const Matrix u = orthonormalize(random_matrix(n, r, gen), Metric::euclidean(n)).vectors;
  Vector d(r);
  std::uniform_real_distribution<double> mag(0.5, 5.0);
  for (Index j = 0; j < r; ++j) d(j) = (j % 3 == 2 ? -1.0 : 1.0) * mag(gen);
  return {u * d.asDiagonal() * u.transpose(), u * random_orthogonal(r, gen)};
}

/// Nonzero part of the dense spectrum, descending signed.
Vector nonzero_values(const EigenPairs& e, double tol) {
  const double top = e.values.cwiseAbs().maxCoeff();
  std::vector<double> v;
  for (Index j = 0; j < e.size(); ++j) {
    if (std::abs(e.values(j)) > tol * top) v.push_back(e.values(j));
  }
  return Eigen::Map<Vector>(v.data(), static_cast<Index>(v.size()));
}

} // namespace

TEST(DenseEig, DiagonalMatrix) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 2.0;
  const EigenPairs e = dense_symmetric_eig(a);
  EXPECT_DOUBLE_EQ(e.values(0), 2.0);
  EXPECT_DOUBLE_EQ(e.values(1), 1.0);
  EXPECT_NEAR(std::abs(e.vectors(1, 0)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(e.vectors(0, 1)), 1.0, 1e-15);
}

TEST(DenseEig, SimilarityInvariance) {
  std::mt19937_64 gen(11);
  const Matrix b = random_matrix(20, 20, gen);
  const Matrix a = b + b.transpose();
  const Matrix q = random_orthogonal(20, gen);
  const Matrix qaq = q * a * q.transpose();
  const EigenPairs e1 = dense_symmetric_eig(a);
  const EigenPairs e2 = dense_symmetric_eig(0.5 * (qaq + qaq.transpose()));
  EXPECT_LE((e1.values - e2.values).cwiseAbs().maxCoeff(), 1e-10 * e1.values.cwiseAbs().maxCoeff());
}

TEST(DenseEig, Reconstruction) {
  std::mt19937_64 gen(12);
  const Matrix b = random_matrix(50, 50, gen);
  const Matrix a = b + b.transpose();
  const EigenPairs e = dense_symmetric_eig(a);
  const Matrix rec = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  EXPECT_LE((rec - a).norm(), 1e-9 * a.norm());
  for (Index j = 1; j < e.size(); ++j) EXPECT_GE(e.values(j - 1), e.values(j));
}

TEST(DenseEig, RejectsAsymmetric) {
  Matrix a = Matrix::Identity(3, 3);
  a(0, 2) = 1.0;
  EXPECT_THROW(dense_symmetric_eig(a), std::invalid_argument);
}

TEST(DenseEig, RejectsOversize) {
  EXPECT_THROW(dense_symmetric_eig(Matrix::Identity(5, 5), 4), DimensionError);
}

class LowRankMethods : public ::testing::TestWithParam<LowRankMethod> {};

TEST_P(LowRankMethods, MatchesDenseOracleOnRandomIndefiniteRankTen) {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 30; ++trial) {
    const LowRank lr = indefinite_low_rank(200, 10, gen);
    LinearAction act = wrap_dense(lr.a);
    act.rank_bound = 10;
    LowRankOptions o;
    o.method = GetParam();
    const EigenPairs got = lowrank_eig(act, lr.factor, o);
    const Vector expect = nonzero_values(dense_symmetric_eig(lr.a), 1e-10);
    ASSERT_EQ(got.size(), expect.size());
    ASSERT_EQ(got.size(), 10);
    for (Index j = 0; j < got.size(); ++j) {
      EXPECT_NEAR(got.values(j), expect(j), 1e-8 * std::abs(expect(j)));
    }
    const double top = got.values.cwiseAbs().maxCoeff();
    for (Index j = 0; j < got.size(); ++j) {
      const Vector v = got.vectors.col(j);
      EXPECT_LE((lr.a * v - got.values(j) * v).norm(), 1e-10 * top);
    }
    EXPECT_LE((got.vectors.transpose() * got.vectors - Matrix::Identity(10, 10)).norm(), 1e-9);
  }
}

TEST_P(LowRankMethods, RankOneSeededWithItsVector) {
  std::mt19937_64 gen(14);
  const Vector u = random_vector(40, gen);
  LinearAction act{40, [u](const Matrix& x) -> Matrix { return u * (u.transpose() * x); }, 1};
  LowRankOptions o;
  o.method = GetParam();
  const EigenPairs e = lowrank_eig(act, Matrix(u), o);
  ASSERT_EQ(e.size(), 1);
  EXPECT_NEAR(e.values(0), u.squaredNorm(), 1e-12 * u.squaredNorm());
  EXPECT_NEAR(std::abs(e.vectors.col(0).dot(u.normalized())), 1.0, 1e-12);
}

TEST_P(LowRankMethods, FindsNegativeEigenvalue) {
  std::mt19937_64 gen(15);
  const Matrix uw = orthonormalize(random_matrix(30, 2, gen), Metric::euclidean(30)).vectors;
  const Vector u = 3.0 * uw.col(0);
  const Vector w = 2.0 * uw.col(1);
  const Matrix a = u * u.transpose() - w * w.transpose();
  LinearAction act = wrap_dense(a);
  act.rank_bound = 2;
  LowRankOptions o;
  o.method = GetParam();
  Matrix init(30, 2);
  init << u, w;
  const EigenPairs e = lowrank_eig(act, init, o);
  ASSERT_EQ(e.size(), 2);
  EXPECT_NEAR(e.values(0), 9.0, 1e-9);
  EXPECT_NEAR(e.values(1), -4.0, 1e-9);
}

TEST_P(LowRankMethods, RecoversConstructedRank) {
  std::mt19937_64 gen(16);
  for (Index r : {1, 4, 7, 12}) {
    const Matrix s = random_matrix(60, r, gen);
    const Matrix a = s * s.transpose();
    LinearAction act = wrap_dense(a);
    act.rank_bound = r;
    LowRankOptions o;
    o.method = GetParam();
    EXPECT_EQ(lowrank_eig(act, s, o).size(), r);
  }
}

INSTANTIATE_TEST_SUITE_P(Both, LowRankMethods,
                         ::testing::Values(LowRankMethod::projection, LowRankMethod::block_lanczos));

TEST(LowRankEig, ProjectionEnrichesWhenInitMissesRange) {
  std::mt19937_64 gen(17);
  const LowRank lr = indefinite_low_rank(50, 4, gen);
  LinearAction act = wrap_dense(lr.a);
  act.rank_bound = 4;
  // A random seed does not span the range; Krylov enrichment must recover it.
  const EigenPairs e = lowrank_eig(act, random_matrix(50, 2, gen));
  const Vector expect = nonzero_values(dense_symmetric_eig(lr.a), 1e-10);
  ASSERT_EQ(e.size(), 4);
  EXPECT_LE((e.values - expect).cwiseAbs().maxCoeff(), 1e-8 * expect.cwiseAbs().maxCoeff());
}

TEST(LowRankEig, NonConvergenceCarriesResiduals) {
  std::mt19937_64 gen(18);
  const LowRank lr = indefinite_low_rank(50, 6, gen);
  LinearAction act = wrap_dense(lr.a);
  act.rank_bound = 6;
  LowRankOptions o;
  o.max_iter = 1;
  try {
    lowrank_eig(act, random_matrix(50, 1, gen), o);
    FAIL() << "expected EigenSolveError";
  } catch (const EigenSolveError& e) {
    EXPECT_GT(e.best_residuals().size(), 0);
  }
}

TEST(LowRankEig, WantAboveRankBoundRejected) {
  LinearAction act = wrap_dense(Matrix::Identity(4, 4));
  act.rank_bound = 2;
  LowRankOptions o;
  o.want = 3;
  EXPECT_THROW(lowrank_eig(act, Matrix::Identity(4, 4), o), std::invalid_argument);
}

TEST(LinearAction, OperatorIsSymmetricOnProbes) {
  std::mt19937_64 gen(19);
  const LowRank lr = indefinite_low_rank(30, 5, gen);
  const LinearAction act = wrap_dense(lr.a);
  const double scale = lr.a.norm();
  for (int k = 0; k < 10; ++k) {
    const Vector v = random_vector(30, gen);
    const Vector w = random_vector(30, gen);
    EXPECT_LE(std::abs(act(v).dot(w) - v.dot(act(w))), 1e-10 * scale * v.norm() * w.norm());
  }
}

TEST(LowRankEig, ScaleDropsValuesNegligibleAgainstIt) {
  Matrix a = Matrix::Zero(6, 6);
  a(0, 0) = 1e-13;
  a(1, 1) = -4e-14;
  const LinearAction act = wrap_dense(a);
  LowRankOptions o;
  o.want = 2;
  EXPECT_EQ(lowrank_eig(act, Matrix::Identity(6, 2), o).size(), 2);
  o.scale = 10.0;
  EXPECT_EQ(lowrank_eig(act, Matrix::Identity(6, 2), o).size(), 0);
  o.scale = 1e-12;
  const EigenPairs e = lowrank_eig(act, Matrix::Identity(6, 2), o);
  ASSERT_EQ(e.size(), 2);
  EXPECT_DOUBLE_EQ(e.values(0), 1e-13);
  o.scale = -1.0;
  EXPECT_THROW(lowrank_eig(act, Matrix::Identity(6, 2), o), std::invalid_argument);
}

TEST(LowRankEig, EmptyInitGivesNoPairs) {
  const LinearAction act = wrap_dense(Matrix::Zero(4, 4));
  LowRankOptions o;
  o.want = 1;
  EXPECT_EQ(lowrank_eig(act, Matrix::Zero(4, 2), o).size(), 0);
}
