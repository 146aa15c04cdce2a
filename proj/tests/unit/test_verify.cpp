#include "helpers.hpp"

#include "mfpod/models.hpp"
#include "mfpod/verify.hpp"

#include <gtest/gtest.h>

using namespace mfpod;
using namespace mfpod::verify;
using namespace testing_helpers;

namespace {

/// Both fidelities return the same parameter-independent state.
struct ConstantPair {
  Vector state = Vector::LinSpaced(9, 1.0, 0.0);
  Metric metric_ = models::l2_metric(9);
  Vector high(double) const { return state; }
  Vector low(double) const { return state; }
  const Metric& metric() const { return metric_; }
  models::ParameterRange range() const { return {1.0, 100.0}; }
};

/// Low fidelity identical to high fidelity.
struct IdenticalPair {
  models::AdvDiffPair inner;
  Vector high(double t) const { return inner.high(t); }
  Vector low(double t) const { return inner.high(t); }
  const Metric& metric() const { return inner.metric(); }
  models::ParameterRange range() const { return inner.range(); }
};

models::AdvDiffConfig small_config() {
  models::AdvDiffConfig cfg;
  cfg.n_hf = 33;
  cfg.n_lf = 9;
  return cfg;
}

} // namespace

static_assert(ModelPair<models::AdvDiffPair>);
static_assert(ModelPair<ConstantPair>);

TEST(HsError, ZeroAgainstItself) {
  std::mt19937_64 gen(81);
  const Metric m = mass_metric(15);
  const MfOperator op(random_two_level(15, 3, 9, gen), {0.7}, m);
  // Original-coordinate second moment Σ c s sᵀ, i.e. C W⁻¹.
  const Matrix moment = op.assemble() * Matrix(m.weight()).inverse();
  EXPECT_LE(hs_error(op, 0.5 * (moment + moment.transpose()), m), 1e-12 * moment.norm() * 10);
}

TEST(HsError, ZeroWeightAgainstHighFidelityMoment) {
  std::mt19937_64 gen(82);
  const Metric m = Metric::euclidean(10);
  const auto sets = random_two_level(10, 4, 9, gen);
  const MfOperator op(sets, {0.0}, m);
  const Matrix ref = sets[0].shared * sets[0].shared.transpose() / 4.0;
  EXPECT_LE(hs_error(op, ref, m), 1e-13 * ref.norm());
}

TEST(HsError, MatchesEntrywiseFrobenius) {
  std::mt19937_64 gen(83);
  const Metric m = mass_metric(12);
  const MfOperator op(random_two_level(12, 3, 8, gen), {1.0}, m);
  const Matrix b = random_matrix(12, 12, gen);
  const Matrix ref = b * b.transpose();
  const Matrix f = Matrix(m.factor());
  const Matrix c = op.assemble_coordinates();
  const Matrix rc = f.transpose() * ref * f;
  double sum = 0.0;
  for (Index i = 0; i < 12; ++i) {
    for (Index j = 0; j < 12; ++j) sum += std::pow(c(i, j) - rc(i, j), 2);
  }
  EXPECT_NEAR(hs_error(op, ref, m), std::sqrt(sum), 1e-12 * std::sqrt(sum));
}

TEST(HsError, SizeCapEnforced) {
  std::mt19937_64 gen(84);
  const MfOperator op(random_two_level(10, 2, 4, gen), {1.0}, Metric::euclidean(10));
  EXPECT_THROW(hs_error(op, Matrix::Zero(10, 10), Metric::euclidean(10), 5), DimensionError);
}

TEST(SubspaceAlignment, IdenticalComplementAndSymmetric) {
  std::mt19937_64 gen(85);
  const Metric m = mass_metric(12);
  const Basis q = orthonormalize(random_matrix(12, 6, gen), m);
  const Basis a = q.leading(3);
  const Basis b(q.vectors.rightCols(3), m);
  EXPECT_NEAR(subspace_alignment(a, a), 0.0, 1e-12);
  EXPECT_NEAR(subspace_alignment(a, b), 3.0, 1e-12);
  for (int k = 0; k < 20; ++k) {
    const Basis x = orthonormalize(random_matrix(12, 3, gen), m);
    const Basis y = orthonormalize(random_matrix(12, 3, gen), m);
    const double xy = subspace_alignment(x, y);
    EXPECT_NEAR(xy, subspace_alignment(y, x), 1e-10);
    EXPECT_GE(xy, -1e-12);
    EXPECT_LE(xy, 3.0 + 1e-12);
  }
  EXPECT_THROW(subspace_alignment(a, q), DimensionError);
}

TEST(ConvergenceStudy, DegenerateModelIsExact) {
  const ConstantPair pair;
  const auto res = convergence_study(pair, 4, {2, 4, 8}, 30, 1, StudyOptions{1.0, 100});
  EXPECT_TRUE(res.exact);
  EXPECT_TRUE(std::isnan(res.slope));
  for (double e : res.hs_errors) EXPECT_LE(e, 1e-24);
}

TEST(ConvergenceStudy, IdenticalFidelitiesMatchPlainMonteCarlo) {
  const IdenticalPair pair{models::AdvDiffPair(small_config())};
  const std::vector<Index> grid{2, 4};
  const ReferenceMoment ref = reference_moment(pair, 500);
  const auto res = convergence_study(pair, 4, grid, 30, 5, ref);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double mean = 0.0;
    for (Index rep = 0; rep < 30; ++rep) {
      const auto theta = realization_parameters(pair, 5, grid[g], 4 * grid[g], rep);
      Matrix z(33, static_cast<Index>(theta.size()));
      for (std::size_t i = 0; i < theta.size(); ++i) z.col(static_cast<Index>(i)) = pair.high(theta[i]);
      z = pair.metric().to_coords(z);
      const Matrix c = z * z.transpose() / static_cast<double>(theta.size());
      mean += (c - ref.moment).squaredNorm() / 30.0;
    }
    EXPECT_NEAR(res.hs_errors[g], mean, 1e-10 * mean);
  }
}

TEST(ConvergenceStudy, BoundaryLayerDecaysLikeInverseM0) {
  const models::AdvDiffPair pair(small_config());
  const auto res = convergence_study(pair, 4, {2, 4, 8, 16}, 40, 11, StudyOptions{1.0, 2000});
  EXPECT_FALSE(res.exact);
  EXPECT_GT(res.slope, -1.5);
  EXPECT_LT(res.slope, -0.5);
  EXPECT_GT(res.gamma_hat, 0.0);
}

TEST(ConvergenceStudy, RejectsBadArguments) {
  const ConstantPair pair;
  EXPECT_THROW(convergence_study(pair, 4, {2, 4}, 10, 1, StudyOptions{1.0, 10}), std::invalid_argument);
  EXPECT_THROW(convergence_study(pair, 4, {4, 2}, 30, 1, StudyOptions{1.0, 10}), std::invalid_argument);
  EXPECT_THROW(convergence_study(pair, 1, {2, 4}, 30, 1, StudyOptions{1.0, 10}), std::invalid_argument);
}

TEST(EigenvalueStudy, ZeroDimensionHasZeroError) {
  const models::AdvDiffPair pair(small_config());
  const ReferenceMoment ref = reference_moment(pair, 200);
  const auto res = eigenvalue_sum_mse(pair, 0, {2, 4}, 4, 30, 1, 1.0, ref);
  for (double e : res.mse) EXPECT_EQ(e, 0.0);
}

TEST(EigenvalueStudy, SymmetryAndBoundOnSmallModel) {
  const models::AdvDiffPair pair(small_config());
  const ReferenceMoment ref = reference_moment(pair, 2000);
  const std::vector<Index> grid{2, 4, 8, 16};
  const auto conv = convergence_study(pair, 4, grid, 40, 3, ref);
  const auto res = eigenvalue_sum_mse(pair, 3, grid, 4, 40, 3, conv.gamma_hat, ref);
  EXPECT_LE(res.max_symmetry_gap, 1e-9);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_LE(res.mse[g], 1.2 * res.bound[g]) << "m0=" << grid[g];
  }
  EXPECT_NEAR(res.median_energy_ratio.back(), res.reference_energy_ratio, 0.05 * res.reference_energy_ratio);
}

TEST(AlignmentAgainst, ReferenceModesAreAligned) {
  const models::AdvDiffPair pair(small_config());
  const ReferenceMoment ref = reference_moment(pair, 300);
  const Basis top(ref.metric.from_coords(ref.eig.vectors.leftCols(2)), ref.metric);
  const AlignmentResult a = alignment_against(top, ref, 1.0, 4);
  EXPECT_NEAR(a.principal_sine_sq_sum, 0.0, 1e-10);
  EXPECT_GT(a.spectral_gap, 0.0);
  EXPECT_GT(a.bound, 0.0);
}

TEST(Realizations, PrefixStableAndSeedDependent) {
  const models::AdvDiffPair pair(small_config());
  const auto a = realization_parameters(pair, 9, 4, 16, 3);
  const auto b = realization_parameters(pair, 9, 4, 8, 3);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_NE(a, realization_parameters(pair, 9, 4, 16, 4));
  EXPECT_NE(a, realization_parameters(pair, 10, 4, 16, 3));
}

TEST(CompensatedSum, RecoversSmallTerms) {
  CompensatedSum s;
  s.add(1e16);
  for (int i = 0; i < 1000; ++i) s.add(1.0);
  s.add(-1e16);
  EXPECT_EQ(s.value(), 1000.0);
}
