#include "helpers.hpp"

#include "mfpod/adaptive.hpp"
#include "mfpod/pod.hpp"
#include "mfpod/verify.hpp"

#include <gtest/gtest.h>

using namespace mfpod;
using namespace testing_helpers;

TEST(AdaptiveWeight, IdenticalFidelitiesGiveOne) {
  std::mt19937_64 gen(61);
  const Matrix u = random_matrix(12, 8, gen);
  const auto sets = make_two_level(u.leftCols(4), u);
  EXPECT_DOUBLE_EQ(adaptive_weight(Basis::empty(mass_metric(12)), sets), 1.0);
}

TEST(AdaptiveWeight, LowFidelityInsideBasisGivesZero) {
  std::mt19937_64 gen(62);
  const Metric m = mass_metric(12);
  const auto sets = random_two_level(12, 3, 6, gen);
  const Basis b = orthonormalize(sets[1].combined(), m);
  EXPECT_EQ(adaptive_weight(b, sets), 0.0);
}

TEST(AdaptiveWeight, MatchesHandComputedRatio) {
  std::mt19937_64 gen(63);
  const Metric m = mass_metric(15);
  const auto sets = random_two_level(15, 5, 12, gen, 0.6);
  const Basis b = orthonormalize(random_matrix(15, 2, gen), m);
  std::vector<double> x, y;
  for (Index i = 0; i < 5; ++i) {
    const Vector r0 = sets[0].shared.col(i) - project(b, Vector(sets[0].shared.col(i)));
    const Vector r1 = sets[1].shared.col(i) - project(b, Vector(sets[1].shared.col(i)));
    x.push_back(inner(r0, r0, m));
    y.push_back(inner(r1, r1, m));
  }
  double mx = 0, my = 0;
  for (int i = 0; i < 5; ++i) {
    mx += x[i] / 5;
    my += y[i] / 5;
  }
  double vy = 0, cxy = 0;
  for (int i = 0; i < 5; ++i) {
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  EXPECT_NEAR(adaptive_weight(b, sets), cxy / vy, 1e-12 * std::abs(cxy / vy));
}

TEST(MfpodAdaptive, IdenticalFidelitiesMatchFixedUnitWeight) {
  std::mt19937_64 gen(64);
  const Metric m = mass_metric(30);
  const Matrix u = random_matrix(30, 10, gen) * Vector::LinSpaced(10, 1.0, 4.0).asDiagonal();
  const auto sets = make_two_level(u.leftCols(3), u);
  const AdaptiveResult a = mfpod_adaptive(sets, 0.999, m);
  const MfBasis f = mfpod_fixed(sets, {1.0}, 0.999, m);
  for (const auto& s : a.trace.steps) EXPECT_NEAR(s.alpha, 1.0, 1e-12);
  const Index k = std::min(a.basis.mode_count(), f.mode_count());
  ASSERT_GE(k, 3);
  for (Index r = 1; r <= k; ++r) {
    const bool gap = r == f.mode_count() || f.corrected(r - 1) - f.corrected(r) > 1e-6 * f.corrected(0);
    if (!gap) continue;
    EXPECT_LE(verify::subspace_alignment(a.basis.modes(r), f.modes(r)), 1e-6) << "r=" << r;
  }
}

TEST(MfpodAdaptive, OrthogonalHighFidelityZeroLowFidelityReproducesPod) {
  std::mt19937_64 gen(65);
  const Metric m = mass_metric(20);
  const Basis q = orthonormalize(random_matrix(20, 4, gen), m);
  const Matrix s0 = q.vectors * Vector::LinSpaced(4, 4.0, 1.0).asDiagonal();
  const auto sets = make_two_level(s0, Matrix::Zero(20, 10));
  const AdaptiveResult a = mfpod_adaptive(sets, 0.999999, m);
  ASSERT_EQ(a.trace.steps.size(), 4u);
  for (const auto& s : a.trace.steps) EXPECT_EQ(s.alpha, 0.0);
  const PodResult p = pod(s0, m);
  EXPECT_LE(verify::subspace_alignment(a.basis.modes(4), p.basis), 1e-8);
  for (Index j = 0; j < 4; ++j) EXPECT_NEAR(a.basis.corrected(j), p.eigvals(j), 1e-9 * p.eigvals(0));
}

TEST(MfpodAdaptive, ResidualsDecreaseModesOrthogonalAndSpanHighFidelity) {
  std::mt19937_64 gen(66);
  const Metric m = mass_metric(40);
  for (int trial = 0; trial < 5; ++trial) {
    const auto sets = random_two_level(40, 4, 15, gen, 0.7);
    AdaptiveOptions o;
    const AdaptiveResult a = mfpod_adaptive(sets, 0.99, m, o);
    double prev = a.trace.initial_residual;
    for (const auto& s : a.trace.steps) {
      EXPECT_LT(s.residual, prev);
      EXPECT_TRUE(std::isfinite(s.alpha));
      prev = s.residual;
    }
    EXPECT_LE(Basis(a.basis.vectors, m).orthonormality_error(), 1e-9);
    const Basis all(a.basis.vectors, m);
    const double s0n = column_norms_squared(sets[0].shared, m).sum();
    EXPECT_LE(residual_norms_squared(all, sets[0].shared).sum(), 1e-18 * s0n);
    EXPECT_EQ(a.trace.termination, "high-fidelity snapshots resolved");
    for (Index j = 0; j < a.basis.corrected.size(); ++j) EXPECT_GE(a.basis.corrected(j), 0.0);
  }
}

TEST(MfpodAdaptive, FrozenWeightFollowsFixedModesByMagnitude) {
  std::mt19937_64 gen(67);
  const Metric m = mass_metric(30);
  const auto sets = random_two_level(30, 4, 12, gen, 0.5);
  AdaptiveOptions o;
  o.frozen_alpha = 1.0;
  const AdaptiveResult a = mfpod_adaptive(sets, 0.99, m, o);
  const MfBasis f = mfpod_fixed(sets, {1.0}, 0.99, m);
  std::vector<Index> order = detail::magnitude_descending_order(f.raw_eigvals);
  for (std::size_t j = 0; j < a.trace.steps.size(); ++j) {
    const Index idx = order[j];
    EXPECT_NEAR(a.trace.steps[j].lambda, f.raw_eigvals(idx), 1e-9 * std::abs(f.raw_eigvals(order[0])));
  }
  // Compare vectors via discovery order in the adaptive basis.
  for (Index k = 0; k < a.basis.mode_count(); ++k) {
    const Index step = a.basis.discovery[static_cast<std::size_t>(k)];
    const Vector v = a.basis.vectors.col(k);
    const Vector w = f.vectors.col(order[static_cast<std::size_t>(step)]);
    EXPECT_NEAR(std::abs(inner(v, w, m)), 1.0, 1e-6);
  }
}

TEST(MfpodAdaptive, RejectsInvalidArguments) {
  std::mt19937_64 gen(68);
  const auto sets = random_two_level(6, 2, 4, gen);
  EXPECT_THROW(mfpod_adaptive(sets, 1.5, Metric::euclidean(6)), std::invalid_argument);
  AdaptiveOptions o;
  o.residual_tol = 0.0;
  EXPECT_THROW(mfpod_adaptive(sets, 0.9, Metric::euclidean(6), o), std::invalid_argument);
}
