#pragma once

#include "mfpod/core.hpp"
#include "mfpod/pod.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mfpod {

/// Variances σ_ℓ²(V) (ℓ = 0..L) and covariances σ_{0,ℓ}(V) (index ℓ−1 for ℓ = 1..L).
struct VarianceProfile {
  std::vector<double> sigma2;
  std::vector<double> cov0;
  Index sample_count = 0;

  std::size_t levels() const { return cov0.size(); }
};

/// Sample sizes, control-variate weights and per-sample costs of a multifidelity estimate.
struct Allocation {
  std::vector<Index> m;
  std::vector<double> alpha;
  std::vector<double> costs;

  double total_cost() const {
    double c = 0.0;
    for (std::size_t l = 0; l < m.size(); ++l) c += static_cast<double>(m[l]) * costs[l];
    return c;
  }

  void validate() const {
    if (m.empty() || alpha.size() + 1 != m.size() || costs.size() != m.size()) {
      throw DimensionError("Allocation: need L+1 sample sizes/costs and L weights");
    }
    if (m[0] < 1) throw std::invalid_argument("Allocation: m_0 must be positive");
    for (std::size_t l = 1; l < m.size(); ++l) {
      if (m[l] <= m[l - 1]) throw std::invalid_argument("Allocation: sample sizes must increase");
    }
  }
};

/// Allocation matching a snapshot hierarchy with the given weights.
inline Allocation allocation_for(const std::vector<SnapshotSet>& sets, std::vector<double> alpha) {
  Allocation a;
  a.m = sample_sizes(sets);
  a.alpha = std::move(alpha);
  for (const auto& s : sets) a.costs.push_back(s.cost_per_sample);
  a.validate();
  return a;
}

/// Monte Carlo cost (1/m) Σ ‖u_i − Π_V u_i‖²_W; same computation as pod_projection_error.
inline double j_mc(const Basis& basis, const Matrix& hf_snapshots) {
  return pod_projection_error(basis, hf_snapshots);
}

/**
 * Multifidelity cost: (1/m_0) Σ e_0 + Σ_ℓ α_ℓ [ (1/m_ℓ) Σ_{i≤m_ℓ} e_ℓ − (1/m_{ℓ−1}) Σ_{i≤m_{ℓ−1}} e_ℓ ]
 * with e_ℓ(i) = ‖u_ℓ(θ_i) − Π_V u_ℓ(θ_i)‖²_W. May be negative.
 */
inline double j_mf(const Basis& basis, const std::vector<SnapshotSet>& sets, const Allocation& alloc) {
  validate_hierarchy(sets);
  alloc.validate();
  if (alloc.m != sample_sizes(sets)) throw DimensionError("j_mf: allocation does not match sets");

  double value = residual_norms_squared(basis, sets[0].shared).mean();
  for (std::size_t l = 1; l < sets.size(); ++l) {
    const double a = alloc.alpha[l - 1];
    if (a == 0.0) continue;
    const double shared = residual_norms_squared(basis, sets[l].shared).sum();
    const double extra = residual_norms_squared(basis, sets[l].extra).sum();
    const auto ml = static_cast<double>(alloc.m[l]);
    const auto mprev = static_cast<double>(alloc.m[l - 1]);
    value += a * ((shared + extra) / ml - shared / mprev);
  }
  return value;
}

/// σ_0²/m_0 + Σ_ℓ (1/m_{ℓ−1} − 1/m_ℓ)(α_ℓ²σ_ℓ² − 2α_ℓσ_{0,ℓ}).
inline double mf_mse(const VarianceProfile& profile, const Allocation& alloc) {
  alloc.validate();
  if (profile.sigma2.size() != alloc.m.size() || profile.cov0.size() + 1 != alloc.m.size()) {
    throw DimensionError("mf_mse: profile and allocation disagree on L");
  }
  double mse = profile.sigma2[0] / static_cast<double>(alloc.m[0]);
  for (std::size_t l = 1; l < alloc.m.size(); ++l) {
    const double a = alloc.alpha[l - 1];
    const double dm = 1.0 / static_cast<double>(alloc.m[l - 1]) - 1.0 / static_cast<double>(alloc.m[l]);
    mse += dm * (a * a * profile.sigma2[l] - 2.0 * a * profile.cov0[l - 1]);
  }
  return mse;
}

/// α*_ℓ = σ_{0,ℓ}/σ_ℓ², or 0 when σ_ℓ² = 0.
inline std::vector<double> optimal_alpha(const VarianceProfile& profile) {
  std::vector<double> alpha(profile.cov0.size(), 0.0);
  for (std::size_t l = 0; l < alpha.size(); ++l) {
    const double var = profile.sigma2.at(l + 1);
    alpha[l] = var > 0.0 ? profile.cov0[l] / var : 0.0;
  }
  return alpha;
}

/// MSE at α = α*; never exceeds σ_0²/m_0.
inline double min_mse(const VarianceProfile& profile, const Allocation& alloc) {
  alloc.validate();
  if (profile.sigma2.size() != alloc.m.size() || profile.cov0.size() + 1 != alloc.m.size()) {
    throw DimensionError("min_mse: profile and allocation disagree on L");
  }
  double mse = profile.sigma2[0] / static_cast<double>(alloc.m[0]);
  for (std::size_t l = 1; l < alloc.m.size(); ++l) {
    const double var = profile.sigma2[l];
    if (var == 0.0) continue;
    const double dm = 1.0 / static_cast<double>(alloc.m[l - 1]) - 1.0 / static_cast<double>(alloc.m[l]);
    mse -= dm * profile.cov0[l - 1] * profile.cov0[l - 1] / var;
  }
  return mse;
}

/**
 * True iff the optimally weighted multifidelity estimate beats plain Monte
 * Carlo with m_mc high-fidelity samples at equal budget:
 * 1 − Σ_ℓ (m_0/m_{ℓ−1} − m_0/m_ℓ) σ_{0,ℓ}²/σ_ℓ² < m_0/m_mc.
 * Levels with σ_ℓ² = 0 contribute nothing. σ_0² is taken as the
 * normalization, so covariances are divided by it when it is positive.
 */
inline bool usefulness(const VarianceProfile& profile, const Allocation& alloc, Index m_mc) {
  alloc.validate();
  if (m_mc < 1) throw std::invalid_argument("usefulness: m_mc must be positive");
  const double m0 = static_cast<double>(alloc.m[0]);
  const double s0 = profile.sigma2.at(0);
  const double norm = s0 > 0.0 ? s0 : 1.0;
  double lhs = 1.0;
  for (std::size_t l = 1; l < alloc.m.size(); ++l) {
    const double var = profile.sigma2.at(l);
    if (var == 0.0) continue;
    const double dm = m0 / static_cast<double>(alloc.m[l - 1]) - m0 / static_cast<double>(alloc.m[l]);
    lhs -= dm * profile.cov0.at(l - 1) * profile.cov0.at(l - 1) / (var * norm);
  }
  return lhs < m0 / static_cast<double>(m_mc);
}

namespace detail {

inline double sample_covariance(const Vector& x, const Vector& y) {
  const Index m = x.size();
  if (m < 2) return 0.0;
  const double mx = x.mean();
  const double my = y.mean();
  return ((x.array() - mx) * (y.array() - my)).sum() / static_cast<double>(m - 1);
}

} // namespace detail

/// Residual-energy statistics on the m_0 samples shared by every level.
inline VarianceProfile estimate_profile(const Basis& basis, const std::vector<SnapshotSet>& sets) {
  validate_hierarchy(sets);
  const Index m0 = sets[0].sample_count();
  VarianceProfile p;
  p.sample_count = m0;
  const Vector x = residual_norms_squared(basis, sets[0].shared);
  p.sigma2.push_back(detail::sample_covariance(x, x));
  for (std::size_t l = 1; l < sets.size(); ++l) {
    // The first m_0 columns of every level are the shared high-fidelity samples.
    const Vector y = residual_norms_squared(basis, sets[l].shared.leftCols(m0));
    p.sigma2.push_back(detail::sample_covariance(y, y));
    p.cov0.push_back(detail::sample_covariance(x, y));
  }
  return p;
}

} // namespace mfpod
