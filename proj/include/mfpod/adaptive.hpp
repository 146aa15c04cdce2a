#pragma once

#include "mfpod/core.hpp"
#include "mfpod/estimator.hpp"
#include "mfpod/mfpod.hpp"
#include "mfpod/solver.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace mfpod {

struct AdaptiveStep {
  Index j = 0;
  double alpha = 0.0;
  double lambda = 0.0;
  double lambda_plus = 0.0;
  double residual = 0.0;  ///< ‖S_0 − Π_W S_0‖_F after appending the mode
  bool corrected = false;
};

struct AdaptiveTrace {
  std::vector<AdaptiveStep> steps;
  double initial_residual = 0.0;
  std::string termination;
};

struct AdaptiveOptions {
  double residual_tol = 1e-10;
  double eig_tol = 1e-10;
  double orthogonality_tol = 1e-8;
  /// Keeps α at this value instead of re-estimating it every iteration.
  std::optional<double> frozen_alpha;
};

struct AdaptiveResult {
  MfBasis basis;
  AdaptiveTrace trace;
};

/**
 * α_1*(W) estimated from the residual energies x_i, y_i of the m_0 shared
 * samples. Low-fidelity variance at roundoff level counts as zero.
 */
inline double adaptive_weight(const Basis& basis_so_far, const std::vector<SnapshotSet>& sets) {
  if (sets.size() != 2) throw std::invalid_argument("adaptive_weight: two-level hierarchy required");
  const VarianceProfile p = estimate_profile(basis_so_far, sets);
  const Index m0 = sets[0].sample_count();
  const double scale = column_norms_squared(sets[1].shared.leftCols(m0), basis_so_far.metric).mean();
  if (!(p.sigma2[1] > 1e-24 * scale * scale)) return 0.0;
  return p.cov0[0] / p.sigma2[1];
}

/**
 * Greedy MFPOD with re-estimated weights: each iteration updates α_1 on the
 * current residuals, then appends the eigenpair of largest |λ| of the
 * operator deflated against the modes found so far.
 */
inline AdaptiveResult mfpod_adaptive(const std::vector<SnapshotSet>& sets, double kappa,
                                     const Metric& metric, AdaptiveOptions options = {}) {
  validate_hierarchy(sets);
  if (sets.size() != 2) throw std::invalid_argument("mfpod_adaptive: two-level hierarchy required");
  if (!(kappa > 0.0 && kappa < 1.0)) throw std::invalid_argument("mfpod_adaptive: kappa must lie in (0, 1)");
  if (!(options.residual_tol > 0.0)) throw std::invalid_argument("mfpod_adaptive: residual_tol must be positive");

  const Index n = metric.size();
  const Matrix& s0 = sets[0].shared;
  const double s0_norm = std::sqrt(column_norms_squared(s0, metric).sum());

  const MfOperator probe(sets, {0.0}, metric);
  const Basis span = orthonormalize(probe.stacked(), metric);
  const Index max_modes = span.dim();

  Matrix w(n, 0);         // modes, original coordinates
  Matrix w_coords(n, 0);  // Fᵀ·modes, Euclidean orthonormal
  std::vector<double> raw;
  std::vector<Correction> corr;
  std::vector<Index> discovery;

  AdaptiveResult result;
  auto& trace = result.trace;
  auto residual_of = [&](const Matrix& modes) {
    return std::sqrt(residual_norms_squared(Basis(modes, metric), s0).sum());
  };
  double residual = residual_of(w);
  double scale = 0.0;  // |λ| of the first pick; later solves measure tolerances against it
  trace.initial_residual = residual;

  for (Index j = 0;; ++j) {
    if (residual <= options.residual_tol * s0_norm) {
      trace.termination = "high-fidelity snapshots resolved";
      break;
    }
    if (j >= max_modes) {
      trace.termination = "rank of stacked snapshots reached";
      break;
    }

    const double alpha = options.frozen_alpha ? *options.frozen_alpha : adaptive_weight(Basis(w, metric), sets);
    const MfOperator op(sets, {alpha}, metric);
    const LinearAction base = op.coordinate_action();
    const Matrix q = w_coords;
    auto deflate = [q](Matrix y) {
      if (q.cols() > 0) y -= q * (q.transpose() * y);
      return y;
    };
    const LinearAction deflated{n, [base, deflate](const Matrix& y) { return deflate(base.apply(deflate(y))); },
                                base.rank_bound};

    LowRankOptions lo;
    lo.want = std::max<Index>(op.total_columns(), 1);
    lo.tol = options.eig_tol;
    lo.scale = scale;
    const EigenPairs eig = lowrank_eig(deflated, deflate(op.stacked_coordinates()), lo);
    if (eig.size() == 0) {
      trace.termination = "deflated operator is zero";
      break;
    }
    Index pick = 0;
    for (Index k = 1; k < eig.size(); ++k) {
      if (std::abs(eig.values(k)) > std::abs(eig.values(pick))) pick = k;
    }
    if (j == 0) scale = std::abs(eig.values(pick));

    Vector y = deflate(eig.vectors.col(pick));
    y.normalize();
    const Vector v = metric.from_coords(Matrix(y)).col(0);
    const Correction c = correct_eigenvalue(eig.values(pick), v, s0, span, options.orthogonality_tol);

    Matrix w2(n, w.cols() + 1);
    w2 << w, v;
    Matrix wc2(n, w_coords.cols() + 1);
    wc2 << w_coords, y;
    w = std::move(w2);
    w_coords = std::move(wc2);
    raw.push_back(eig.values(pick));
    corr.push_back(c);
    discovery.push_back(j);

    const double next = residual_of(w);
    trace.steps.push_back(
        AdaptiveStep{j, alpha, eig.values(pick), c.value, next, c.branch != CorrectionBranch::positive});
    if (!(residual - next > 1e-14 * s0_norm)) {
      residual = next;
      trace.termination = "stagnation: residual did not decrease";
      break;
    }
    residual = next;
  }

  MfBasis& out = result.basis;
  out.metric = metric;
  const Vector raw_vec = Eigen::Map<const Vector>(raw.data(), static_cast<Index>(raw.size()));
  detail::order_and_select(out, raw_vec, w, corr, discovery, kappa);
  if (!trace.termination.empty() && trace.termination.rfind("stagnation", 0) == 0) {
    out.diagnostic = trace.termination;
  }
  return result;
}

} // namespace mfpod
