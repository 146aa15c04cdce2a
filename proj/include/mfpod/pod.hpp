#pragma once

#include "mfpod/core.hpp"
#include "mfpod/solver.hpp"

#include <algorithm>
#include <cmath>

namespace mfpod {

struct PodResult {
  Vector eigvals;  ///< descending, clamped at zero
  Basis basis;     ///< modes with λ_j > eig_floor·λ_1
  Index gramian_size = 0;
};

namespace detail {

/// Flip each column so its largest-magnitude entry is positive.
inline void fix_signs(Matrix& w) {
  for (Index j = 0; j < w.cols(); ++j) {
    Index imax = 0;
    w.col(j).cwiseAbs().maxCoeff(&imax);
    if (w(imax, j) < 0.0) w.col(j) *= -1.0;
  }
}

} // namespace detail

/**
 * Single-fidelity POD by the method of snapshots.
 *
 * Eigenpairs of the m×m Gramian (1/m)[(u_i, u_j)_W] give the eigenvalues;
 * modes are v_j = S w_j / √(mλ_j), followed by one Gram–Schmidt cleanup pass.
 */
inline PodResult pod(const Matrix& snapshots, const Metric& metric, double eig_floor = 1e-10) {
  detail::require_size(snapshots.rows(), metric.size(), "pod");
  if (snapshots.cols() < 1) throw std::invalid_argument("pod: need at least one snapshot");
  if (eig_floor < 0.0) throw std::invalid_argument("pod: eig_floor must be nonnegative");

  const Index m = snapshots.cols();
  PodResult result;
  result.gramian_size = m;
  if (snapshots.isZero(0.0)) {
    result.eigvals = Vector(0);
    result.basis = Basis::empty(metric);
    return result;
  }

  Matrix gram = snapshots.transpose() * metric.apply(snapshots);
  gram = (0.5 / static_cast<double>(m)) * (gram + gram.transpose()).eval();
  const EigenPairs eig = dense_symmetric_eig(gram, std::max<Index>(m, 4096));

  Matrix w = eig.vectors;
  detail::fix_signs(w);

  Vector lambda = eig.values;
  const double top = std::max(lambda(0), 0.0);
  // The Gramian is PSD; negative values are roundoff.
  lambda = lambda.cwiseMax(0.0);

  Index kept = 0;
  while (kept < m && lambda(kept) > eig_floor * top && lambda(kept) > 0.0) ++kept;

  Matrix modes(snapshots.rows(), kept);
  for (Index j = 0; j < kept; ++j) {
    modes.col(j) = snapshots * w.col(j) / std::sqrt(static_cast<double>(m) * lambda(j));
  }
  // Cleanup pass; near-floor modes lose orthogonality in the Gramian route.
  Matrix wmodes = metric.apply(modes);
  for (Index j = 0; j < kept; ++j) {
    for (Index k = 0; k < j; ++k) {
      const double c = wmodes.col(k).dot(modes.col(j));
      modes.col(j) -= c * modes.col(k);
      wmodes.col(j) -= c * wmodes.col(k);
    }
    const double nrm = std::sqrt(modes.col(j).dot(wmodes.col(j)));
    modes.col(j) /= nrm;
    wmodes.col(j) /= nrm;
  }

  result.eigvals = lambda;
  result.basis = Basis(std::move(modes), metric);
  return result;
}

/// (1/m) Σ_i ‖u_i − Π_V u_i‖²_W.
inline double pod_projection_error(const Basis& basis, const Matrix& snapshots) {
  detail::require_size(snapshots.rows(), basis.ambient(), "pod_projection_error");
  if (snapshots.cols() == 0) throw std::invalid_argument("pod_projection_error: no snapshots");
  return residual_norms_squared(basis, snapshots).sum() / static_cast<double>(snapshots.cols());
}

} // namespace mfpod
