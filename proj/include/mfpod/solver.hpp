#pragma once

#include "mfpod/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfpod {

/// Implicit symmetric operator given by its action on blocks of vectors.
struct LinearAction {
  Index dimension = 0;
  std::function<Matrix(const Matrix&)> apply;
  Index rank_bound = 0;

  Vector operator()(const Vector& v) const { return apply(Matrix(v)).col(0); }
};

inline LinearAction wrap_dense(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("wrap_dense: matrix must be square");
  return LinearAction{a.rows(), [a](const Matrix& x) -> Matrix { return a * x; }, a.rows()};
}

struct EigenPairs {
  Vector values;   ///< descending signed order
  Matrix vectors;  ///< orthonormal columns
  Vector residuals;

  Index size() const { return values.size(); }
};

/// Raised when the iterative solver exhausts max_iter; carries the best residuals seen.
class EigenSolveError : public std::runtime_error {
public:
  EigenSolveError(const std::string& what, Vector best_residuals)
      : std::runtime_error(what), best_residuals_(std::move(best_residuals)) {}
  const Vector& best_residuals() const { return best_residuals_; }

private:
  Vector best_residuals_;
};

namespace detail {

/// Index permutation: descending signed value, ties by original index.
inline std::vector<Index> signed_descending_order(const Vector& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) > values(b); });
  return order;
}

inline std::vector<Index> magnitude_descending_order(const Vector& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return std::abs(values(a)) > std::abs(values(b)); });
  return order;
}

inline EigenPairs select_columns(const Vector& values, const Matrix& vectors,
                                 const Vector& residuals, const std::vector<Index>& cols) {
  EigenPairs out;
  const auto k = static_cast<Index>(cols.size());
  out.values.resize(k);
  out.vectors.resize(vectors.rows(), k);
  out.residuals.resize(k);
  for (Index j = 0; j < k; ++j) {
    const Index c = cols[static_cast<std::size_t>(j)];
    out.values(j) = values(c);
    out.vectors.col(j) = vectors.col(c);
    out.residuals(j) = residuals(c);
  }
  return out;
}

/// Euclidean orthonormal basis of span(x) orthogonal to span(q).
inline Matrix orthonormal_complement(const Matrix& x, const Matrix& q, double drop_tol) {
  Matrix y = x;
  if (q.cols() > 0) {
    for (int pass = 0; pass < 2; ++pass) y -= q * (q.transpose() * y);
  }
  const Metric euclid = Metric::euclidean(x.rows());
  return orthonormalize(y, euclid, drop_tol).vectors;
}

} // namespace detail

/// Full spectrum of a symmetric matrix in descending signed order.
inline EigenPairs dense_symmetric_eig(const Matrix& a, Index size_cap = 4096) {
  if (a.rows() != a.cols()) throw DimensionError("dense_symmetric_eig: matrix must be square");
  if (a.rows() > size_cap) throw DimensionError("dense_symmetric_eig: matrix exceeds size cap");
  const double scale = std::max(1.0, a.norm());
  if ((a - a.transpose()).norm() > 1e-10 * scale) {
    throw std::invalid_argument("dense_symmetric_eig: matrix is not symmetric");
  }
  const Index n = a.rows();
  if (n == 0) return EigenPairs{Vector(0), Matrix(0, 0), Vector(0)};

  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  if (eig.info() != Eigen::Success) throw std::runtime_error("dense_symmetric_eig: no convergence");

  const Vector& vals = eig.eigenvalues();
  const Matrix& vecs = eig.eigenvectors();
  const Vector res = (a * vecs - vecs * vals.asDiagonal()).colwise().norm().transpose();
  // Eigen returns ascending order; iterate from the top to keep ties stable.
  Vector reversed = vals.reverse();
  std::vector<Index> order = detail::signed_descending_order(reversed);
  for (auto& i : order) i = n - 1 - i;
  return detail::select_columns(vals, vecs, res, order);
}

enum class LowRankMethod { projection, block_lanczos };

struct LowRankOptions {
  Index want = 0;  ///< 0 means rank_bound
  double tol = 1e-10;
  int max_iter = 50;
  LowRankMethod method = LowRankMethod::projection;
  double scale = 0.0;  ///< magnitude tol is measured against; 0 uses the largest Ritz value
};

namespace detail {

struct RitzResult {
  Vector values;
  Matrix vectors;
  Vector residuals;
};

/// Rayleigh–Ritz on span(q) given aq = A·q.
inline RitzResult rayleigh_ritz(const Matrix& q, const Matrix& aq) {
  if (q.cols() == 0) {
    RitzResult empty;
    empty.vectors = Matrix(q.rows(), 0);
    return empty;
  }
  Matrix t = q.transpose() * aq;
  t = 0.5 * (t + t.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
  if (eig.info() != Eigen::Success) throw std::runtime_error("rayleigh_ritz: no convergence");
  RitzResult r;
  r.values = eig.eigenvalues();
  r.vectors = q * eig.eigenvectors();
  const Matrix ax = aq * eig.eigenvectors();
  r.residuals = (ax - r.vectors * r.values.asDiagonal()).colwise().norm().transpose();
  return r;
}

/// Indices of Ritz pairs that are significant (|θ| > tol·max|θ|), top `want` by |θ|.
inline std::vector<Index> significant(const Vector& values, Index want, double tol, double scale = 0.0) {
  std::vector<Index> order = magnitude_descending_order(values);
  const double top = std::max(scale, values.size() ? std::abs(values(order.front())) : 0.0);
  std::vector<Index> keep;
  for (Index i : order) {
    if (static_cast<Index>(keep.size()) >= want) break;
    if (!(std::abs(values(i)) > tol * top)) break;
    keep.push_back(i);
  }
  return keep;
}

inline bool converged(const RitzResult& r, const std::vector<Index>& keep, double tol, double scale = 0.0) {
  if (keep.empty()) return true;
  const double top = std::max(scale, std::abs(r.values(keep.front())));
  for (Index i : keep) {
    if (r.residuals(i) > tol * top) return false;
  }
  return true;
}

inline EigenPairs finish(const RitzResult& r, std::vector<Index> keep) {
  EigenPairs mag = select_columns(r.values, r.vectors, r.residuals, keep);
  std::vector<Index> order = signed_descending_order(mag.values);
  return select_columns(mag.values, mag.vectors, mag.residuals, order);
}

inline Vector best_residuals(const RitzResult& r, const std::vector<Index>& keep) {
  Vector out(static_cast<Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) out(static_cast<Index>(i)) = r.residuals(keep[i]);
  return out;
}

inline EigenPairs lowrank_projection(const LinearAction& action, const Matrix& init, Index want,
                                     double tol, int max_iter, double scale = 0.0) {
  Matrix q = orthonormal_complement(init, Matrix(init.rows(), 0), 1e-12);
  Matrix aq = action.apply(q);
  RitzResult ritz;
  std::vector<Index> keep;
  for (int iter = 0;; ++iter) {
    ritz = rayleigh_ritz(q, aq);
    keep = significant(ritz.values, want, tol, scale);
    if (converged(ritz, keep, tol, scale)) return finish(ritz, keep);
    if (iter + 1 >= max_iter) break;
    // Init block did not span the range: enrich with the Krylov step A·Q.
    Matrix fresh = orthonormal_complement(aq, q, 1e-12);
    if (fresh.cols() == 0) break;
    Matrix afresh = action.apply(fresh);
    Matrix q2(q.rows(), q.cols() + fresh.cols());
    q2 << q, fresh;
    Matrix aq2(aq.rows(), aq.cols() + afresh.cols());
    aq2 << aq, afresh;
    q = std::move(q2);
    aq = std::move(aq2);
  }
  throw EigenSolveError("lowrank_eig: projected solve did not converge", best_residuals(ritz, keep));
}

/**
 * Block Lanczos with full reorthogonalization. Each step orthogonalizes the
 * new block against every stored Krylov vector; once the Krylov space is
 * invariant, unused init-block columns are injected so the whole init span
 * is covered.
 */
inline EigenPairs lowrank_block_lanczos(const LinearAction& action, const Matrix& init, Index want,
                                        double tol, int max_iter, double scale = 0.0) {
  const Index n = init.rows();
  const Index block = std::max<Index>(1, std::min<Index>(want, 32));
  Matrix pending = orthonormal_complement(init, Matrix(n, 0), 1e-12);

  Matrix q(n, 0);
  Matrix aq(n, 0);
  Matrix current = pending.leftCols(std::min(block, pending.cols()));
  pending = pending.rightCols(pending.cols() - current.cols()).eval();

  RitzResult ritz;
  std::vector<Index> keep;
  for (int iter = 0; iter < max_iter; ++iter) {
    if (current.cols() > 0) {
      const Matrix acur = action.apply(current);
      Matrix q2(n, q.cols() + current.cols());
      q2 << q, current;
      Matrix aq2(n, aq.cols() + acur.cols());
      aq2 << aq, acur;
      q = std::move(q2);
      aq = std::move(aq2);
    }
    if (q.cols() == 0) return EigenPairs{Vector(0), Matrix(n, 0), Vector(0)};

    ritz = rayleigh_ritz(q, aq);
    keep = significant(ritz.values, want, tol, scale);

    // Next block: new Krylov directions from the latest block.
    const Matrix last_a = aq.rightCols(current.cols());
    Matrix next = orthonormal_complement(last_a, q, 1e-12);
    if (next.cols() > block) next = next.leftCols(block).eval();
    const bool invariant = next.cols() == 0;
    if (invariant) {
      // Inject remaining init directions not yet in the Krylov space.
      while (pending.cols() > 0 && next.cols() == 0) {
        const Index take = std::min(block, pending.cols());
        next = orthonormal_complement(pending.leftCols(take), q, 1e-12);
        pending = pending.rightCols(pending.cols() - take).eval();
      }
    }
    if (next.cols() == 0) return finish(ritz, keep);  // whole init span is covered
    if (converged(ritz, keep, tol, scale) && static_cast<Index>(keep.size()) >= want) {
      return finish(ritz, keep);
    }
    current = std::move(next);
  }
  throw EigenSolveError("lowrank_eig: block Lanczos reached max_iter", best_residuals(ritz, keep));
}

} // namespace detail

/**
 * Eigenpairs of a low-rank symmetric action.
 *
 * Returns every pair with |λ| > tol·max|λ| among the top `want` by |λ|, in
 * descending signed order. `init_block` should span the range of the action
 * (the stacked snapshots); with that seed the projected method is exact.
 */
inline EigenPairs lowrank_eig(const LinearAction& action, const Matrix& init_block,
                              LowRankOptions options = {}) {
  detail::require_size(init_block.rows(), action.dimension, "lowrank_eig");
  const Index want = options.want > 0 ? options.want : std::max<Index>(action.rank_bound, 1);
  if (action.rank_bound > 0 && want > action.rank_bound) {
    throw std::invalid_argument("lowrank_eig: want exceeds rank bound");
  }
  if (!(options.tol > 0.0)) throw std::invalid_argument("lowrank_eig: tol must be positive");
  if (!(options.scale >= 0.0)) throw std::invalid_argument("lowrank_eig: scale must be non-negative");
  if (options.max_iter < 1) throw std::invalid_argument("lowrank_eig: max_iter must be >= 1");

  if (options.method == LowRankMethod::block_lanczos) {
    return detail::lowrank_block_lanczos(action, init_block, want, options.tol, options.max_iter,
                                          options.scale);
  }
  return detail::lowrank_projection(action, init_block, want, options.tol, options.max_iter, options.scale);
}

} // namespace mfpod
