#pragma once

#include "mfpod/core.hpp"
#include "mfpod/solver.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace mfpod {

/**
 * Implicit multifidelity second-moment operator
 *
 *   C v = (1/m_0) S_0 S_0ᵀ W v
 *       + Σ_ℓ [ (α_ℓ/m_ℓ − α_ℓ/m_{ℓ−1}) S_ℓ S_ℓᵀ W v + (α_ℓ/m_ℓ) S_{ℓ,+} S_{ℓ,+}ᵀ W v ].
 *
 * Stored as weighted snapshot blocks; the n×n matrix is never formed except
 * by assemble() for small-n checks.
 */
class MfOperator {
public:
  struct Term {
    double coefficient;
    Matrix block;        ///< snapshots, original coordinates
    Matrix coordinates;  ///< Fᵀ·block
  };

  MfOperator(std::vector<SnapshotSet> sets, std::vector<double> alpha, Metric metric)
      : sets_(std::move(sets)), alpha_(std::move(alpha)), metric_(std::move(metric)) {
    validate_hierarchy(sets_);
    if (alpha_.size() + 1 != sets_.size()) throw DimensionError("MfOperator: need one weight per low-fidelity level");
    detail::require_size(sets_.front().rows(), metric_.size(), "MfOperator");

    const std::vector<Index> m = sample_sizes(sets_);
    add_term(1.0 / static_cast<double>(m[0]), sets_[0].shared);
    for (std::size_t l = 1; l < sets_.size(); ++l) {
      const double a = alpha_[l - 1];
      const auto ml = static_cast<double>(m[l]);
      const auto mprev = static_cast<double>(m[l - 1]);
      add_term(a / ml - a / mprev, sets_[l].shared);
      add_term(a / ml, sets_[l].extra);
    }
  }

  Index dimension() const { return metric_.size(); }
  const Metric& metric() const { return metric_; }
  const std::vector<SnapshotSet>& sets() const { return sets_; }
  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<Term>& terms() const { return *terms_; }
  Index m0() const { return sets_.front().sample_count(); }

  /// C·x in original coordinates.
  Matrix apply(const Matrix& x) const {
    detail::require_size(x.rows(), dimension(), "MfOperator::apply");
    const Matrix wx = metric_.apply(x);
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (const auto& t : *terms_) out.noalias() += t.coefficient * (t.block * (t.block.transpose() * wx));
    return out;
  }

  Vector apply(const Vector& v) const { return apply(Matrix(v)).col(0); }

  /// Symmetric action y ↦ Σ c Y (Yᵀ y) in metric coordinates y = Fᵀx.
  LinearAction coordinate_action() const {
    std::shared_ptr<const std::vector<Term>> terms = terms_;
    return LinearAction{dimension(),
                        [terms](const Matrix& y) -> Matrix {
                          Matrix out = Matrix::Zero(y.rows(), y.cols());
                          for (const auto& t : *terms) {
                            out.noalias() += t.coefficient * (t.coordinates * (t.coordinates.transpose() * y));
                          }
                          return out;
                        },
                        total_columns()};
  }

  /// [S_0, S_1, S_{1,+}, …] in original coordinates.
  Matrix stacked() const { return stack(false); }
  /// Same in metric coordinates.
  Matrix stacked_coordinates() const { return stack(true); }

  Index total_columns() const {
    Index k = 0;
    for (const auto& t : *terms_) k += t.block.cols();
    return k;
  }

  /// Explicit n×n matrix of the action (original coordinates, C = Σ c S Sᵀ W).
  Matrix assemble() const {
    Matrix c = Matrix::Zero(dimension(), dimension());
    for (const auto& t : *terms_) c.noalias() += t.coefficient * (t.block * t.block.transpose());
    return metric_.is_euclidean() ? c : Matrix(c * metric_.weight());
  }

  /// Explicit symmetric matrix in metric coordinates (Fᵀ C F⁻ᵀ).
  Matrix assemble_coordinates() const {
    Matrix c = Matrix::Zero(dimension(), dimension());
    for (const auto& t : *terms_) c.noalias() += t.coefficient * (t.coordinates * t.coordinates.transpose());
    return c;
  }

private:
  void add_term(double coefficient, const Matrix& block) {
    if (block.cols() == 0) return;
    terms_->push_back(Term{coefficient, block, metric_.to_coords(block)});
  }

  Matrix stack(bool coords) const {
    Matrix s(dimension(), total_columns());
    Index at = 0;
    for (const auto& t : *terms_) {
      s.middleCols(at, t.block.cols()) = coords ? t.coordinates : t.block;
      at += t.block.cols();
    }
    return s;
  }

  std::vector<SnapshotSet> sets_;
  std::vector<double> alpha_;
  Metric metric_;
  std::shared_ptr<std::vector<Term>> terms_ = std::make_shared<std::vector<Term>>();
};

inline MfOperator build_operator(std::vector<SnapshotSet> sets, std::vector<double> alpha,
                                 const Metric& metric) {
  return MfOperator(std::move(sets), std::move(alpha), metric);
}

enum class CorrectionBranch { positive, orthogonal, monte_carlo };

struct Correction {
  double value = 0.0;
  CorrectionBranch branch = CorrectionBranch::positive;
};

/// λ⁺: λ if λ > 0; 0 if v ⊥ span(S) (‖Π_S v‖_W ≤ tol); else (1/m_0) Σ_i (u_0(θ_i), v)²_W.
inline Correction correct_eigenvalue(double lambda, const Vector& v, const Matrix& s0,
                                     const Basis& snapshot_span, double tol = 1e-8) {
  if (lambda > 0.0) return {lambda, CorrectionBranch::positive};
  const Vector pv = project(snapshot_span, v);
  if (std::sqrt(std::max(0.0, norm_squared(pv, snapshot_span.metric))) <= tol) {
    return {0.0, CorrectionBranch::orthogonal};
  }
  const Vector c = s0.transpose() * snapshot_span.metric.apply(Matrix(v)).col(0);
  return {c.squaredNorm() / static_cast<double>(s0.cols()), CorrectionBranch::monte_carlo};
}

/// Scalar form taking the raw stacked snapshot matrix.
inline double correct_eigenvalue(double lambda, const Vector& v, const Matrix& s0, const Matrix& s_all,
                                 const Metric& metric, double tol = 1e-8) {
  return correct_eigenvalue(lambda, v, s0, orthonormalize(s_all, metric), tol).value;
}

/// Ordered multifidelity modes with corrected eigenvalues and the κ-selected dimension.
struct MfBasis {
  Vector raw_eigvals;  ///< λ_j, may be negative
  Vector corrected;    ///< λ_j⁺, descending
  Matrix vectors;      ///< metric-orthonormal, same order
  Metric metric;
  std::vector<CorrectionBranch> branches;
  std::vector<Index> discovery;  ///< index in the solver's signed-descending output
  Index r = 0;
  Index nonzero_count = 0;  ///< modes with λ⁺ > 1e-10·λ_1⁺
  double kappa = 0.0;
  Index correction_count = 0;  ///< raw λ ≤ 0 corrected by Monte Carlo
  Index orthogonal_count = 0;  ///< raw λ ≤ 0 with v ⊥ S
  double energy_fraction = 0.0;
  std::string diagnostic;

  Index mode_count() const { return vectors.cols(); }
  Basis basis() const { return Basis(vectors.leftCols(r), metric); }
  Basis modes(Index k) const { return Basis(vectors.leftCols(std::min(k, mode_count())), metric); }
};

/// Minimal r with Σ_{j≤r} λ⁺ ≥ κ Σ_j λ⁺ over the first `count` values.
inline Index select_dimension(const Vector& corrected, Index count, double kappa) {
  const double total = corrected.head(count).sum();
  if (!(total > 0.0)) return 0;
  double partial = 0.0;
  for (Index r = 0; r < count; ++r) {
    partial += corrected(r);
    if (partial >= kappa * total) return r + 1;
  }
  return count;
}

namespace detail {

/// Orders modes by λ⁺ (ties: raw λ, then discovery), counts nonzeros, picks r.
inline void order_and_select(MfBasis& out, const Vector& raw, const Matrix& vectors,
                             const std::vector<Correction>& corr, const std::vector<Index>& discovery,
                             double kappa) {
  const auto k = static_cast<Index>(corr.size());
  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ca = corr[static_cast<std::size_t>(a)].value;
    const double cb = corr[static_cast<std::size_t>(b)].value;
    if (ca != cb) return ca > cb;
    if (raw(a) != raw(b)) return raw(a) > raw(b);
    return discovery[static_cast<std::size_t>(a)] < discovery[static_cast<std::size_t>(b)];
  });

  out.raw_eigvals.resize(k);
  out.corrected.resize(k);
  out.vectors.resize(vectors.rows(), k);
  out.branches.clear();
  out.discovery.clear();
  out.correction_count = 0;
  out.orthogonal_count = 0;
  for (Index j = 0; j < k; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    const auto& c = corr[static_cast<std::size_t>(src)];
    out.raw_eigvals(j) = raw(src);
    out.corrected(j) = c.value;
    out.vectors.col(j) = vectors.col(src);
    out.branches.push_back(c.branch);
    out.discovery.push_back(discovery[static_cast<std::size_t>(src)]);
    if (c.branch == CorrectionBranch::monte_carlo) ++out.correction_count;
    if (c.branch == CorrectionBranch::orthogonal) ++out.orthogonal_count;
  }

  const double top = k > 0 ? out.corrected(0) : 0.0;
  out.nonzero_count = 0;
  while (out.nonzero_count < k && out.corrected(out.nonzero_count) > 1e-10 * top &&
         out.corrected(out.nonzero_count) > 0.0) {
    ++out.nonzero_count;
  }
  out.kappa = kappa;
  out.r = select_dimension(out.corrected, out.nonzero_count, kappa);
  const double total = out.corrected.head(out.nonzero_count).sum();
  out.energy_fraction = total > 0.0 ? out.corrected.head(out.r).sum() / total : 0.0;
  if (out.r == 0) out.diagnostic = "all corrected eigenvalues are zero; basis is empty";
}

} // namespace detail

struct MfpodOptions {
  double eig_tol = 1e-10;
  double orthogonality_tol = 1e-8;
  LowRankMethod method = LowRankMethod::projection;
  int max_iter = 50;
};

/**
 * Discrete MFPOD with fixed weights: eigensolve of the implicit operator
 * seeded with the stacked snapshots, λ⁺ correction, reorder by λ⁺, and the
 * cumulative-energy choice of r.
 */
inline MfBasis mfpod_fixed(const MfOperator& op, double kappa, MfpodOptions options = {}) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw std::invalid_argument("mfpod_fixed: kappa must lie in (0, 1)");
  const Metric& metric = op.metric();

  const Matrix init = op.stacked_coordinates();
  LowRankOptions lo;
  lo.want = std::max<Index>(op.total_columns(), 1);
  lo.tol = options.eig_tol;
  lo.method = options.method;
  lo.max_iter = options.max_iter;
  const EigenPairs eig = lowrank_eig(op.coordinate_action(), init, lo);

  const Matrix vectors = metric.from_coords(eig.vectors);
  const Basis span = orthonormalize(op.stacked(), metric);
  const Matrix& s0 = op.sets().front().shared;

  std::vector<Correction> corr;
  std::vector<Index> discovery;
  for (Index j = 0; j < eig.size(); ++j) {
    corr.push_back(correct_eigenvalue(eig.values(j), vectors.col(j), s0, span, options.orthogonality_tol));
    discovery.push_back(j);
  }

  MfBasis out;
  out.metric = metric;
  detail::order_and_select(out, eig.values, vectors, corr, discovery, kappa);
  return out;
}

inline MfBasis mfpod_fixed(std::vector<SnapshotSet> sets, std::vector<double> alpha, double kappa,
                           const Metric& metric, MfpodOptions options = {}) {
  const MfOperator op(std::move(sets), std::move(alpha), metric);
  return mfpod_fixed(op, kappa, options);
}

/// Σ_j λ_j⁺ (1 − ‖Π_V v_j‖²_W).
inline double jmf_plus(const MfBasis& mf, const Basis& candidate) {
  if (mf.mode_count() == 0) return 0.0;
  const Vector captured = column_norms_squared(project(candidate, mf.vectors), mf.metric);
  return (mf.corrected.array() * (1.0 - captured.array())).sum();
}

/// Σ_j λ_j (1 − ‖Π_V v_j‖²_W) with the raw eigenvalues; equals j_mf(V).
inline double spectral_cost(const MfBasis& mf, const Basis& candidate) {
  if (mf.mode_count() == 0) return 0.0;
  const Vector captured = column_norms_squared(project(candidate, mf.vectors), mf.metric);
  return (mf.raw_eigvals.array() * (1.0 - captured.array())).sum();
}

/// Span of the r modes with the largest raw (signed) eigenvalues.
inline Basis signed_basis(const MfBasis& mf, Index r) {
  const std::vector<Index> order = detail::signed_descending_order(mf.raw_eigvals);
  const Index k = std::min<Index>(r, mf.mode_count());
  Matrix v(mf.vectors.rows(), k);
  for (Index j = 0; j < k; ++j) v.col(j) = mf.vectors.col(order[static_cast<std::size_t>(j)]);
  return Basis(std::move(v), mf.metric);
}

} // namespace mfpod
