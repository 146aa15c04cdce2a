#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfpod {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Thrown when operand sizes do not agree.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when snapshot sets violate the sample-sharing hierarchy.
class SharingError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_size(Index got, Index expected, const char* what) {
  if (got != expected) {
    throw DimensionError(std::string(what) + ": expected size " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

} // namespace detail

/**
 * Symmetric positive-definite inner-product weight.
 *
 * A weighted metric stores W and its lower-triangular Cholesky factor F with
 * F·Fᵀ = W (natural ordering, no permutation). Euclidean metrics store the
 * identity. Copies share the underlying storage.
 */
class Metric {
public:
  enum class Kind { euclidean, weighted };

  Metric() : Metric(euclidean(0)) {}

  static Metric euclidean(Index n) {
    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::euclidean;
    impl->n = n;
    impl->weight.resize(n, n);
    impl->weight.setIdentity();
    impl->factor = impl->weight;
    impl->factor_t = impl->weight;
    return Metric(std::move(impl));
  }

  static Metric weighted(SparseMatrix weight) {
    if (weight.rows() != weight.cols()) {
      throw DimensionError("Metric: weight matrix must be square");
    }
    weight.makeCompressed();
    const double norm = weight.norm();
    SparseMatrix transposed = weight.transpose();
    const double asym = (weight - transposed).norm();
    if (!(norm > 0.0) || asym > 1e-12 * norm) {
      throw std::invalid_argument("Metric: weight matrix is not symmetric");
    }

    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt(weight);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("Metric: weight matrix is not positive definite");
    }

    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::weighted;
    impl->n = weight.rows();
    impl->factor = llt.matrixL();
    impl->factor.makeCompressed();
    for (Index k = 0; k < impl->factor.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(impl->factor, k); it; ++it) {
        if (it.row() == it.col() && !(it.value() > 0.0)) {
          throw std::invalid_argument("Metric: non-positive Cholesky pivot");
        }
      }
    }
    impl->factor_t = impl->factor.transpose();
    impl->factor_t.makeCompressed();
    impl->weight = std::move(weight);
    return Metric(std::move(impl));
  }

  Kind kind() const { return impl_->kind; }
  bool is_euclidean() const { return impl_->kind == Kind::euclidean; }
  Index size() const { return impl_->n; }
  const SparseMatrix& weight() const { return impl_->weight; }
  const SparseMatrix& factor() const { return impl_->factor; }

  /// W·x, columnwise.
  Matrix apply(const Matrix& x) const {
    detail::require_size(x.rows(), size(), "Metric::apply");
    if (is_euclidean()) return x;
    return impl_->weight * x;
  }

  /// Fᵀ·x: maps a state to coordinates in which the metric is Euclidean.
  Matrix to_coords(const Matrix& x) const {
    detail::require_size(x.rows(), size(), "Metric::to_coords");
    if (is_euclidean()) return x;
    return impl_->factor_t * x;
  }

  /// F⁻ᵀ·y: inverse of to_coords.
  Matrix from_coords(const Matrix& y) const {
    detail::require_size(y.rows(), size(), "Metric::from_coords");
    if (is_euclidean()) return y;
    return impl_->factor_t.triangularView<Eigen::Upper>().solve(y);
  }

  bool same_as(const Metric& other) const { return impl_ == other.impl_; }

private:
  struct Impl {
    Kind kind = Kind::euclidean;
    Index n = 0;
    SparseMatrix weight;
    SparseMatrix factor;
    SparseMatrix factor_t;
  };

  explicit Metric(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<const Impl> impl_;
};

/// uᵀWv.
inline double inner(const Vector& u, const Vector& v, const Metric& metric) {
  detail::require_size(u.size(), metric.size(), "inner");
  detail::require_size(v.size(), metric.size(), "inner");
  if (metric.is_euclidean()) return u.dot(v);
  return u.dot(metric.weight() * v);
}

inline double norm_squared(const Vector& u, const Metric& metric) { return inner(u, u, metric); }

/// Squared metric norm of every column.
inline Vector column_norms_squared(const Matrix& x, const Metric& metric) {
  detail::require_size(x.rows(), metric.size(), "column_norms_squared");
  if (metric.is_euclidean()) return x.colwise().squaredNorm().transpose();
  const Matrix wx = metric.apply(x);
  return x.cwiseProduct(wx).colwise().sum().transpose();
}

/// Metric-orthonormal set of column vectors.
struct Basis {
  Matrix vectors;
  Metric metric;

  Basis() = default;
  Basis(Matrix v, Metric m) : vectors(std::move(v)), metric(std::move(m)) {
    detail::require_size(vectors.rows(), metric.size(), "Basis");
  }

  static Basis empty(const Metric& metric) { return Basis(Matrix(metric.size(), 0), metric); }

  Index dim() const { return vectors.cols(); }
  Index ambient() const { return vectors.rows(); }

  /// First k columns.
  Basis leading(Index k) const {
    if (k < 0 || k > dim()) throw DimensionError("Basis::leading: k out of range");
    return Basis(vectors.leftCols(k), metric);
  }

  /// ‖VᵀWV − I‖_F.
  double orthonormality_error() const {
    const Matrix g = vectors.transpose() * metric.apply(vectors);
    return (g - Matrix::Identity(dim(), dim())).norm();
  }
};

/// Π_V x = V Vᵀ W x for every column of x.
inline Matrix project(const Basis& basis, const Matrix& x) {
  detail::require_size(x.rows(), basis.ambient(), "project");
  if (basis.dim() == 0) return Matrix::Zero(x.rows(), x.cols());
  return basis.vectors * (basis.vectors.transpose() * basis.metric.apply(x));
}

inline Vector project(const Basis& basis, const Vector& u) {
  return project(basis, Matrix(u)).col(0);
}

/// Squared metric norms of the columns of x − Π_V x.
inline Vector residual_norms_squared(const Basis& basis, const Matrix& x) {
  return column_norms_squared(x - project(basis, x), basis.metric);
}

/**
 * Modified Gram–Schmidt with one reorthogonalization pass.
 *
 * Columns whose residual norm falls below tol × (largest input column norm)
 * are dropped, so the result may have fewer than k columns.
 */
inline Basis orthonormalize(const Matrix& vectors, const Metric& metric, double tol = 1e-12) {
  if (!(tol > 0.0)) throw std::invalid_argument("orthonormalize: tol must be positive");
  detail::require_size(vectors.rows(), metric.size(), "orthonormalize");

  const Index n = vectors.rows();
  const Vector norms = column_norms_squared(vectors, metric).cwiseSqrt();
  const double scale = norms.size() > 0 ? norms.maxCoeff() : 0.0;
  if (!(scale > 0.0)) return Basis::empty(metric);

  Matrix q(n, vectors.cols());
  Matrix wq(n, vectors.cols());
  Index rank = 0;
  for (Index j = 0; j < vectors.cols(); ++j) {
    Vector x = vectors.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Index k = 0; k < rank; ++k) {
        x.noalias() -= wq.col(k).dot(x) * q.col(k);
      }
    }
    Vector wx = metric.is_euclidean() ? x : Vector(metric.weight() * x);
    const double nrm = std::sqrt(std::max(0.0, x.dot(wx)));
    if (nrm <= tol * scale) continue;
    q.col(rank) = x / nrm;
    wq.col(rank) = wx / nrm;
    ++rank;
  }
  return Basis(q.leftCols(rank), metric);
}

/**
 * Snapshots of one fidelity level.
 *
 * Level 0 keeps its m_0 columns in `shared` and has no `extra` block. Level
 * ℓ ≥ 1 keeps the states at the m_{ℓ−1} samples shared with level ℓ−1 in
 * `shared` and the m_ℓ − m_{ℓ−1} additional samples in `extra`.
 * `sample_ids` lists the parameter index of every column, shared first.
 */
struct SnapshotSet {
  int level = 0;
  Matrix shared;
  Matrix extra;
  std::vector<std::size_t> sample_ids;
  double cost_per_sample = 1.0;

  Index rows() const { return shared.rows(); }
  Index sample_count() const { return shared.cols() + extra.cols(); }

  /// [shared, extra].
  Matrix combined() const {
    Matrix all(shared.rows(), sample_count());
    all << shared, extra;
    return all;
  }
};

namespace detail {

inline std::vector<std::size_t> iota_ids(std::size_t begin, std::size_t count) {
  std::vector<std::size_t> ids(count);
  for (std::size_t i = 0; i < count; ++i) ids[i] = begin + i;
  return ids;
}

} // namespace detail

/// Level-0 set with sample ids 0..m_0−1.
inline SnapshotSet make_high_fidelity_set(Matrix s0, double cost = 1.0) {
  SnapshotSet set;
  set.level = 0;
  set.sample_ids = detail::iota_ids(0, static_cast<std::size_t>(s0.cols()));
  set.extra = Matrix(s0.rows(), 0);
  set.shared = std::move(s0);
  set.cost_per_sample = cost;
  return set;
}

/// Level-ℓ set whose columns are samples 0..m_ℓ−1; the first `shared_count` are shared.
inline SnapshotSet make_level_set(int level, const Matrix& states, Index shared_count, double cost) {
  if (shared_count < 0 || shared_count > states.cols()) {
    throw DimensionError("make_level_set: shared count out of range");
  }
  SnapshotSet set;
  set.level = level;
  set.shared = states.leftCols(shared_count);
  set.extra = states.rightCols(states.cols() - shared_count);
  set.sample_ids = detail::iota_ids(0, static_cast<std::size_t>(states.cols()));
  set.cost_per_sample = cost;
  return set;
}

/// Two-level hierarchy from S_0 (n×m_0) and all m_1 low-fidelity states (n×m_1).
inline std::vector<SnapshotSet> make_two_level(const Matrix& s0, const Matrix& low, double c0 = 1.0,
                                               double c1 = 0.1) {
  return {make_high_fidelity_set(s0, c0), make_level_set(1, low, s0.cols(), c1)};
}

/// Sample sizes m_0 < m_1 < … < m_L of a hierarchy.
inline std::vector<Index> sample_sizes(const std::vector<SnapshotSet>& sets) {
  std::vector<Index> m;
  m.reserve(sets.size());
  for (const auto& s : sets) m.push_back(s.sample_count());
  return m;
}

/**
 * Checks the sharing invariants: levels are numbered 0..L, sizes are strictly
 * increasing, every level's shared block has m_{ℓ−1} columns whose sample ids
 * equal level ℓ−1's ids, and costs satisfy c_0 > c_1 ≥ … ≥ c_L > 0.
 */
inline void validate_hierarchy(const std::vector<SnapshotSet>& sets) {
  if (sets.empty()) throw SharingError("snapshot hierarchy is empty");
  const Index n = sets.front().rows();
  for (std::size_t l = 0; l < sets.size(); ++l) {
    const auto& s = sets[l];
    if (s.level != static_cast<int>(l)) throw SharingError("snapshot levels must be numbered 0..L");
    if (s.shared.rows() != n || s.extra.rows() != n) {
      throw DimensionError("snapshot sets have inconsistent state dimension");
    }
    if (s.sample_ids.size() != static_cast<std::size_t>(s.sample_count())) {
      throw SharingError("sample_ids must label every column");
    }
    if (!(s.cost_per_sample > 0.0)) throw SharingError("costs must be positive");
    if (l == 0) {
      if (s.extra.cols() != 0) throw SharingError("level 0 has no extra block");
      if (s.shared.cols() < 1) throw SharingError("level 0 needs at least one sample");
      continue;
    }
    const auto& prev = sets[l - 1];
    if (s.shared.cols() != prev.sample_count()) {
      throw SharingError("level " + std::to_string(l) + " must share exactly m_{l-1} samples");
    }
    if (s.extra.cols() < 1) throw SharingError("sample sizes must be strictly increasing");
    for (Index i = 0; i < s.shared.cols(); ++i) {
      if (s.sample_ids[static_cast<std::size_t>(i)] != prev.sample_ids[static_cast<std::size_t>(i)]) {
        throw SharingError("shared sample ids differ between levels " + std::to_string(l - 1) +
                           " and " + std::to_string(l));
      }
    }
    const bool first_low = l == 1;
    if (first_low ? !(s.cost_per_sample < prev.cost_per_sample)
                  : !(s.cost_per_sample <= prev.cost_per_sample)) {
      throw SharingError("costs must satisfy c_0 > c_1 >= ... >= c_L");
    }
  }
}

} // namespace mfpod
