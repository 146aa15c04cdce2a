#pragma once

#include "mfpod/core.hpp"
#include "mfpod/mfpod.hpp"
#include "mfpod/models.hpp"
#include "mfpod/solver.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace mfpod::verify {

/// Two-fidelity model with states in a common space.
template <class P>
concept ModelPair = requires(const P& p, double theta) {
  { p.high(theta) } -> std::convertible_to<Vector>;
  { p.low(theta) } -> std::convertible_to<Vector>;
  { p.metric() } -> std::convertible_to<Metric>;
  { p.range() } -> std::convertible_to<models::ParameterRange>;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Second moment C* in metric coordinates with its eigendecomposition.
struct ReferenceMoment {
  Matrix moment;  ///< Fᵀ E[u uᵀ] F
  EigenPairs eig;
  Metric metric;
  Index sample_count = 0;
};

/**
 * Surrogate truth from `size` high-fidelity states at the midpoints of an
 * equispaced partition of the parameter range.
 */
template <ModelPair P>
ReferenceMoment reference_moment(const P& pair, Index size = 10000) {
  if (size < 1) throw std::invalid_argument("reference_moment: size must be positive");
  const Metric metric = pair.metric();
  const auto range = pair.range();
  const Index n = metric.size();
  Matrix moment = Matrix::Zero(n, n);
  const Index chunk = 512;
  for (Index start = 0; start < size; start += chunk) {
    const Index count = std::min(chunk, size - start);
    Matrix s(n, count);
    for (Index i = 0; i < count; ++i) {
      const double t = (static_cast<double>(start + i) + 0.5) / static_cast<double>(size);
      s.col(i) = pair.high(range.min + t * (range.max - range.min));
    }
    const Matrix z = metric.to_coords(s);
    moment.noalias() += z * z.transpose();
  }
  moment /= static_cast<double>(size);
  ReferenceMoment ref;
  ref.eig = dense_symmetric_eig(moment);
  ref.moment = std::move(moment);
  ref.metric = metric;
  ref.sample_count = size;
  return ref;
}

/// ‖C_mf − C*‖_F in metric coordinates; `second_moment` is E[u uᵀ] in original coordinates.
inline double hs_error(const MfOperator& op, const Matrix& second_moment, const Metric& metric,
                       Index size_cap = 4096) {
  if (op.dimension() > size_cap) throw DimensionError("hs_error: dimension exceeds size cap");
  detail::require_size(second_moment.rows(), metric.size(), "hs_error");
  detail::require_size(second_moment.cols(), metric.size(), "hs_error");
  detail::require_size(op.dimension(), metric.size(), "hs_error");
  Matrix ref = second_moment;
  if (!metric.is_euclidean()) {
    const Matrix tmp = metric.factor().transpose() * second_moment;
    ref = tmp * metric.factor();
  }
  return (op.assemble_coordinates() - ref).norm();
}

/// Same, with the reference already in metric coordinates.
inline double hs_error(const MfOperator& op, const ReferenceMoment& ref) {
  return (op.assemble_coordinates() - ref.moment).norm();
}

/// Σ_j sin²β_j = r − ‖VᵀWV*‖²_F.
inline double subspace_alignment(const Basis& v, const Basis& vstar) {
  if (v.dim() != vstar.dim()) throw DimensionError("subspace_alignment: dimensions differ");
  detail::require_size(v.ambient(), vstar.ambient(), "subspace_alignment");
  const Matrix g = v.vectors.transpose() * vstar.metric.apply(vstar.vectors);
  return static_cast<double>(v.dim()) - g.squaredNorm();
}

struct AlignmentResult {
  double principal_sine_sq_sum = 0.0;  ///< Σ_j sin²β_j, in [0, r]
  double spectral_gap = 0.0;           ///< λ*_r − λ*_{r+1}
  double bound = 0.0;                  ///< 2rγ̂/(m0·gap²)
};

/// Misalignment of `v` against the top-dim(v) eigenvectors of the reference.
inline AlignmentResult alignment_against(const Basis& v, const ReferenceMoment& ref, double gamma_hat, Index m0) {
  detail::require_size(v.ambient(), ref.metric.size(), "alignment_against");
  const Index r = v.dim();
  const Index n = ref.metric.size();
  if (r < 1 || r >= n) throw DimensionError("alignment_against: need 1 <= r < n");
  const Metric euclid = Metric::euclidean(n);
  const Basis vc(ref.metric.to_coords(v.vectors), euclid);
  const Basis vstar(ref.eig.vectors.leftCols(r), euclid);
  AlignmentResult out;
  out.principal_sine_sq_sum = std::clamp(subspace_alignment(vc, vstar), 0.0, static_cast<double>(r));
  out.spectral_gap = ref.eig.values(r - 1) - ref.eig.values(r);
  const double g2 = out.spectral_gap * out.spectral_gap;
  out.bound = g2 > 0.0 ? 2.0 * static_cast<double>(r) * gamma_hat / (static_cast<double>(m0) * g2)
                       : std::numeric_limits<double>::infinity();
  return out;
}

/// Seed of the realization (seed, m0, repeat).
inline std::uint64_t realization_key(std::uint64_t seed, Index m0, Index repeat) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(m0), static_cast<std::uint32_t>(repeat), 0x4d46u};
  std::mt19937_64 gen(seq);
  return gen();
}

/// Parameters θ_1..θ_{m1} of one realization; prefix-stable.
template <ModelPair P>
std::vector<double> realization_parameters(const P& pair, std::uint64_t seed, Index m0, Index m1,
                                           Index repeat) {
  return models::sample_parameters(static_cast<std::size_t>(m1), realization_key(seed, m0, repeat),
                                   pair.range());
}

/// Two-level hierarchy: u_0 at the first m0 parameters, u_1 at all m1.
template <ModelPair P>
std::vector<SnapshotSet> two_level_sets(const P& pair, const std::vector<double>& theta, Index m0) {
  const Index n = pair.metric().size();
  const auto m1 = static_cast<Index>(theta.size());
  Matrix s0(n, m0);
  Matrix s1(n, m1);
  for (Index i = 0; i < m1; ++i) {
    if (i < m0) s0.col(i) = pair.high(theta[static_cast<std::size_t>(i)]);
    s1.col(i) = pair.low(theta[static_cast<std::size_t>(i)]);
  }
  return make_two_level(s0, s1, 1.0, 0.5);
}

struct StudyOptions {
  double alpha = 1.0;
  Index reference_size = 10000;
};

struct ConvergenceStudyResult {
  std::vector<Index> m0_grid;
  std::vector<double> hs_errors;       ///< mean ‖C_mf − C*‖²_F per m0
  std::vector<double> standard_errors; ///< of the means
  double gamma_hat = 0.0;              ///< mean of m0 × error
  double slope = std::numeric_limits<double>::quiet_NaN();
  bool exact = false;                  ///< every error vanished; slope undefined
  Index repeats = 0;
  std::vector<Index> ratios;           ///< q_ℓ, ℓ = 1..L
};

namespace detail {

inline void check_grid(const std::vector<Index>& grid, Index repeats) {
  if (grid.empty()) throw std::invalid_argument("study: empty m0 grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 1 || (i > 0 && grid[i] <= grid[i - 1])) {
      throw std::invalid_argument("study: m0 grid must be positive and strictly increasing");
    }
  }
  if (repeats < 30) throw std::invalid_argument("study: insufficient repeats (need at least 30)");
}

inline double loglog_slope(const std::vector<Index>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(static_cast<double>(x[i]));
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace detail

/**
 * Mean squared Frobenius error of C_mf(m0) against the surrogate truth for
 * m_1 = q1·m0, with a log-log fit of the decay and γ̂ = mean(m0 × error).
 */
template <ModelPair P>
ConvergenceStudyResult convergence_study(const P& pair, Index q1, const std::vector<Index>& m0_grid,
                                         Index repeats, std::uint64_t seed,
                                         const ReferenceMoment& ref, StudyOptions options = {}) {
  detail::check_grid(m0_grid, repeats);
  if (q1 < 2) throw std::invalid_argument("convergence_study: q1 must be an integer >= 2");

  ConvergenceStudyResult out;
  out.m0_grid = m0_grid;
  out.repeats = repeats;
  out.ratios = {q1};
  const Metric metric = pair.metric();
  for (Index m0 : m0_grid) {
    CompensatedSum sum;
    CompensatedSum sum_sq;
    for (Index rep = 0; rep < repeats; ++rep) {
      const auto theta = realization_parameters(pair, seed, m0, q1 * m0, rep);
      const MfOperator op(two_level_sets(pair, theta, m0), {options.alpha}, metric);
      const double e = hs_error(op, ref);
      sum.add(e * e);
      sum_sq.add(e * e * e * e);
    }
    const double mean = sum.value() / static_cast<double>(repeats);
    const double var = std::max(0.0, (sum_sq.value() - static_cast<double>(repeats) * mean * mean) /
                                         static_cast<double>(repeats - 1));
    out.hs_errors.push_back(mean);
    out.standard_errors.push_back(std::sqrt(var / static_cast<double>(repeats)));
  }

  CompensatedSum g;
  for (std::size_t i = 0; i < m0_grid.size(); ++i) g.add(static_cast<double>(m0_grid[i]) * out.hs_errors[i]);
  out.gamma_hat = g.value() / static_cast<double>(m0_grid.size());

  const double scale = ref.moment.squaredNorm();
  const double worst = *std::max_element(out.hs_errors.begin(), out.hs_errors.end());
  out.exact = worst <= 1e-24 * std::max(scale, 1e-300);
  if (!out.exact) out.slope = detail::loglog_slope(m0_grid, out.hs_errors);
  return out;
}

template <ModelPair P>
ConvergenceStudyResult convergence_study(const P& pair, Index q1, const std::vector<Index>& m0_grid,
                                         Index repeats, std::uint64_t seed, StudyOptions options = {}) {
  return convergence_study(pair, q1, m0_grid, repeats, seed, reference_moment(pair, options.reference_size),
                           options);
}

struct EigenvalueStudyResult {
  Index r = 0;
  std::vector<Index> m0_grid;
  std::vector<double> mse;            ///< E[(Σ_{j≤r}λ_j − Σ_{j≤r}λ*_j)²]
  std::vector<double> bound;          ///< rγ̂/m0
  std::vector<double> alignment_msq;  ///< E[(Σ sin²β_j)²]
  std::vector<double> alignment_bound;  ///< 2rγ̂/(m0·gap²)
  std::vector<double> median_energy_ratio;  ///< median of Σ_{j≤r}λ_j / Σ_j λ_j
  double reference_energy_ratio = 0.0;
  double spectral_gap = 0.0;          ///< λ*_r − λ*_{r+1}
  double max_symmetry_gap = 0.0;      ///< max |align(V,V*) − align(V*,V)|
  double gamma_hat = 0.0;
};

namespace detail {

/// Top-r signed eigenpairs of C_mf in metric coordinates, padded with zero eigenvalues.
inline void top_signed(const MfOperator& op, Index r, Vector& values, Matrix& vectors, double& trace) {
  LowRankOptions lo;
  lo.want = std::max<Index>(op.total_columns(), 1);
  const EigenPairs eig = lowrank_eig(op.coordinate_action(), op.stacked_coordinates(), lo);
  trace = eig.values.sum();
  const Index n = op.dimension();
  // Nonzero positives come first in signed order; zeros (implicit) precede negatives.
  Index positives = 0;
  while (positives < eig.size() && eig.values(positives) > 0.0) ++positives;
  values = Vector::Zero(r);
  vectors = Matrix::Zero(n, std::min(r, positives));
  for (Index j = 0; j < std::min(r, positives); ++j) {
    values(j) = eig.values(j);
    vectors.col(j) = eig.vectors.col(j);
  }
  if (positives < r && eig.size() >= n) {
    // No implicit zeros left: remaining top values are the negatives.
    for (Index j = positives; j < r; ++j) values(j) = eig.values(j);
  }
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

} // namespace detail

/**
 * Squared error of the summed top-r eigenvalues against the reference,
 * alongside the rγ̂/m0 bound, the subspace misalignment and the captured-energy
 * ratio. Realizations coincide with convergence_study for the same seed.
 */
template <ModelPair P>
EigenvalueStudyResult eigenvalue_sum_mse(const P& pair, Index r, const std::vector<Index>& m0_grid,
                                         Index q1, Index repeats, std::uint64_t seed, double gamma_hat,
                                         const ReferenceMoment& ref, StudyOptions options = {}) {
  detail::check_grid(m0_grid, repeats);
  if (r < 0) throw std::invalid_argument("eigenvalue_sum_mse: r must be nonnegative");
  EigenvalueStudyResult out;
  out.r = r;
  out.m0_grid = m0_grid;
  out.gamma_hat = gamma_hat;

  const Metric metric = pair.metric();
  const Index n = metric.size();
  const Vector& lstar = ref.eig.values;
  const double ref_sum = lstar.head(std::min(r, n)).sum();
  const double ref_total = lstar.sum();
  out.reference_energy_ratio = ref_total > 0.0 ? ref_sum / ref_total : 0.0;
  out.spectral_gap = (r > 0 && r < n) ? lstar(r - 1) - lstar(r) : 0.0;
  const Metric euclid = Metric::euclidean(n);
  const Basis vstar(ref.eig.vectors.leftCols(std::min(r, n)), euclid);

  for (Index m0 : m0_grid) {
    if (r == 0) {
      out.mse.push_back(0.0);
      out.bound.push_back(0.0);
      out.alignment_msq.push_back(0.0);
      out.alignment_bound.push_back(0.0);
      out.median_energy_ratio.push_back(0.0);
      continue;
    }
    CompensatedSum se;
    CompensatedSum sa;
    std::vector<double> ratios;
    for (Index rep = 0; rep < repeats; ++rep) {
      const auto theta = realization_parameters(pair, seed, m0, q1 * m0, rep);
      const MfOperator op(two_level_sets(pair, theta, m0), {options.alpha}, metric);
      Vector values;
      Matrix vectors;
      double trace = 0.0;
      detail::top_signed(op, r, values, vectors, trace);
      const double d = values.sum() - ref_sum;
      se.add(d * d);
      ratios.push_back(trace != 0.0 ? values.sum() / trace : 0.0);
      if (vectors.cols() == r) {
        const Basis v(vectors, euclid);
        const double a1 = subspace_alignment(v, vstar);
        const double a2 = subspace_alignment(vstar, v);
        out.max_symmetry_gap = std::max(out.max_symmetry_gap, std::abs(a1 - a2));
        sa.add(a1 * a1);
      } else {
        // Fewer than r positive modes: the missing directions count as fully misaligned.
        const Basis v(vectors, euclid);
        const double partial = static_cast<double>(vectors.cols()) -
                               (v.vectors.transpose() * vstar.vectors).squaredNorm();
        const double a = partial + static_cast<double>(r - vectors.cols());
        sa.add(a * a);
      }
    }
    const auto md = static_cast<double>(m0);
    out.mse.push_back(se.value() / static_cast<double>(repeats));
    out.bound.push_back(static_cast<double>(r) * gamma_hat / md);
    out.alignment_msq.push_back(sa.value() / static_cast<double>(repeats));
    const double gap2 = out.spectral_gap * out.spectral_gap;
    out.alignment_bound.push_back(gap2 > 0.0 ? 2.0 * static_cast<double>(r) * gamma_hat / (md * gap2)
                                             : std::numeric_limits<double>::infinity());
    out.median_energy_ratio.push_back(detail::median(std::move(ratios)));
  }
  return out;
}

} // namespace mfpod::verify
