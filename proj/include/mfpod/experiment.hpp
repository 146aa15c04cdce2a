#pragma once

#include "mfpod/adaptive.hpp"
#include "mfpod/core.hpp"
#include "mfpod/estimator.hpp"
#include "mfpod/mfpod.hpp"
#include "mfpod/models.hpp"
#include "mfpod/pod.hpp"
#include "mfpod/snapshot_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfpod::experiment {

class BudgetError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class StudyAborted : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class SplitKind { even, fixed_m0, hf_only, lf_only };

struct SplitPolicy {
  SplitKind kind = SplitKind::even;
  Index m0 = 0;  ///< for fixed_m0

  static SplitPolicy parse(const std::string& s) {
    if (s == "even") return {SplitKind::even, 0};
    if (s == "hf-only" || s == "hf_only") return {SplitKind::hf_only, 0};
    if (s == "lf-only" || s == "lf_only") return {SplitKind::lf_only, 0};
    if (s.rfind("m0=", 0) == 0) {
      std::size_t used = 0;
      long long k = -1;
      try {
        k = std::stoll(s.substr(3), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size() - 3 || k < 1) throw std::invalid_argument("bad split '" + s + "'");
      return {SplitKind::fixed_m0, static_cast<Index>(k)};
    }
    throw std::invalid_argument("unknown split '" + s + "' (expected even|m0=K|hf-only|lf-only)");
  }

  std::string str() const {
    switch (kind) {
      case SplitKind::even: return "even";
      case SplitKind::fixed_m0: return "m0=" + std::to_string(m0);
      case SplitKind::hf_only: return "hf-only";
      case SplitKind::lf_only: return "lf-only";
    }
    return "?";
  }

  bool multifidelity() const { return kind == SplitKind::even || kind == SplitKind::fixed_m0; }
};

enum class WeightKind { fixed, pilot, adaptive };

struct WeightMode {
  WeightKind kind = WeightKind::fixed;
  double alpha = 1.0;

  static WeightMode parse(const std::string& s) {
    if (s == "pilot") return {WeightKind::pilot, 0.0};
    if (s == "adaptive") return {WeightKind::adaptive, 0.0};
    std::size_t used = 0;
    double a = 0.0;
    try {
      a = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(a)) {
      throw std::invalid_argument("bad alpha '" + s + "' (expected a number, pilot or adaptive)");
    }
    return {WeightKind::fixed, a};
  }

  std::string str() const {
    if (kind == WeightKind::pilot) return "pilot";
    if (kind == WeightKind::adaptive) return "adaptive";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", alpha);
    return buf;
  }
};

struct SampleSizes {
  Index m0 = 0;
  Index m1 = 0;

  double cost(const models::ModelCosts& c) const {
    return static_cast<double>(m0) * c.c0 + static_cast<double>(m1) * c.c1;
  }
};

namespace detail {

// Guards floor() against ratios such as 1/0.1 landing a hair below an integer.
inline Index safe_floor(double x) {
  return static_cast<Index>(std::floor(x * (1.0 + 1e-12)));
}

} // namespace detail

/**
 * Sample counts for a budget. even: m0 = ⌊c/2⌋, m1 = ⌊c0/c1⌋·m0;
 * hf_only: m0 = ⌊c/c0⌋; lf_only: m1 = ⌊⌊c0/c1⌋·c⌋; m0=K: m1 = ⌊(c − K·c0)/c1⌋.
 */
inline SampleSizes allocate_budget(double c_tot, const models::ModelCosts& costs, SplitPolicy policy) {
  if (!(std::isfinite(c_tot) && c_tot > 0.0)) throw BudgetError("budget must be positive");
  if (!(costs.c0 > costs.c1 && costs.c1 > 0.0)) throw BudgetError("costs must satisfy c0 > c1 > 0");
  const Index ratio = detail::safe_floor(costs.c0 / costs.c1);
  SampleSizes s;
  switch (policy.kind) {
    case SplitKind::even:
      if (c_tot < costs.c0 + 2.0 * costs.c1) {
        throw BudgetError("budget below c0 + 2 c1 required for multifidelity POD");
      }
      s.m0 = detail::safe_floor(c_tot / 2.0);
      s.m1 = ratio * s.m0;
      break;
    case SplitKind::fixed_m0:
      if (c_tot < costs.c0 + 2.0 * costs.c1) {
        throw BudgetError("budget below c0 + 2 c1 required for multifidelity POD");
      }
      s.m0 = policy.m0;
      s.m1 = c_tot >= static_cast<double>(s.m0) * costs.c0
                 ? detail::safe_floor((c_tot - static_cast<double>(s.m0) * costs.c0) / costs.c1)
                 : 0;
      break;
    case SplitKind::hf_only:
      s.m0 = detail::safe_floor(c_tot / costs.c0);
      break;
    case SplitKind::lf_only:
      s.m1 = detail::safe_floor(static_cast<double>(ratio) * c_tot);
      break;
  }
  if (policy.multifidelity() && (s.m0 < 1 || s.m1 <= s.m0)) {
    throw BudgetError("budget " + std::to_string(c_tot) + " infeasible for split " + policy.str());
  }
  if (policy.kind == SplitKind::hf_only && s.m0 < 1) throw BudgetError("budget below one high-fidelity solve");
  if (policy.kind == SplitKind::lf_only && s.m1 < 1) throw BudgetError("budget below one low-fidelity solve");
  return s;
}

/**
 * Reference snapshot set in compressed form: Z (n×k) with Z Zᵀ = Σ_i u_i u_iᵀ
 * up to dropped energy, plus the reference POD it implies.
 */
struct ReferenceSet {
  Metric metric;
  Matrix wz;            ///< W·Z
  Matrix pod_vectors;   ///< reference POD modes, descending energy
  Vector pod_eigvals;   ///< (1/N)-scaled
  double total = 0.0;   ///< Σ_i ‖u_i‖²_W
  Index size = 0;

  Index rank() const { return wz.cols(); }
};

/**
 * Incremental blocked Gram–Schmidt of the snapshots produced by `fill`
 * (called with column ranges), dropping residual directions below
 * drop_tol × (largest snapshot norm).
 */
template <class Fill>
ReferenceSet compress_reference(Index n, Index size, const Metric& metric, Fill fill, double drop_tol = 1e-12,
                                Index block = 256) {
  if (size < 1) throw std::invalid_argument("reference set must be nonempty");
  Matrix q(n, 0);
  Matrix wq(n, 0);
  Matrix g(0, 0);
  double scale = 0.0;
  double total = 0.0;
  for (Index start = 0; start < size; start += block) {
    const Index count = std::min(block, size - start);
    Matrix s(n, count);
    fill(start, count, s);
    const Vector norms2 = column_norms_squared(s, metric);
    total += norms2.sum();
    scale = std::max(scale, std::sqrt(norms2.maxCoeff()));

    Matrix c = q.transpose() * metric.apply(s);
    Matrix res = s - q * c;
    const Matrix c2 = wq.transpose() * res;
    c += c2;
    res -= q * c2;

    const Vector rn = column_norms_squared(res, metric).cwiseSqrt();
    const double rmax = rn.size() > 0 ? rn.maxCoeff() : 0.0;
    Matrix d(0, count);
    Matrix qn(n, 0);
    if (rmax > drop_tol * scale) {
      qn = orthonormalize(res, metric, std::min(1.0, drop_tol * scale / rmax)).vectors;
      const Matrix wqn = metric.apply(qn);
      d = wqn.transpose() * res;
      Matrix q2(n, q.cols() + qn.cols());
      q2 << q, qn;
      Matrix wq2(n, q.cols() + qn.cols());
      wq2 << wq, wqn;
      q = std::move(q2);
      wq = std::move(wq2);
    }
    const Index k_old = g.rows();
    const Index k_new = k_old + qn.cols();
    Matrix g2 = Matrix::Zero(k_new, k_new);
    g2.topLeftCorner(k_old, k_old) = g + c * c.transpose();
    if (qn.cols() > 0) {
      g2.topRightCorner(k_old, qn.cols()) = c * d.transpose();
      g2.bottomLeftCorner(qn.cols(), k_old) = d * c.transpose();
      g2.bottomRightCorner(qn.cols(), qn.cols()) = d * d.transpose();
    }
    g = std::move(g2);
  }
  if (!(total > 0.0)) throw std::invalid_argument("reference set has zero energy");

  ReferenceSet ref;
  ref.metric = metric;
  ref.size = size;
  ref.total = total;
  const EigenPairs eig = dense_symmetric_eig(0.5 * (g + g.transpose()), std::max<Index>(g.rows(), 4096));
  const Vector mu = eig.values.cwiseMax(0.0);
  ref.pod_eigvals = mu / static_cast<double>(size);
  ref.pod_vectors = q * eig.vectors;
  ref.wz = wq * eig.vectors * mu.cwiseSqrt().asDiagonal();
  return ref;
}

/// Reference set of HF states at `size` equispaced parameters spanning the range.
inline ReferenceSet build_reference(const models::AdvDiffConfig& config, Index size) {
  const Metric metric = models::l2_metric(config.n_hf);
  const auto range = config.theta_range;
  return compress_reference(config.n_hf, size, metric, [&](Index start, Index count, Matrix& s) {
    for (Index i = 0; i < count; ++i) {
      const double t = size == 1 ? 0.5 : static_cast<double>(start + i) / static_cast<double>(size - 1);
      s.col(i) = models::snapshot(range.min + t * (range.max - range.min), models::Fidelity::high, config);
    }
  });
}

/// E(V) = 100 Σ‖Π_V u_i‖²_W / Σ‖u_i‖²_W in percent.
inline double captured_energy(const Basis& basis, const ReferenceSet& ref) {
  mfpod::detail::require_size(basis.ambient(), ref.metric.size(), "captured_energy");
  if (basis.dim() == 0) return 0.0;
  const double e = 100.0 * (basis.vectors.transpose() * ref.wz).squaredNorm() / ref.total;
  return std::clamp(e, 0.0, 100.0);
}

/// Same from raw reference snapshots.
inline double captured_energy(const Basis& basis, const Matrix& reference, const Metric& metric) {
  mfpod::detail::require_size(reference.rows(), metric.size(), "captured_energy");
  const double total = column_norms_squared(reference, metric).sum();
  if (!(total > 0.0)) throw std::invalid_argument("captured_energy: reference has zero energy");
  if (basis.dim() == 0) return 0.0;
  const double kept = column_norms_squared(project(basis, reference), metric).sum();
  return std::clamp(100.0 * kept / total, 0.0, 100.0);
}

/// E(V_r) for r = 1..max_dim over prefixes of `vectors`; values past the last column repeat.
inline std::vector<double> energy_sweep(const Matrix& vectors, const ReferenceSet& ref, Index max_dim) {
  std::vector<double> out(static_cast<std::size_t>(max_dim), 0.0);
  const Index k = std::min(vectors.cols(), max_dim);
  const Matrix p = vectors.leftCols(k).transpose() * ref.wz;
  double acc = 0.0;
  for (Index r = 0; r < max_dim; ++r) {
    if (r < k) acc += p.row(r).squaredNorm();
    out[static_cast<std::size_t>(r)] = std::clamp(100.0 * acc / ref.total, 0.0, 100.0);
  }
  return out;
}

/// Nearest-rank percentile: sorted[⌈p/100·N⌉ − 1].
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<Index>(std::ceil(p / 100.0 * n));
  rank = std::clamp<Index>(rank, 1, static_cast<Index>(values.size()));
  return values[static_cast<std::size_t>(rank - 1)];
}

struct StudyConfig {
  double budget = 5.0;
  SplitPolicy split;
  double kappa = 0.9999;
  Index repeats = 100;
  std::uint64_t master_seed = 0;
  models::AdvDiffConfig model;
  WeightMode weight;
  Index reference_size = 10000;
  Index max_dim = 30;
  bool baselines = true;     ///< also run hf-only and lf-only POD on the same draws
  unsigned threads = 1;
  std::filesystem::path output_dir;  ///< empty: no files

  void validate() const {
    model.validate();
    if (!(kappa > 0.0 && kappa < 1.0)) throw std::invalid_argument("kappa must lie in (0, 1)");
    if (repeats < 1) throw std::invalid_argument("repeats must be positive");
    if (reference_size < 1) throw std::invalid_argument("reference_size must be positive");
    if (max_dim < 1) throw std::invalid_argument("max_dim must be positive");
    allocate_budget(budget, models::ModelCosts::from(model), split);
  }
};

/// Outcome of one pipeline on one repeat.
struct MethodResult {
  std::string method;  ///< mfpod | hf-pod | lf-pod
  SampleSizes sizes;
  Index hf_solves = 0;
  Index lf_solves = 0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> eigvals;
  std::vector<double> corrected;
  Index r = 0;
  Index nonzero_count = 0;
  Index correction_count = 0;
  std::vector<double> energies;  ///< E(V_r), r = 1..max_dim
  std::string error;

  bool ok() const { return error.empty(); }
};

struct RepeatResult {
  Index repeat = 0;
  std::uint64_t seed = 0;
  std::vector<MethodResult> methods;
  double wall_seconds = 0.0;  ///< kept out of report files
  std::string error;

  bool ok() const {
    if (!error.empty()) return false;
    for (const auto& m : methods) {
      if (!m.ok()) return false;
    }
    return true;
  }
};

struct MethodSummary {
  std::string method;
  Index successes = 0;
  std::vector<std::vector<double>> energy_percentiles;  ///< [dimension][5,25,50,75,95]
  double median_nonzero = 0.0;
  Index min_nonzero = 0;
  Index max_nonzero = 0;
  double median_r = 0.0;
};

struct StudyReport {
  StudyConfig config;
  Index reference_rank = 0;
  std::vector<double> reference_energies;  ///< E of the reference POD, r = 1..max_dim
  std::vector<RepeatResult> repeats;
  std::vector<MethodSummary> summaries;
  Index failures = 0;
};

inline constexpr double kPercentiles[5] = {5, 25, 50, 75, 95};

/// Seed of repeat `repeat` of a study.
inline std::uint64_t repeat_seed(std::uint64_t master, Index repeat) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(repeat), static_cast<std::uint32_t>(repeat >> 32), 0x5354u};
  std::mt19937_64 gen(seq);
  return gen();
}

/// The pipelines a study runs: the policy's own, then the single-fidelity baselines.
inline std::vector<SplitPolicy> study_methods(const StudyConfig& config) {
  std::vector<SplitPolicy> out{config.split};
  if (config.baselines) {
    for (SplitKind k : {SplitKind::hf_only, SplitKind::lf_only}) {
      if (config.split.kind != k) out.push_back({k, 0});
    }
  }
  return out;
}

inline std::string method_name(SplitPolicy p) {
  if (p.multifidelity()) return "mfpod";
  return p.kind == SplitKind::hf_only ? "hf-pod" : "lf-pod";
}

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline MethodResult run_single_fidelity(const std::string& name, const Matrix& snaps, const StudyConfig& cfg,
                                        const ReferenceSet& ref) {
  MethodResult out;
  out.method = name;
  const PodResult p = pod(snaps, ref.metric);
  out.eigvals = to_std(p.eigvals.head(p.basis.dim()));
  out.corrected = out.eigvals;
  out.nonzero_count = p.basis.dim();
  out.r = select_dimension(p.eigvals, out.nonzero_count, cfg.kappa);
  out.energies = energy_sweep(p.basis.vectors, ref, cfg.max_dim);
  return out;
}

inline MethodResult run_multifidelity(const Matrix& s0, const Matrix& s1, const StudyConfig& cfg,
                                      const ReferenceSet& ref) {
  const auto costs = models::ModelCosts::from(cfg.model);
  const auto sets = make_two_level(s0, s1, costs.c0, costs.c1);
  MethodResult out;
  out.method = "mfpod";
  MfBasis mf;
  if (cfg.weight.kind == WeightKind::adaptive) {
    AdaptiveResult a = mfpod_adaptive(sets, cfg.kappa, ref.metric);
    mf = std::move(a.basis);
    out.alpha = a.trace.steps.empty() ? 0.0 : a.trace.steps.back().alpha;
  } else {
    out.alpha = cfg.weight.kind == WeightKind::pilot ? adaptive_weight(Basis::empty(ref.metric), sets)
                                                     : cfg.weight.alpha;
    mf = mfpod_fixed(sets, {out.alpha}, cfg.kappa, ref.metric);
  }
  out.eigvals = to_std(mf.raw_eigvals);
  out.corrected = to_std(mf.corrected);
  out.nonzero_count = mf.nonzero_count;
  out.correction_count = mf.correction_count;
  out.r = mf.r;
  out.energies = energy_sweep(mf.vectors.leftCols(mf.nonzero_count), ref, cfg.max_dim);
  return out;
}

} // namespace detail

/// One repeat: shared parameter stream, each pipeline on its own budget split.
inline RepeatResult run_repeat(const StudyConfig& cfg, const ReferenceSet& ref, Index repeat) {
  const auto t0 = std::chrono::steady_clock::now();
  RepeatResult rr;
  rr.repeat = repeat;
  rr.seed = repeat_seed(cfg.master_seed, repeat);
  const auto costs = models::ModelCosts::from(cfg.model);
  const auto methods = study_methods(cfg);

  std::vector<SampleSizes> sizes;
  Index need = 0;
  for (const auto& m : methods) {
    sizes.push_back(allocate_budget(cfg.budget, costs, m));
    need = std::max({need, sizes.back().m0, sizes.back().m1});
  }
  const auto theta = models::sample_parameters(static_cast<std::size_t>(need), rr.seed, cfg.model.theta_range);
  auto first = [&](Index k) { return std::vector<double>(theta.begin(), theta.begin() + k); };

  for (std::size_t i = 0; i < methods.size(); ++i) {
    const SampleSizes s = sizes[i];
    MethodResult res;
    try {
      const Matrix hf = models::snapshots(first(s.m0), models::Fidelity::high, cfg.model);
      const Matrix lf = models::snapshots(first(s.m1), models::Fidelity::low, cfg.model);
      if (methods[i].multifidelity()) {
        res = detail::run_multifidelity(hf, lf, cfg, ref);
      } else if (methods[i].kind == SplitKind::hf_only) {
        res = detail::run_single_fidelity("hf-pod", hf, cfg, ref);
      } else {
        res = detail::run_single_fidelity("lf-pod", lf, cfg, ref);
      }
    } catch (const std::exception& e) {
      res = MethodResult{};
      res.method = method_name(methods[i]);
      res.error = e.what();
    }
    res.sizes = s;
    res.hf_solves = s.m0;
    res.lf_solves = s.m1;
    rr.methods.push_back(std::move(res));
  }
  rr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rr;
}

inline std::vector<MethodSummary> summarize(const StudyConfig& cfg, const std::vector<RepeatResult>& repeats) {
  std::vector<MethodSummary> out;
  const auto methods = study_methods(cfg);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    MethodSummary s;
    s.method = method_name(methods[i]);
    std::vector<std::vector<double>> by_dim(static_cast<std::size_t>(cfg.max_dim));
    std::vector<double> nonzero;
    std::vector<double> rs;
    for (const auto& rr : repeats) {
      if (i >= rr.methods.size() || !rr.methods[i].ok()) continue;
      const auto& m = rr.methods[i];
      ++s.successes;
      for (std::size_t d = 0; d < by_dim.size(); ++d) by_dim[d].push_back(m.energies[d]);
      nonzero.push_back(static_cast<double>(m.nonzero_count));
      rs.push_back(static_cast<double>(m.r));
    }
    for (const auto& col : by_dim) {
      std::vector<double> p;
      for (double q : kPercentiles) p.push_back(percentile(col, q));
      s.energy_percentiles.push_back(std::move(p));
    }
    if (!nonzero.empty()) {
      s.median_nonzero = percentile(nonzero, 50);
      s.min_nonzero = static_cast<Index>(*std::min_element(nonzero.begin(), nonzero.end()));
      s.max_nonzero = static_cast<Index>(*std::max_element(nonzero.begin(), nonzero.end()));
      s.median_r = percentile(rs, 50);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::json config_json(const StudyConfig& c) {
  return {{"budget", c.budget},
          {"split", c.split.str()},
          {"kappa", c.kappa},
          {"repeats", c.repeats},
          {"master_seed", c.master_seed},
          {"alpha", c.weight.str()},
          {"reference_size", c.reference_size},
          {"max_dim", c.max_dim},
          {"baselines", c.baselines},
          {"model",
           {{"variant", models::to_string(c.model.advection_sign)},
            {"n_hf", c.model.n_hf},
            {"n_lf", c.model.n_lf},
            {"theta_min", c.model.theta_range.min},
            {"theta_max", c.model.theta_range.max}}}};
}

/// Report JSON; wall-times are deliberately omitted so identical seeds give identical bytes.
inline nlohmann::json report_json(const StudyReport& r) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& rr : r.repeats) {
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& m : rr.methods) {
      nlohmann::json j = {{"method", m.method},
                          {"m0", m.sizes.m0},
                          {"m1", m.sizes.m1},
                          {"hf_solves", m.hf_solves},
                          {"lf_solves", m.lf_solves}};
      if (!m.ok()) {
        j["error"] = m.error;
      } else {
        j["alpha"] = std::isnan(m.alpha) ? nlohmann::json(nullptr) : nlohmann::json(m.alpha);
        j["eigenvalues"] = m.eigvals;
        j["corrected_eigenvalues"] = m.corrected;
        j["r"] = m.r;
        j["nonzero_modes"] = m.nonzero_count;
        j["corrections"] = m.correction_count;
        j["captured_energy"] = m.energies;
      }
      ms.push_back(std::move(j));
    }
    nlohmann::json j = {{"repeat", rr.repeat}, {"seed", rr.seed}, {"methods", std::move(ms)}};
    if (!rr.error.empty()) j["error"] = rr.error;
    reps.push_back(std::move(j));
  }
  nlohmann::json sums = nlohmann::json::array();
  for (const auto& s : r.summaries) {
    sums.push_back({{"method", s.method},
                    {"successes", s.successes},
                    {"percentile_levels", std::vector<double>(std::begin(kPercentiles), std::end(kPercentiles))},
                    {"captured_energy_percentiles", s.energy_percentiles},
                    {"nonzero_modes", {{"min", s.min_nonzero}, {"median", s.median_nonzero}, {"max", s.max_nonzero}}},
                    {"median_r", s.median_r}});
  }
  return {{"config", config_json(r.config)},
          {"reference", {{"rank", r.reference_rank}, {"pod_captured_energy", r.reference_energies}}},
          {"failures", r.failures},
          {"summaries", std::move(sums)},
          {"repeats", std::move(reps)}};
}

namespace detail {

inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Rows = repeats, columns = dimension 1..cols; missing entries left empty.
inline std::string csv_table(const std::vector<RepeatResult>& repeats, std::size_t method, Index cols,
                             const std::vector<double> MethodResult::*field) {
  std::string out = "repeat";
  for (Index d = 1; d <= cols; ++d) out += "," + std::to_string(d);
  out += "\n";
  for (const auto& rr : repeats) {
    out += std::to_string(rr.repeat);
    const MethodResult* m = method < rr.methods.size() ? &rr.methods[method] : nullptr;
    for (Index d = 0; d < cols; ++d) {
      out += ",";
      if (m && m->ok() && static_cast<std::size_t>(d) < (m->*field).size()) {
        out += fmt_double((m->*field)[static_cast<std::size_t>(d)]);
      }
    }
    out += "\n";
  }
  return out;
}

} // namespace detail

/// report.json plus captured_energy_/eigenvalues_/corrected_eigenvalues_<method>.csv.
inline std::vector<std::filesystem::path> write_report(const StudyReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    io::write_atomic(dir / name, text);
    written.push_back(dir / name);
  };
  put("report.json", report_json(r).dump(2) + "\n");

  const auto methods = study_methods(r.config);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const std::string name = method_name(methods[i]);
    Index width = 0;
    for (const auto& rr : r.repeats) {
      if (i < rr.methods.size()) width = std::max<Index>(width, static_cast<Index>(rr.methods[i].eigvals.size()));
    }
    put("captured_energy_" + name + ".csv",
        detail::csv_table(r.repeats, i, r.config.max_dim, &MethodResult::energies));
    put("eigenvalues_" + name + ".csv", detail::csv_table(r.repeats, i, width, &MethodResult::eigvals));
    put("corrected_eigenvalues_" + name + ".csv",
        detail::csv_table(r.repeats, i, width, &MethodResult::corrected));
  }
  return written;
}

/**
 * The advection-diffusion study: reference set once, then `repeats`
 * independent draws. Repeats may run on worker threads; results are kept in
 * repeat order. Aborts when more than half of the repeats fail.
 */
inline StudyReport run_study(const StudyConfig& config, const ReferenceSet* reference = nullptr) {
  config.validate();
  StudyReport report;
  report.config = config;

  ReferenceSet built;
  if (!reference) {
    built = build_reference(config.model, config.reference_size);
    reference = &built;
  }
  const ReferenceSet& ref = *reference;
  report.reference_rank = ref.rank();
  report.reference_energies = energy_sweep(ref.pod_vectors, ref, config.max_dim);

  report.repeats.resize(static_cast<std::size_t>(config.repeats));
  auto job = [&](Index k) {
    RepeatResult rr;
    try {
      rr = run_repeat(config, ref, k);
    } catch (const std::exception& e) {
      rr = RepeatResult{};
      rr.repeat = k;
      rr.seed = repeat_seed(config.master_seed, k);
      rr.error = e.what();
    }
    report.repeats[static_cast<std::size_t>(k)] = std::move(rr);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(config.repeats)));
  if (workers == 1) {
    for (Index k = 0; k < config.repeats; ++k) job(k);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (Index k = next++; k < config.repeats; k = next++) job(k);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& rr : report.repeats) {
    if (!rr.ok()) ++report.failures;
  }
  if (2 * report.failures > config.repeats) {
    throw StudyAborted("study aborted: " + std::to_string(report.failures) + " of " +
                       std::to_string(config.repeats) + " repeats failed");
  }
  report.summaries = summarize(config, report.repeats);
  if (!config.output_dir.empty()) write_report(report, config.output_dir);
  return report;
}

} // namespace mfpod::experiment
