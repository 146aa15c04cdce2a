#pragma once

#include "mfpod/core.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfpod::models {

/// Sign convention of the convection term.
enum class AdvectionSign {
  literal,        ///< −(1/θ)u″ − u′ = 1; exact solution 1 − x for every θ
  boundary_layer  ///< −(1/θ)u″ + u′ = 1; boundary layer of width 1/θ at x = 1
};

inline AdvectionSign parse_advection_sign(const std::string& s) {
  if (s == "literal") return AdvectionSign::literal;
  if (s == "boundary-layer" || s == "boundary_layer") return AdvectionSign::boundary_layer;
  throw std::invalid_argument("unknown model '" + s + "' (expected literal|boundary-layer)");
}

inline std::string to_string(AdvectionSign s) {
  return s == AdvectionSign::literal ? "literal" : "boundary-layer";
}

struct ParameterRange {
  double min = 1.0;
  double max = 100.0;

  void validate() const {
    if (!(std::isfinite(min) && std::isfinite(max) && min < max)) {
      throw std::invalid_argument("invalid parameter range");
    }
  }
};

struct AdvDiffConfig {
  ParameterRange theta_range{1.0, 100.0};
  Index n_hf = 4097;
  Index n_lf = 33;
  double left_value = 1.0;
  double right_value = 0.0;
  AdvectionSign advection_sign = AdvectionSign::boundary_layer;

  void validate() const {
    theta_range.validate();
    if (n_hf < 3 || n_lf < 3) throw std::invalid_argument("AdvDiffConfig: need at least 3 dofs");
    if (n_lf > n_hf || (n_hf - 1) % (n_lf - 1) != 0) {
      throw std::invalid_argument("AdvDiffConfig: coarse mesh must nest in the fine mesh");
    }
  }
};

/// Normalized costs: c_0 = 1, c_1 = n_lf/n_hf.
struct ModelCosts {
  double c0 = 1.0;
  double c1 = 33.0 / 4097.0;

  static ModelCosts from(const AdvDiffConfig& config) {
    return ModelCosts{1.0, static_cast<double>(config.n_lf) / static_cast<double>(config.n_hf)};
  }
};

/// Uniform draw in [0, 1) for sample `index` of stream `seed`; prefix-stable in `index`.
inline double uniform_unit(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 gen(seq);
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// i.i.d. uniform parameters; sample i depends only on (seed, i).
inline std::vector<double> sample_parameters(std::size_t count, std::uint64_t seed,
                                             ParameterRange range = {}) {
  range.validate();
  std::vector<double> theta(count);
  for (std::size_t i = 0; i < count; ++i) {
    theta[i] = range.min + (range.max - range.min) * uniform_unit(seed, i);
  }
  return theta;
}

/// Node coordinates of the uniform mesh with n nodes on [0, 1].
inline Vector mesh_nodes(Index n) {
  return Vector::LinSpaced(n, 0.0, 1.0);
}

/// P1 mass matrix on the uniform mesh with n nodes on [0, 1].
inline SparseMatrix mass_matrix(Index n) {
  if (n < 2) throw std::invalid_argument("mass_matrix: need at least 2 nodes");
  const double h = 1.0 / static_cast<double>(n - 1);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(3 * n));
  for (Index i = 0; i < n; ++i) {
    const bool boundary = i == 0 || i == n - 1;
    t.emplace_back(i, i, boundary ? h / 3.0 : 2.0 * h / 3.0);
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, h / 6.0);
      t.emplace_back(i + 1, i, h / 6.0);
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/// L²(0,1) metric of the P1 space with n nodes.
inline Metric l2_metric(Index n) { return Metric::weighted(mass_matrix(n)); }

/**
 * Linear finite elements for −(1/θ)u″ ∓ u′ = 1 on (0,1) with Dirichlet data.
 * Interior equations are tridiagonal; boundary nodes carry the data exactly.
 */
inline Vector solve_adv_diff(double theta, Index n_dofs, const AdvDiffConfig& config) {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw std::invalid_argument("solve_adv_diff: theta must be positive");
  if (n_dofs < 3) throw std::invalid_argument("solve_adv_diff: need at least 3 dofs");

  const Index n_int = n_dofs - 2;
  const double h = 1.0 / static_cast<double>(n_dofs - 1);
  const double diff = 1.0 / (theta * h);
  // ∫ s·u′ φ_i couples neighbours with ±s/2.
  const double s = config.advection_sign == AdvectionSign::boundary_layer ? 1.0 : -1.0;
  const double lower = -diff - 0.5 * s;
  const double upper = -diff + 0.5 * s;
  const double diag = 2.0 * diff;

  std::vector<double> c(static_cast<std::size_t>(n_int));
  Vector rhs = Vector::Constant(n_int, h);
  rhs(0) -= lower * config.left_value;
  rhs(n_int - 1) -= upper * config.right_value;

  // Thomas algorithm; pivots stay positive for these Toeplitz systems.
  double pivot = diag;
  if (!(std::abs(pivot) > 0.0)) throw std::runtime_error("solve_adv_diff: singular system");
  c[0] = upper / pivot;
  rhs(0) /= pivot;
  for (Index i = 1; i < n_int; ++i) {
    pivot = diag - lower * c[static_cast<std::size_t>(i - 1)];
    if (!(std::abs(pivot) > 0.0)) throw std::runtime_error("solve_adv_diff: singular system");
    c[static_cast<std::size_t>(i)] = upper / pivot;
    rhs(i) = (rhs(i) - lower * rhs(i - 1)) / pivot;
  }
  for (Index i = n_int - 2; i >= 0; --i) rhs(i) -= c[static_cast<std::size_t>(i)] * rhs(i + 1);

  Vector u(n_dofs);
  u(0) = config.left_value;
  u.segment(1, n_int) = rhs;
  u(n_dofs - 1) = config.right_value;
  return u;
}

/// Piecewise-linear interpolation from a nested coarse mesh onto n_fine nodes.
inline Vector prolong(const Vector& coarse, Index n_fine) {
  const Index n_coarse = coarse.size();
  if (n_coarse < 2 || n_fine < n_coarse || (n_fine - 1) % (n_coarse - 1) != 0) {
    throw DimensionError("prolong: meshes do not nest");
  }
  const Index ratio = (n_fine - 1) / (n_coarse - 1);
  Vector fine(n_fine);
  for (Index e = 0; e < n_coarse - 1; ++e) {
    const double a = coarse(e);
    const double b = coarse(e + 1);
    for (Index k = 0; k < ratio; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(ratio);
      fine(e * ratio + k) = (1.0 - t) * a + t * b;
    }
  }
  fine(n_fine - 1) = coarse(n_coarse - 1);
  return fine;
}

/// Injection onto the nested coarse nodes.
inline Vector restrict_to_coarse(const Vector& fine, Index n_coarse) {
  const Index n_fine = fine.size();
  if (n_coarse < 2 || n_fine < n_coarse || (n_fine - 1) % (n_coarse - 1) != 0) {
    throw DimensionError("restrict_to_coarse: meshes do not nest");
  }
  const Index ratio = (n_fine - 1) / (n_coarse - 1);
  Vector coarse(n_coarse);
  for (Index i = 0; i < n_coarse; ++i) coarse(i) = fine(i * ratio);
  return coarse;
}

enum class Fidelity { high, low };

/// State in the fine space: high solves at n_hf, low solves at n_lf and prolongs.
inline Vector snapshot(double theta, Fidelity fidelity, const AdvDiffConfig& config) {
  if (fidelity == Fidelity::high) return solve_adv_diff(theta, config.n_hf, config);
  return prolong(solve_adv_diff(theta, config.n_lf, config), config.n_hf);
}

/// Snapshot matrix, one column per parameter.
inline Matrix snapshots(const std::vector<double>& thetas, Fidelity fidelity,
                        const AdvDiffConfig& config) {
  Matrix s(config.n_hf, static_cast<Index>(thetas.size()));
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    s.col(static_cast<Index>(i)) = snapshot(thetas[i], fidelity, config);
  }
  return s;
}

/**
 * The two-fidelity advection-diffusion pair. Exposes the interface the
 * verification studies expect: high(θ), low(θ), metric(), range(), costs().
 */
class AdvDiffPair {
public:
  explicit AdvDiffPair(AdvDiffConfig config) : config_(config), metric_(l2_metric(config.n_hf)) {
    config_.validate();
  }

  Vector high(double theta) const { return snapshot(theta, Fidelity::high, config_); }
  Vector low(double theta) const { return snapshot(theta, Fidelity::low, config_); }
  const Metric& metric() const { return metric_; }
  ParameterRange range() const { return config_.theta_range; }
  ModelCosts costs() const { return ModelCosts::from(config_); }
  const AdvDiffConfig& config() const { return config_; }

private:
  AdvDiffConfig config_;
  Metric metric_;
};

} // namespace mfpod::models
