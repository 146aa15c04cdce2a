#pragma once

#include "mfpod/core.hpp"
#include "mfpod/models.hpp"

#include <random>

namespace testing_helpers {

using mfpod::Index;
using mfpod::Matrix;
using mfpod::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = d(gen);
  }
  return m;
}

inline Vector random_vector(Index n, std::mt19937_64& gen) { return random_matrix(n, 1, gen).col(0); }

/// Orthogonal matrix from the QR of a Gaussian matrix.
inline Matrix random_orthogonal(Index n, std::mt19937_64& gen) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, gen));
  return qr.householderQ() * Matrix::Identity(n, n);
}

/// FEM mass-matrix metric on a uniform mesh; a non-trivial SPD weight.
inline mfpod::Metric mass_metric(Index n) { return mfpod::models::l2_metric(n); }

/// Two-level instance with correlated fidelities: low = high + noise·perturbation.
inline std::vector<mfpod::SnapshotSet> random_two_level(Index n, Index m0, Index m1, std::mt19937_64& gen,
                                                        double noise = 0.3) {
  const Matrix high = random_matrix(n, m1, gen);
  const Matrix low = high + noise * random_matrix(n, m1, gen);
  return mfpod::make_two_level(high.leftCols(m0), low);
}

} // namespace testing_helpers
