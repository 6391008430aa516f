#pragma once

// Ensemble first/second-moment helpers shared by the assimilation methods.

#include <ensda/core.hpp>

namespace ensda {

inline void require_ensemble(const EnsembleMatrix& X, const std::string& what = "ensemble") {
  require(X.rows() >= 1, what + ": empty state dimension");
  require(X.cols() >= 2, what + ": need at least two members");
  require_finite(X, what);
}

[[nodiscard]] inline StateVector ensemble_mean(const EnsembleMatrix& X) {
  require_ensemble(X);
  return X.rowwise().mean();
}

/// Member deviations from the mean; columns sum to zero.
[[nodiscard]] inline AnomalyMatrix ensemble_anomalies(const EnsembleMatrix& X) {
  require_ensemble(X);
  const StateVector mean = X.rowwise().mean();
  return X.colwise() - mean;
}

/// Unbiased sample covariance DX DX^T / (N - 1); symmetric PSD, rank <= N - 1.
[[nodiscard]] inline Eigen::MatrixXd sample_covariance(const EnsembleMatrix& X) {
  const AnomalyMatrix dx = ensemble_anomalies(X);
  Eigen::MatrixXd cov = (dx * dx.transpose()) / static_cast<double>(X.cols() - 1);
  return 0.5 * (cov + cov.transpose());  // exact symmetry despite rounding
}

/// Multiplicative anomaly inflation about the (preserved) ensemble mean.
[[nodiscard]] inline EnsembleMatrix inflate(const EnsembleMatrix& X, double factor) {
  require(factor >= 1.0, "inflate: factor must be >= 1, got " + std::to_string(factor));
  if (factor == 1.0) return X;  // keep the no-inflation path bit-exact
  const StateVector mean = ensemble_mean(X);
  return (factor * (X.colwise() - mean)).colwise() + mean;
}

}  // namespace ensda
