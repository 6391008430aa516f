#pragma once

// Banded inverse-covariance estimation from an ensemble via row regressions
// (modified Cholesky decomposition):
//
//   Binv = L^T Dinv L,
//
// where L is unit lower triangular with nonzeros only against each row's
// predecessors (the up-to-r labels immediately before it) and Dinv holds the
// reciprocal residual variances. The implied covariance square root is
// B^{1/2} = L^{-1} D^{1/2}, applied by one triangular solve; it is full rank
// for any ensemble size, which is what lets a small ensemble steer all state
// components.
//
// Predecessor sets are label ranges and do not wrap around the ring: the
// estimator is defined for ordered labels, and conditional independence is
// asserted against earlier labels only.

#include <ensda/ensemble.hpp>

#include <algorithm>
#include <vector>

namespace ensda {

struct PrecisionFactors {
  Eigen::MatrixXd L;      ///< n x n unit lower triangular, band limited by the radius
  Eigen::VectorXd D_inv;  ///< n strictly positive reciprocal residual variances
  int radius = 0;
};

/// 1-based labels {max(1, i - r), ..., i - 1} regressed against component i.
[[nodiscard]] inline std::vector<int> predecessors(int i, int r, int n) {
  require(n >= 1, "predecessors: n must be >= 1");
  require(i >= 1 && i <= n, "predecessors: i must lie in [1, n]");
  require(r >= 0, "predecessors: r must be >= 0");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::min(r, i - 1)));
  for (int j = std::max(1, i - r); j <= i - 1; ++j) out.push_back(j);
  return out;
}

/// Fits L and Dinv from ensemble anomalies with localization radius r.
///
/// Each regression solves its normal equations on the (<= r)-dimensional
/// predictor block; a Tikhonov ridge of 1e-8 times the block's mean diagonal
/// is added if the block is rank deficient (e.g. when N - 1 < r). Residual
/// variances (unbiased, divisor N - 1) are floored by var_floor so Dinv stays
/// finite when members are collinear.
[[nodiscard]] inline PrecisionFactors fit_precision(const EnsembleMatrix& X, int r,
                                                    double var_floor = 1e-8) {
  require_ensemble(X, "fit_precision");
  require(r >= 0, "fit_precision: r must be >= 0");
  require(var_floor > 0.0, "fit_precision: var_floor must be > 0");

  const Eigen::Index n = X.rows();
  const double denom = static_cast<double>(X.cols() - 1);
  const AnomalyMatrix dx = ensemble_anomalies(X);

  PrecisionFactors f;
  f.radius = r;
  f.L = Eigen::MatrixXd::Identity(n, n);
  f.D_inv.resize(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - r);
    const Eigen::Index q = i - lo;
    double residual_var;
    if (q == 0) {
      residual_var = dx.row(i).squaredNorm() / denom;
    } else {
      const auto Z = dx.middleRows(lo, q).transpose();   // N x q predictor block
      const Eigen::VectorXd target = dx.row(i).transpose();
      Eigen::MatrixXd gram = Z.transpose() * Z;
      Eigen::VectorXd beta;
      if (gram.trace() <= 0.0) {
        beta = Eigen::VectorXd::Zero(q);  // all predictors identically zero
      } else {
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success) {
          gram.diagonal().array() += 1e-8 * gram.trace() / static_cast<double>(q);
          llt.compute(gram);
          require(llt.info() == Eigen::Success, "fit_precision: regression block not factorable");
        }
        beta = llt.solve(Z.transpose() * target);
      }
      f.L.row(i).segment(lo, q) = -beta.transpose();
      residual_var = (target - Z * beta).squaredNorm() / denom;
    }
    f.D_inv[i] = 1.0 / std::max(residual_var, var_floor);
  }
  require_finite(f.L, "fit_precision: L");
  require_finite(f.D_inv, "fit_precision: D_inv");
  return f;
}

/// z = B^{1/2} a, i.e. the solution of L z = D^{1/2} a (one forward solve).
[[nodiscard]] inline StateVector apply_sqrt_B(const PrecisionFactors& f, const StateVector& a) {
  require(a.size() == f.L.rows(), "apply_sqrt_B: size mismatch");
  require_finite(a, "apply_sqrt_B: a");
  const StateVector scaled = (a.array() / f.D_inv.array().sqrt()).matrix();
  return f.L.template triangularView<Eigen::Lower>().solve(scaled);
}

/// Dense B^{1/2} = L^{-1} D^{1/2}; column j equals apply_sqrt_B on the j-th
/// unit vector.
[[nodiscard]] inline Eigen::MatrixXd materialize_sqrt_B(const PrecisionFactors& f) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(f.L.rows(), f.L.cols());
  s.diagonal() = f.D_inv.array().rsqrt();
  f.L.template triangularView<Eigen::Lower>().solveInPlace(s);
  return s;
}

/// Dense estimated precision L^T Dinv L (diagnostics and verification).
[[nodiscard]] inline Eigen::MatrixXd materialize_precision(const PrecisionFactors& f) {
  return f.L.transpose() * f.D_inv.asDiagonal() * f.L;
}

}  // namespace ensda
