#pragma once

// Lorenz-96 dynamics on a ring of n components:
//
//   dx_j/dt = (x_{j+1} - x_{j-2}) x_{j-1} - x_j + F,
//
// with cyclic indexing. Chaotic for the standard choice n = 40, F = 8.

#include <ensda/core.hpp>

#include <cmath>
#include <string>

namespace ensda {

struct ModelParams {
  int n = 40;             ///< state dimension; >= 4 so the cyclic stencil is well formed
  double forcing = 8.0;   ///< external forcing F
  double abs_tol = 1e-7;  ///< integrator absolute tolerance (relative tolerance matches)
};

inline void validate(const ModelParams& params) {
  require(params.n >= 4, "ModelParams: n must be >= 4, got " + std::to_string(params.n));
  require(std::isfinite(params.forcing), "ModelParams: forcing must be finite");
  require(params.abs_tol > 0.0, "ModelParams: abs_tol must be > 0");
}

/// Tendency written in place; no allocation, usable as an integrator callback.
inline void lorenz96_rhs_inplace(const Eigen::Ref<const Eigen::VectorXd>& x, double forcing,
                                 Eigen::Ref<Eigen::VectorXd> dxdt) {
  const Eigen::Index n = x.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double xp1 = x[(j + 1) % n];
    const double xm2 = x[(j + n - 2) % n];
    const double xm1 = x[(j + n - 1) % n];
    dxdt[j] = (xp1 - xm2) * xm1 - x[j] + forcing;
  }
}

[[nodiscard]] inline StateVector lorenz96_rhs(const StateVector& x, const ModelParams& params) {
  validate(params);
  require(x.size() == params.n, "lorenz96_rhs: x.size must equal params.n");
  require_finite(x, "lorenz96_rhs: x");
  StateVector dxdt(x.size());
  lorenz96_rhs_inplace(x, params.forcing, dxdt);
  return dxdt;
}

}  // namespace ensda
