#pragma once

// Adaptive Dormand-Prince 5(4) integration.
//
// The propagated solution is the fifth-order one; the embedded fourth-order
// solution only drives step-size control. Controller: scalar RMS error norm
// against abs_tol + rel_tol * |y|, step scale safety * err^(-1/5) clamped to
// [min_scale, max_scale], final step clipped to land exactly on the endpoint.

#include <ensda/core.hpp>
#include <ensda/lorenz96.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace ensda {

struct IntegratorOptions {
  double abs_tol = 1e-7;
  double rel_tol = 1e-7;
  double safety = 0.9;
  double min_scale = 0.2;  ///< strongest allowed step shrink
  double max_scale = 5.0;  ///< strongest allowed step growth
  double max_step = std::numeric_limits<double>::infinity();
  double min_step = 0.0;      ///< extra floor on the step; a machine-level floor always applies
  double initial_step = 0.0;  ///< 0 selects the automatic starting guess
  long max_steps = 20'000'000;  ///< safety valve against runaway integrations
};

namespace detail {

// Dormand-Prince tableau. b5 propagates, b5 - b4 is the error weight row.
inline constexpr double kC2 = 1.0 / 5, kC3 = 3.0 / 10, kC4 = 4.0 / 5, kC5 = 8.0 / 9;
inline constexpr double kA21 = 1.0 / 5;
inline constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
inline constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
inline constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187, kA53 = 64448.0 / 6561,
                        kA54 = -212.0 / 729;
inline constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                        kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
inline constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192,
                        kB5 = -2187.0 / 6784, kB6 = 11.0 / 84;
inline constexpr double kE1 = kB1 - 5179.0 / 57600, kE3 = kB3 - 7571.0 / 16695,
                        kE4 = kB4 - 393.0 / 640, kE5 = kB5 + 92097.0 / 339200,
                        kE6 = kB6 - 187.0 / 2100, kE7 = -1.0 / 40;

/// RMS of the step error against the mixed tolerance scale; accept when <= 1.
inline double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0,
                         const Eigen::VectorXd& y1, double abs_tol, double rel_tol) {
  const Eigen::ArrayXd scale =
      abs_tol + rel_tol * y0.array().abs().max(y1.array().abs());
  return std::sqrt((err.array() / scale).square().mean());
}

/// Starting step guess from the local derivative scale (one Euler probe).
template <class Rhs>
double initial_step_guess(Rhs& rhs, const Eigen::VectorXd& y0, const Eigen::VectorXd& f0,
                          double t0, double span, const IntegratorOptions& opt) {
  const Eigen::ArrayXd scale = opt.abs_tol + opt.rel_tol * y0.array().abs();
  const double d0 = std::sqrt((y0.array() / scale).square().mean());
  const double d1 = std::sqrt((f0.array() / scale).square().mean());
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  Eigen::VectorXd y1 = y0 + h0 * f0;
  Eigen::VectorXd f1(y0.size());
  rhs(t0 + h0, y1, f1);
  const double d2 = std::sqrt(((f1 - f0).array() / scale).square().mean()) / h0;
  const double d_max = std::max(d1, d2);
  const double h1 = (d_max <= 1e-15) ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / d_max, 0.2);
  return std::min({100.0 * h0, h1, span, opt.max_step});
}

}  // namespace detail

/// Integrates dy/dt = rhs(t, y) from t0 to t1 (t1 >= t0). The callback signature
/// is rhs(double t, const VectorXd& y, VectorXd& dydt). Throws integration_error
/// (carrying the last valid time) if the controlled step underflows.
template <class Rhs>
[[nodiscard]] StateVector dopri5_integrate(Rhs&& rhs, StateVector y, double t0, double t1,
                                           const IntegratorOptions& opt = {}) {
  require(y.size() > 0, "dopri5_integrate: empty state");
  require_finite(y, "dopri5_integrate: y0");
  require(std::isfinite(t0) && std::isfinite(t1) && t1 >= t0,
          "dopri5_integrate: need finite t1 >= t0");
  require(opt.abs_tol > 0 && opt.rel_tol >= 0, "dopri5_integrate: tolerances must be positive");
  require(opt.max_scale >= 1.0 && opt.min_scale > 0 && opt.min_scale <= 1.0,
          "dopri5_integrate: bad step-scale clamps");
  if (t1 == t0) return y;

  using detail::error_norm;
  namespace tb = detail;
  const Eigen::Index n = y.size();
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), y5(n), err(n);

  double t = t0;
  rhs(t, y, k1);
  double h = opt.initial_step > 0
                 ? std::min({opt.initial_step, t1 - t0, opt.max_step})
                 : detail::initial_step_guess(rhs, y, k1, t0, t1 - t0, opt);

  for (long step = 0; step < opt.max_steps; ++step) {
    const double floor =
        std::max(opt.min_step, 8.0 * std::numeric_limits<double>::epsilon() *
                                   std::max({std::abs(t), std::abs(t1), 1.0}));
    if (h < floor) {
      throw integration_error("dopri5_integrate: step size underflow at t = " + std::to_string(t),
                              t);
    }
    const double h_try = std::min(h, t1 - t);

    ytmp = y + h_try * (tb::kA21 * k1);
    rhs(t + tb::kC2 * h_try, ytmp, k2);
    ytmp = y + h_try * (tb::kA31 * k1 + tb::kA32 * k2);
    rhs(t + tb::kC3 * h_try, ytmp, k3);
    ytmp = y + h_try * (tb::kA41 * k1 + tb::kA42 * k2 + tb::kA43 * k3);
    rhs(t + tb::kC4 * h_try, ytmp, k4);
    ytmp = y + h_try * (tb::kA51 * k1 + tb::kA52 * k2 + tb::kA53 * k3 + tb::kA54 * k4);
    rhs(t + tb::kC5 * h_try, ytmp, k5);
    ytmp = y + h_try * (tb::kA61 * k1 + tb::kA62 * k2 + tb::kA63 * k3 + tb::kA64 * k4 +
                        tb::kA65 * k5);
    rhs(t + h_try, ytmp, k6);
    y5 = y + h_try * (tb::kB1 * k1 + tb::kB3 * k3 + tb::kB4 * k4 + tb::kB5 * k5 + tb::kB6 * k6);
    rhs(t + h_try, y5, k7);  // FSAL stage
    err = h_try * (tb::kE1 * k1 + tb::kE3 * k3 + tb::kE4 * k4 + tb::kE5 * k5 + tb::kE6 * k6 +
                   tb::kE7 * k7);

    const double en = error_norm(err, y, y5, opt.abs_tol, opt.rel_tol);
    if (!std::isfinite(en)) {
      throw integration_error("dopri5_integrate: non-finite state at t = " + std::to_string(t), t);
    }
    if (en <= 1.0) {
      t += h_try;
      y.swap(y5);
      k1.swap(k7);
      if (t >= t1) return y;
      const double scale = (en == 0.0) ? opt.max_scale
                                       : std::clamp(opt.safety * std::pow(en, -0.2),
                                                    opt.min_scale, opt.max_scale);
      h = std::min(h_try * scale, opt.max_step);
    } else {
      h = h_try * std::clamp(opt.safety * std::pow(en, -0.2), opt.min_scale, 1.0);
    }
  }
  throw integration_error("dopri5_integrate: step budget exhausted at t = " + std::to_string(t),
                          t);
}

/// Lorenz-96 state propagated forward by t_span model time units.
[[nodiscard]] inline StateVector propagate(const StateVector& x0, double t_span,
                                           const ModelParams& params,
                                           const IntegratorOptions& opt) {
  validate(params);
  require(x0.size() == params.n, "propagate: x0.size must equal params.n");
  require(std::isfinite(t_span) && t_span >= 0.0, "propagate: t_span must be finite and >= 0");
  auto rhs = [&params](double /*t*/, const Eigen::VectorXd& y, Eigen::VectorXd& dydt) {
    lorenz96_rhs_inplace(y, params.forcing, dydt);
  };
  return dopri5_integrate(rhs, x0, 0.0, t_span, opt);
}

[[nodiscard]] inline StateVector propagate(const StateVector& x0, double t_span,
                                           const ModelParams& params) {
  IntegratorOptions opt;
  opt.abs_tol = params.abs_tol;
  opt.rel_tol = params.abs_tol;
  return propagate(x0, t_span, params, opt);
}

/// Column-wise propagation of an ensemble; each member gets its own adaptive
/// step sequence, so results match member-at-a-time propagation exactly.
[[nodiscard]] inline EnsembleMatrix propagate_ensemble(const EnsembleMatrix& X, double t_span,
                                                       const ModelParams& params) {
  require(X.cols() >= 1, "propagate_ensemble: empty ensemble");
  EnsembleMatrix out(X.rows(), X.cols());
  for (Eigen::Index e = 0; e < X.cols(); ++e) {
    out.col(e) = propagate(X.col(e), t_span, params);
  }
  return out;
}

}  // namespace ensda
