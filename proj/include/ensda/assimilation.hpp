#pragma once

// Adjoint-free windowed variational solvers.
//
// Both methods minimize the windowed cost
//
//   J = (w/2) |beta|^2 + 1/2 sum_k | y_k - h_k(x_k) |^2 / std_dev^2
//
// over a control vector expressed in a per-time basis S_k that stands in for
// the tangent-linear evolution of the background uncertainty:
//
//   * full-space method ("MC"):  S_k = B_k^{1/2} from the modified-Cholesky
//     factors of the ensemble at time k (n-dimensional control, w = 1);
//   * ensemble-space method ("MLEF"): S_k = DX_k, the ensemble anomalies at
//     time k ((N)-dimensional control, w = N - 1).
//
// Each Gauss-Newton iteration linearizes the operator at the current snapshot
// trajectory, solves the normal equations for a direction, line searches the
// true windowed cost along it, and shifts every stored snapshot by its own
// basis image of the step (no model reruns inside the iteration by default;
// SolverConfig::repropagate_inner switches to re-running the model from the
// updated initial snapshot instead). Because rho = 0 is always an admissible
// step, the recorded cost sequence is non-increasing.

#include <ensda/ensemble.hpp>
#include <ensda/integrator.hpp>
#include <ensda/modified_cholesky.hpp>
#include <ensda/observation.hpp>

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace ensda {

struct AssimilationWindow {
  std::vector<int> times;  ///< global observation step indices, one per observed time
  std::vector<ObservationVector> observations;
  std::vector<ObservationNetwork> networks;
  ObsErrorModel err;
  double dt_obs = 0.5;  ///< model time between consecutive observed times
};

inline void validate(const AssimilationWindow& w) {
  require(!w.times.empty(), "AssimilationWindow: no observation times");
  require(w.observations.size() == w.times.size() && w.networks.size() == w.times.size(),
          "AssimilationWindow: times/observations/networks size mismatch");
  require(w.err.std_dev > 0.0, "AssimilationWindow: std_dev must be > 0");
  require(w.dt_obs > 0.0, "AssimilationWindow: dt_obs must be > 0");
  for (std::size_t k = 0; k < w.times.size(); ++k) {
    validate(w.networks[k]);
    require(w.observations[k].values.size() ==
                static_cast<Eigen::Index>(w.networks[k].observed_indices.size()),
            "AssimilationWindow: observation/network size mismatch");
    require_finite(w.observations[k].values, "AssimilationWindow: observations");
  }
}

struct LineSearchOptions {
  double c1 = 1e-4;           ///< Armijo sufficient-decrease constant
  double shrink = 0.5;        ///< backtracking factor
  int max_backtracks = 20;
  bool golden_refine = false;  ///< optional golden-section pass over [0, rho_max]
  double golden_tol = 1e-3;
};

struct SolverConfig {
  int max_iters = 10;            ///< Gauss-Newton iterations per window
  double convergence_tol = 0.0;  ///< early stop when |rho * direction| drops below; 0 disables
  LineSearchOptions line_search;
  bool repropagate_inner = false;  ///< re-run the model inside iterations instead of
                                   ///< shifting stored snapshots
};

struct SolverTrace {
  std::vector<double> cost_per_iter;  ///< window cost at the initial and each later iterate
  std::vector<double> step_lengths;   ///< accepted rho per iteration
  Eigen::VectorXd alpha_a;            ///< accumulated control-space increment
};

/// Windowed cost at the given snapshot trajectory and accumulated increment.
/// prior_weight is 1 for the full-space method and N - 1 for the
/// ensemble-space one.
[[nodiscard]] inline double window_cost(const std::vector<StateVector>& snapshots,
                                        const Eigen::VectorXd& beta, const AssimilationWindow& w,
                                        int gamma, double prior_weight = 1.0) {
  validate(w);
  require(snapshots.size() == w.times.size(), "window_cost: snapshot count mismatch");
  require(prior_weight > 0.0, "window_cost: prior_weight must be > 0");
  double cost = 0.5 * prior_weight * beta.squaredNorm();
  const double inv_var = 1.0 / (w.err.std_dev * w.err.std_dev);
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    const Eigen::VectorXd innovation =
        w.observations[k].values - apply_operator(snapshots[k], w.networks[k], gamma);
    cost += 0.5 * inv_var * innovation.squaredNorm();
  }
  require(std::isfinite(cost), "window_cost: non-finite cost");
  return cost;
}

struct NormalEquations {
  Eigen::MatrixXd hessian;  ///< prior_weight I + sum_k Q_k^T Q_k / std_dev^2
  Eigen::VectorXd rhs;      ///< -beta + sum_k Q_k^T d_k / std_dev^2
};

namespace detail {

/// Q_k = (operator tangent at snapshot k) * observed rows of basis k, and the
/// innovation d_k, accumulated into Gauss-Newton normal equations.
inline NormalEquations build_normal_equations(const std::vector<StateVector>& snapshots,
                                              const std::vector<Eigen::MatrixXd>& bases,
                                              const Eigen::VectorXd& beta,
                                              const AssimilationWindow& w, int gamma,
                                              double prior_weight) {
  require(bases.size() == snapshots.size(), "build_normal_equations: basis count mismatch");
  const Eigen::Index dim = bases.front().cols();
  require(beta.size() == dim, "build_normal_equations: beta dimension mismatch");

  NormalEquations ne;
  ne.hessian = prior_weight * Eigen::MatrixXd::Identity(dim, dim);
  ne.rhs = -beta;
  const double inv_var = 1.0 / (w.err.std_dev * w.err.std_dev);
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    const auto& labels = w.networks[k].observed_indices;
    const Eigen::Index m = static_cast<Eigen::Index>(labels.size());
    const Eigen::VectorXd tangent = operator_jacobian_diag(snapshots[k], w.networks[k], gamma);
    Eigen::MatrixXd q(m, dim);
    for (Eigen::Index j = 0; j < m; ++j) {
      q.row(j) = tangent[j] * bases[k].row(labels[static_cast<std::size_t>(j)] - 1);
    }
    const Eigen::VectorXd innovation =
        w.observations[k].values - apply_operator(snapshots[k], w.networks[k], gamma);
    ne.hessian.noalias() += inv_var * (q.transpose() * q);
    ne.rhs.noalias() += inv_var * (q.transpose() * innovation);
  }
  ne.hessian = 0.5 * (ne.hessian + ne.hessian.transpose().eval());
  return ne;
}

[[nodiscard]] inline Eigen::VectorXd solve_direction(const NormalEquations& ne) {
  Eigen::LLT<Eigen::MatrixXd> llt(ne.hessian);
  require(llt.info() == Eigen::Success, "gauss_newton_direction: Hessian not positive definite");
  Eigen::VectorXd dir = llt.solve(ne.rhs);
  require_finite(dir, "gauss_newton_direction: direction");
  return dir;
}

}  // namespace detail

/// Full-space Gauss-Newton direction: solves
/// [I + sum Q_k^T Q_k / s^2] a = -beta + sum Q_k^T d_k / s^2 with
/// Q_k = (tangent diag) * observed rows of B_k^{1/2}.
[[nodiscard]] inline Eigen::VectorXd gauss_newton_direction_mc(
    const std::vector<StateVector>& snapshots, const std::vector<PrecisionFactors>& factors,
    const Eigen::VectorXd& beta, const AssimilationWindow& w, int gamma) {
  validate(w);
  require(factors.size() == snapshots.size(), "gauss_newton_direction_mc: factor count mismatch");
  std::vector<Eigen::MatrixXd> bases;
  bases.reserve(factors.size());
  for (const auto& f : factors) bases.push_back(materialize_sqrt_B(f));
  return detail::solve_direction(detail::build_normal_equations(snapshots, bases, beta, w, gamma,
                                                                /*prior_weight=*/1.0));
}

/// Ensemble-space Gauss-Newton direction: same right-hand side with
/// Q_k = (tangent diag) * observed rows of DX_k and Hessian
/// (N - 1) I + sum Q_k^T Q_k / s^2.
[[nodiscard]] inline Eigen::VectorXd gauss_newton_direction_mlef(
    const std::vector<StateVector>& snapshots, const std::vector<AnomalyMatrix>& anomalies,
    const Eigen::VectorXd& beta, const AssimilationWindow& w, int gamma) {
  validate(w);
  require(anomalies.size() == snapshots.size(),
          "gauss_newton_direction_mlef: anomaly count mismatch");
  std::vector<Eigen::MatrixXd> bases(anomalies.begin(), anomalies.end());
  const double prior_weight = static_cast<double>(anomalies.front().cols() - 1);
  require(prior_weight > 0.0, "gauss_newton_direction_mlef: need at least two members");
  return detail::solve_direction(
      detail::build_normal_equations(snapshots, bases, beta, w, gamma, prior_weight));
}

/// Backtracking line search on eval_cost over [0, rho_max].
///
/// Accepts the first candidate satisfying the Armijo condition against
/// slope0 (the directional derivative of the local model at rho = 0) when one
/// is supplied, or any strict decrease otherwise. If no candidate is accepted
/// the best sampled point (including rho = 0) is returned, so
/// eval_cost(returned rho) <= eval_cost(0) always holds. The optional
/// golden-section pass refines the result over the full interval.
template <class F>
[[nodiscard]] double line_search(F&& eval_cost, double rho_max = 1.0,
                                 const LineSearchOptions& opt = {},
                                 std::optional<double> slope0 = std::nullopt) {
  require(rho_max > 0.0, "line_search: rho_max must be > 0");
  require(opt.shrink > 0.0 && opt.shrink < 1.0, "line_search: shrink must lie in (0, 1)");
  require(opt.max_backtracks >= 1, "line_search: max_backtracks must be >= 1");

  const double f0 = eval_cost(0.0);
  double best_rho = 0.0;
  double best_f = f0;
  double rho = rho_max;
  bool accepted = false;
  for (int trial = 0; trial < opt.max_backtracks && !accepted; ++trial) {
    const double f = eval_cost(rho);
    if (f < best_f) {
      best_f = f;
      best_rho = rho;
    }
    const bool armijo = slope0.has_value() && *slope0 < 0.0
                            ? f <= f0 + opt.c1 * rho * (*slope0)
                            : f < f0;
    if (armijo) {
      best_f = f;
      best_rho = rho;
      accepted = true;
    } else {
      rho *= opt.shrink;
    }
  }

  if (opt.golden_refine) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = 0.0, b = rho_max;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = eval_cost(c);
    double fd = eval_cost(d);
    while (b - a > opt.golden_tol) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = eval_cost(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = eval_cost(d);
      }
    }
    const double g = 0.5 * (a + b);
    const double fg = eval_cost(g);
    if (fg < best_f) {
      best_f = fg;
      best_rho = g;
    }
  }
  return best_rho;
}

/// Draws `count` vectors from N(mean, hessian^{-1}); with hessian = L L^T each
/// draw is mean + solve(L^T, xi), whose covariance is exactly hessian^{-1}.
[[nodiscard]] inline Eigen::MatrixXd sample_posterior_weights(const Eigen::VectorXd& mean,
                                                              const Eigen::MatrixXd& hessian,
                                                              int count, std::mt19937_64& rng) {
  require(count >= 1, "sample_posterior_weights: count must be >= 1");
  require(hessian.rows() == hessian.cols() && hessian.rows() == mean.size(),
          "sample_posterior_weights: shape mismatch");
  require_finite(hessian, "sample_posterior_weights: hessian");
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (hessian + hessian.transpose()));
  require(llt.info() == Eigen::Success, "sample_posterior_weights: hessian not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  Eigen::MatrixXd draws(mean.size(), count);
  for (int e = 0; e < count; ++e) {
    const Eigen::VectorXd xi = standard_normal_vector(mean.size(), rng);
    draws.col(e) = mean + lower.transpose().triangularView<Eigen::Upper>().solve(xi);
  }
  return draws;
}

/// Closed-form optimal ensemble-space weights for a linear operator
/// (gamma = 1):
///
///   w* = [(N-1) I + sum Q_k^T Q_k / s^2]^{-1} sum Q_k^T d_k / s^2,
///
/// computed by QR on the equivalent stacked least-squares system (a route
/// independent of the Cholesky-based direction solver, usable as an oracle).
[[nodiscard]] inline Eigen::VectorXd linear_4denkf_weights(
    const std::vector<StateVector>& snapshots, const std::vector<AnomalyMatrix>& anomalies,
    const AssimilationWindow& w) {
  validate(w);
  require(anomalies.size() == snapshots.size(), "linear_4denkf_weights: anomaly count mismatch");
  const Eigen::Index dim = anomalies.front().cols();
  require(dim >= 2, "linear_4denkf_weights: need at least two members");

  Eigen::Index rows_total = dim;
  for (const auto& net : w.networks) {
    rows_total += static_cast<Eigen::Index>(net.observed_indices.size());
  }
  Eigen::MatrixXd stacked(rows_total, dim);
  Eigen::VectorXd target(rows_total);
  const double inv_std = 1.0 / w.err.std_dev;
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    const auto& labels = w.networks[k].observed_indices;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      stacked.row(row) = inv_std * anomalies[k].row(labels[j] - 1);
      target[row] = inv_std * (w.observations[k].values[static_cast<Eigen::Index>(j)] -
                               snapshots[k][labels[j] - 1]);
      ++row;
    }
  }
  const double sqrt_prior = std::sqrt(static_cast<double>(dim - 1));
  stacked.bottomRows(dim) = sqrt_prior * Eigen::MatrixXd::Identity(dim, dim);
  target.tail(dim).setZero();
  return stacked.colPivHouseholderQr().solve(target);
}

namespace detail {

/// Shared Gauss-Newton window loop. X0 is the background ensemble at the first
/// observed time; bases/snapshots are per-time control maps and mean states.
/// Returns the posterior ensemble at the first observed time.
template <class Propagate>
std::pair<EnsembleMatrix, SolverTrace> iterate_window(
    const EnsembleMatrix& X0, const std::vector<Eigen::MatrixXd>& bases,
    std::vector<StateVector> snapshots, const AssimilationWindow& w, int gamma,
    double prior_weight, const SolverConfig& cfg, std::mt19937_64& rng, Propagate&& step_model) {
  require(cfg.max_iters >= 0, "SolverConfig: max_iters must be >= 0");
  const Eigen::Index dim = bases.front().cols();
  const std::size_t count = w.times.size();
  const StateVector background_mean0 = snapshots[0];
  if (cfg.repropagate_inner) {
    // Keep the stored trajectory chain-consistent with the model so the
    // recorded costs and the line-search baseline agree.
    for (std::size_t k = 1; k < count; ++k) snapshots[k] = step_model(snapshots[k - 1]);
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(dim);
  SolverTrace trace;
  trace.cost_per_iter.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);
  trace.step_lengths.reserve(static_cast<std::size_t>(cfg.max_iters));
  trace.cost_per_iter.push_back(window_cost(snapshots, beta, w, gamma, prior_weight));

  std::vector<StateVector> shifted(count);
  for (int u = 0; u < cfg.max_iters; ++u) {
    const NormalEquations ne =
        detail::build_normal_equations(snapshots, bases, beta, w, gamma, prior_weight);
    const Eigen::VectorXd dir = detail::solve_direction(ne);
    const double slope = -dir.dot(ne.hessian * dir);  // model slope along the direction

    std::vector<StateVector> steps(count);
    steps[0] = bases[0] * dir;
    if (!cfg.repropagate_inner) {
      for (std::size_t k = 1; k < count; ++k) steps[k] = bases[k] * dir;
    }
    auto eval = [&](double rho) {
      shifted[0] = snapshots[0] + rho * steps[0];
      for (std::size_t k = 1; k < count; ++k) {
        shifted[k] = cfg.repropagate_inner ? step_model(shifted[k - 1])
                                           : snapshots[k] + rho * steps[k];
      }
      return window_cost(shifted, beta + rho * dir, w, gamma, prior_weight);
    };
    const double rho = line_search(eval, 1.0, cfg.line_search, slope);

    snapshots[0] = snapshots[0] + rho * steps[0];
    for (std::size_t k = 1; k < count; ++k) {
      snapshots[k] = cfg.repropagate_inner ? step_model(snapshots[k - 1])
                                           : snapshots[k] + rho * steps[k];
    }
    beta += rho * dir;
    trace.step_lengths.push_back(rho);
    trace.cost_per_iter.push_back(window_cost(snapshots, beta, w, gamma, prior_weight));
    if (cfg.convergence_tol > 0.0 && rho * dir.norm() < cfg.convergence_tol) break;
  }
  trace.alpha_a = beta;

  // Posterior ensemble about the background mean: E[draw] = beta, so the
  // member average reproduces the analysis mean.
  const NormalEquations ne_final =
      detail::build_normal_equations(snapshots, bases, beta, w, gamma, prior_weight);
  const Eigen::MatrixXd draws =
      sample_posterior_weights(beta, ne_final.hessian, static_cast<int>(X0.cols()), rng);
  EnsembleMatrix analysis(X0.rows(), X0.cols());
  for (Eigen::Index e = 0; e < X0.cols(); ++e) {
    analysis.col(e) = background_mean0 + bases[0] * draws.col(e);
  }
  return {std::move(analysis), std::move(trace)};
}

/// Mean trajectory and per-time ensembles for the window: element k holds the
/// background ensemble propagated to observed time k (element 0 is X0 itself).
inline std::vector<EnsembleMatrix> window_ensembles(const EnsembleMatrix& X0,
                                                    const AssimilationWindow& w,
                                                    const ModelParams& model) {
  std::vector<EnsembleMatrix> members;
  members.reserve(w.times.size());
  members.push_back(X0);
  for (std::size_t k = 1; k < w.times.size(); ++k) {
    members.push_back(propagate_ensemble(members.back(), w.dt_obs, model));
  }
  return members;
}

}  // namespace detail

/// Full-space windowed solver. X0 is the background ensemble at the first
/// observed time of the window; the remaining observed times are reached by
/// propagating X0 forward in dt_obs steps. Precision factors are fitted once
/// per observed time from the propagated ensemble and reused across
/// iterations. Returns the posterior ensemble at the first observed time and
/// the iteration trace.
[[nodiscard]] inline std::pair<EnsembleMatrix, SolverTrace> solve_4dvar_mc(
    const EnsembleMatrix& X0, const AssimilationWindow& w, const ModelParams& model, int gamma,
    int r, const SolverConfig& cfg, std::mt19937_64& rng, double var_floor = 1e-8) {
  validate(w);
  require_ensemble(X0, "solve_4dvar_mc: X0");
  require(X0.rows() == model.n, "solve_4dvar_mc: X0 rows must equal model.n");

  const auto members = detail::window_ensembles(X0, w, model);
  std::vector<StateVector> snapshots;
  std::vector<Eigen::MatrixXd> bases;
  snapshots.reserve(members.size());
  bases.reserve(members.size());
  for (const auto& X : members) {
    snapshots.push_back(ensemble_mean(X));
    bases.push_back(materialize_sqrt_B(fit_precision(X, r, var_floor)));
  }
  auto step_model = [&](const StateVector& x) { return propagate(x, w.dt_obs, model); };
  return detail::iterate_window(X0, bases, std::move(snapshots), w, gamma,
                                /*prior_weight=*/1.0, cfg, rng, step_model);
}

/// Ensemble-space windowed solver: anomalies of the propagated background
/// ensemble are the per-time control basis and the prior carries weight N - 1.
[[nodiscard]] inline std::pair<EnsembleMatrix, SolverTrace> solve_4dvar_mlef(
    const EnsembleMatrix& X0, const AssimilationWindow& w, const ModelParams& model, int gamma,
    const SolverConfig& cfg, std::mt19937_64& rng) {
  validate(w);
  require_ensemble(X0, "solve_4dvar_mlef: X0");
  require(X0.rows() == model.n, "solve_4dvar_mlef: X0 rows must equal model.n");

  const auto members = detail::window_ensembles(X0, w, model);
  std::vector<StateVector> snapshots;
  std::vector<Eigen::MatrixXd> bases;
  snapshots.reserve(members.size());
  bases.reserve(members.size());
  for (const auto& X : members) {
    snapshots.push_back(ensemble_mean(X));
    bases.push_back(ensemble_anomalies(X));
  }
  const double prior_weight = static_cast<double>(X0.cols() - 1);
  auto step_model = [&](const StateVector& x) { return propagate(x, w.dt_obs, model); };
  return detail::iterate_window(X0, bases, std::move(snapshots), w, gamma, prior_weight, cfg, rng,
                                step_model);
}

}  // namespace ensda
