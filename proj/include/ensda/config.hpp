#pragma once

// Experiment configuration: every knob of a twin-experiment run, with strict
// validation. JSON parsing lives in io.hpp so the numerical headers do not
// depend on the JSON library.

#include <ensda/lorenz96.hpp>

#include <cmath>
#include <string>

namespace ensda {

enum class Method { MC, MLEF, LINEAR_4DENKF, NODA };

[[nodiscard]] inline std::string to_string(Method m) {
  switch (m) {
    case Method::MC: return "MC";
    case Method::MLEF: return "MLEF";
    case Method::LINEAR_4DENKF: return "LINEAR_4DENKF";
    case Method::NODA: return "NODA";
  }
  return "?";
}

[[nodiscard]] inline Method method_from_string(const std::string& s) {
  if (s == "MC") return Method::MC;
  if (s == "MLEF") return Method::MLEF;
  if (s == "LINEAR_4DENKF") return Method::LINEAR_4DENKF;
  if (s == "NODA") return Method::NODA;
  throw config_error("method must be one of MC, MLEF, LINEAR_4DENKF, NODA, got \"" + s + "\"");
}

struct ExperimentConfig {
  ModelParams model;               ///< dynamics and integrator tolerance
  int N = 20;                      ///< ensemble size
  Method method = Method::MC;
  int gamma = 1;                   ///< observation-operator exponent
  double p = 1.0;                  ///< observed fraction of components per network
  int r = 2;                       ///< precision localization radius
  int U = 10;                      ///< Gauss-Newton iterations per window
  int M_steps = 100;               ///< assimilation cycles per run
  int window_len = 2;              ///< observed times per window (W)
  double dt_obs = 0.5;             ///< model time between observations
  double obs_std = 0.01;           ///< observation noise standard deviation
  double init_perturb_std = 0.05;  ///< spin-up perturbation standard deviation
  double spinup_pre = 20.0;        ///< time units before the truth is sampled
  double spinup_post = 10.0;       ///< time units per spin-up branch stage
  double inflation = 1.0;          ///< anomaly inflation at cycle start
  int replications = 5;
  std::uint64_t seed = 1;
  double convergence_tol = 0.0;     ///< solver early-stop threshold; 0 disables
  bool repropagate_inner = false;   ///< solver snapshot handling (see SolverConfig)
};

namespace detail {

inline void check(bool ok, const std::string& message) {
  if (!ok) throw config_error(message);
}

}  // namespace detail

inline void validate(const ExperimentConfig& cfg) {
  using detail::check;
  check(cfg.model.n >= 4, "model.n must be >= 4, got " + std::to_string(cfg.model.n));
  check(std::isfinite(cfg.model.forcing), "model.forcing must be finite");
  check(cfg.model.abs_tol > 0.0, "model.abs_tol must be > 0");
  check(cfg.N >= 2, "N must be >= 2, got " + std::to_string(cfg.N));
  check(cfg.gamma >= 1 && cfg.gamma <= 7,
        "gamma must be within [1, 7], got " + std::to_string(cfg.gamma));
  check(cfg.p > 0.0 && cfg.p <= 1.0, "p must be within (0, 1], got " + std::to_string(cfg.p));
  check(std::llround(cfg.p * cfg.model.n) >= 1, "p too small: round(p * n) must be >= 1");
  check(cfg.r >= 0 && cfg.r <= cfg.model.n - 1,
        "r must be within [0, n - 1], got " + std::to_string(cfg.r));
  check(cfg.U >= 0, "U must be >= 0, got " + std::to_string(cfg.U));
  check(cfg.M_steps >= 1, "M_steps must be >= 1, got " + std::to_string(cfg.M_steps));
  check(cfg.window_len >= 1, "window_len must be >= 1, got " + std::to_string(cfg.window_len));
  check(std::isfinite(cfg.dt_obs) && cfg.dt_obs > 0.0, "dt_obs must be > 0");
  check(cfg.obs_std > 0.0, "obs_std must be > 0");
  check(cfg.init_perturb_std >= 0.0, "init_perturb_std must be >= 0");
  check(std::isfinite(cfg.spinup_pre) && cfg.spinup_pre >= 0.0, "spinup_pre must be >= 0");
  check(std::isfinite(cfg.spinup_post) && cfg.spinup_post >= 0.0, "spinup_post must be >= 0");
  check(cfg.inflation >= 1.0, "inflation must be >= 1, got " + std::to_string(cfg.inflation));
  check(cfg.replications >= 1,
        "replications must be >= 1, got " + std::to_string(cfg.replications));
  check(cfg.convergence_tol >= 0.0, "convergence_tol must be >= 0");
  check(cfg.method != Method::LINEAR_4DENKF || cfg.gamma == 1,
        "method LINEAR_4DENKF requires gamma = 1");
}

}  // namespace ensda
