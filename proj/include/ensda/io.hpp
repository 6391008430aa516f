#pragma once

// Config (de)serialization and CSV emission.
//
// Config files are JSON objects mirroring ExperimentConfig field names, with
// model parameters nested under "model". Unknown keys are rejected; missing
// keys keep their defaults. Doubles are written with shortest round-trip
// formatting, rows end with LF.

#include <ensda/config.hpp>
#include <ensda/harness.hpp>

#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

namespace ensda {

/// Shortest decimal string that round-trips to the same double.
[[nodiscard]] inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

template <class T>
T number_from_json(const nlohmann::json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw config_error(key + " must be a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw config_error(key + " must be an integer");
    return v.get<T>();
  } else {
    if (!v.is_number()) throw config_error(key + " must be a number");
    return v.get<T>();
  }
}

inline void apply_model_key(ModelParams& model, const std::string& key,
                            const nlohmann::json& value) {
  if (key == "n") {
    model.n = number_from_json<int>(value, "model.n");
  } else if (key == "forcing") {
    model.forcing = number_from_json<double>(value, "model.forcing");
  } else if (key == "abs_tol") {
    model.abs_tol = number_from_json<double>(value, "model.abs_tol");
  } else {
    throw config_error("unknown config key \"model." + key + "\"");
  }
}

inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const nlohmann::json& value) {
  if (key == "model") {
    if (!value.is_object()) throw config_error("model must be an object");
    for (const auto& [k, v] : value.items()) apply_model_key(cfg.model, k, v);
  } else if (key == "N") {
    cfg.N = number_from_json<int>(value, key);
  } else if (key == "method") {
    if (!value.is_string()) throw config_error("method must be a string");
    cfg.method = method_from_string(value.get<std::string>());
  } else if (key == "gamma") {
    cfg.gamma = number_from_json<int>(value, key);
  } else if (key == "p") {
    cfg.p = number_from_json<double>(value, key);
  } else if (key == "r") {
    cfg.r = number_from_json<int>(value, key);
  } else if (key == "U") {
    cfg.U = number_from_json<int>(value, key);
  } else if (key == "M_steps") {
    cfg.M_steps = number_from_json<int>(value, key);
  } else if (key == "window_len") {
    cfg.window_len = number_from_json<int>(value, key);
  } else if (key == "dt_obs") {
    cfg.dt_obs = number_from_json<double>(value, key);
  } else if (key == "obs_std") {
    cfg.obs_std = number_from_json<double>(value, key);
  } else if (key == "init_perturb_std") {
    cfg.init_perturb_std = number_from_json<double>(value, key);
  } else if (key == "spinup_pre") {
    cfg.spinup_pre = number_from_json<double>(value, key);
  } else if (key == "spinup_post") {
    cfg.spinup_post = number_from_json<double>(value, key);
  } else if (key == "inflation") {
    cfg.inflation = number_from_json<double>(value, key);
  } else if (key == "replications") {
    cfg.replications = number_from_json<int>(value, key);
  } else if (key == "seed") {
    cfg.seed = number_from_json<std::uint64_t>(value, key);
  } else if (key == "convergence_tol") {
    cfg.convergence_tol = number_from_json<double>(value, key);
  } else if (key == "repropagate_inner") {
    cfg.repropagate_inner = number_from_json<bool>(value, key);
  } else {
    throw config_error("unknown config key \"" + key + "\"");
  }
}

}  // namespace detail

[[nodiscard]] inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw config_error("config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) detail::apply_config_key(cfg, key, value);
  return cfg;
}

[[nodiscard]] inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["model"] = {{"n", cfg.model.n}, {"forcing", cfg.model.forcing}, {"abs_tol", cfg.model.abs_tol}};
  j["N"] = cfg.N;
  j["method"] = to_string(cfg.method);
  j["gamma"] = cfg.gamma;
  j["p"] = cfg.p;
  j["r"] = cfg.r;
  j["U"] = cfg.U;
  j["M_steps"] = cfg.M_steps;
  j["window_len"] = cfg.window_len;
  j["dt_obs"] = cfg.dt_obs;
  j["obs_std"] = cfg.obs_std;
  j["init_perturb_std"] = cfg.init_perturb_std;
  j["spinup_pre"] = cfg.spinup_pre;
  j["spinup_post"] = cfg.spinup_post;
  j["inflation"] = cfg.inflation;
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  j["convergence_tol"] = cfg.convergence_tol;
  j["repropagate_inner"] = cfg.repropagate_inner;
  return j;
}

[[nodiscard]] inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file \"" + path + "\"");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& ex) {
    throw config_error("config parse error in \"" + path + "\": " + ex.what());
  }
  return j;
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
  return config_from_json(parse_json_file(path));
}

/// Applies one "key=value" override; keys use dotted paths (e.g. model.n).
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw config_error("override \"" + assignment + "\" is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  nlohmann::json parsed;
  if (key == "method") {
    parsed = value;  // method values are bare strings
  } else {
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      throw config_error("override value \"" + value + "\" for " + key + " is not valid");
    }
  }
  if (key.rfind("model.", 0) == 0) {
    detail::apply_model_key(cfg.model, key.substr(6), parsed);
  } else {
    detail::apply_config_key(cfg, key, parsed);
  }
}

inline constexpr const char* kResultsHeader = "method,gamma,N,r,p,W,replication,seed,rmse,wall_time_s";

/// One row per replication. wall_time_s is written as 0 unless with_timings
/// is set, keeping result files byte-reproducible run to run; measured
/// timings stay available in RunSummary (the CLI reports them on stderr).
inline void write_results_csv(std::ostream& os, const std::vector<RunSummary>& summaries,
                              bool with_timings = false) {
  os << kResultsHeader << "\n";
  for (const auto& s : summaries) {
    os << to_string(s.config.method) << ',' << s.config.gamma << ',' << s.config.N << ','
       << s.config.r << ',' << format_double(s.config.p) << ',' << s.config.window_len << ','
       << s.replication << ',' << s.seed_used << ',' << format_double(s.rmse) << ','
       << (with_timings ? format_double(s.wall_time_s) : "0") << "\n";
  }
}

inline constexpr const char* kTraceHeader = "replication,cycle,k,lambda_k,cost_final";

/// Per observation-step error rows; cycle and k are 1-based, cost_final is
/// the final window cost of the step's cycle (empty for NODA).
inline void write_trace_csv(std::ostream& os, const std::vector<RunSummary>& summaries) {
  os << kTraceHeader << "\n";
  for (const auto& s : summaries) {
    const int w = s.config.window_len;
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      const auto& m = s.steps[i];
      const int cycle = static_cast<int>(i) / w + 1;
      os << s.replication << ',' << cycle << ',' << m.step << ',' << format_double(m.l2_error)
         << ',';
      if (std::isfinite(m.cost_final)) os << format_double(m.cost_final);
      os << "\n";
    }
  }
}

}  // namespace ensda
