// Command-line frontend for the windowed ensemble assimilation library.
//
// Subcommands:
//   run     one configuration, all replications; results CSV + mean RMSE
//   sweep   a JSON array of configurations
//   table   the benchmark grid (methods x gamma x N x r x p)
//   verify  built-in oracle/invariant suites
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
// Progress goes to standard error; standard output stays machine-parseable.

#include <ensda/harness.hpp>
#include <ensda/io.hpp>
#include <ensda/verification.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace ensda;

struct CommonOptions {
  std::string config_path;
  std::string out_path = "results.csv";
  std::string trace_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  bool timings = false;
};

[[nodiscard]] std::optional<std::uint64_t> seed_from_environment() {
  const char* raw = std::getenv("DA_SEED");
  if (raw == nullptr) return std::nullopt;
  std::uint64_t seed = 0;
  const char* end = raw + std::string_view(raw).size();
  const auto [ptr, ec] = std::from_chars(raw, end, seed);
  if (ec != std::errc{} || ptr != end) {
    throw config_error("DA_SEED must be an unsigned integer, got \"" + std::string(raw) + "\"");
  }
  return seed;
}

/// Config file, then --set overrides in order, then the DA_SEED environment
/// override; validated before use.
[[nodiscard]] ExperimentConfig effective_config(const CommonOptions& opts) {
  ExperimentConfig cfg =
      opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
  for (const auto& assignment : opts.overrides) apply_override(cfg, assignment);
  if (const auto seed = seed_from_environment()) cfg.seed = *seed;
  validate(cfg);
  return cfg;
}

void write_output_files(const CommonOptions& opts, const std::vector<RunSummary>& results) {
  std::ofstream out(opts.out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file \"" + opts.out_path + "\"");
  write_results_csv(out, results, opts.timings);
  if (!opts.trace_path.empty()) {
    std::ofstream trace(opts.trace_path, std::ios::binary);
    if (!trace) throw std::runtime_error("cannot open trace file \"" + opts.trace_path + "\"");
    write_trace_csv(trace, results);
  }
}

/// Reports failed runs on stderr; returns the process exit code.
[[nodiscard]] int report_failures(const std::vector<RunSummary>& results) {
  int failures = 0;
  for (const auto& r : results) {
    if (r.error.empty()) continue;
    ++failures;
    std::cerr << "replication " << r.replication << " (seed " << r.seed_used
              << ") failed: " << r.error << "\n";
  }
  return failures == 0 ? 0 : 1;
}

[[nodiscard]] double mean_rmse(const std::vector<RunSummary>& results) {
  double sum = 0.0;
  for (const auto& r : results) sum += r.rmse;  // NaN from failed runs propagates
  return sum / static_cast<double>(results.size());
}

int cmd_run(const CommonOptions& opts) {
  const ExperimentConfig cfg = effective_config(opts);
  std::cerr << "run: " << to_string(cfg.method) << ", gamma=" << cfg.gamma << ", N=" << cfg.N
            << ", r=" << cfg.r << ", p=" << cfg.p << ", " << cfg.replications
            << " replication(s)\n";
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<RunSummary> results = sweep({cfg}, opts.jobs);
  write_output_files(opts, results);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "wrote " << opts.out_path << " in " << elapsed << " s\n";
  std::cout << format_double(mean_rmse(results)) << "\n";
  return report_failures(results);
}

int cmd_sweep(const CommonOptions& opts) {
  if (opts.config_path.empty()) throw config_error("sweep requires --config");
  const nlohmann::json doc = parse_json_file(opts.config_path);
  std::vector<ExperimentConfig> configs;
  if (doc.is_array()) {
    for (const auto& item : doc) configs.push_back(config_from_json(item));
  } else {
    configs.push_back(config_from_json(doc));
  }
  if (configs.empty()) throw config_error("sweep config array is empty");
  const auto env_seed = seed_from_environment();
  for (auto& cfg : configs) {
    for (const auto& assignment : opts.overrides) apply_override(cfg, assignment);
    if (env_seed) cfg.seed = *env_seed;
    validate(cfg);
  }
  std::cerr << "sweep: " << configs.size() << " configuration(s)\n";
  const std::vector<RunSummary> results = sweep(configs, opts.jobs);
  write_output_files(opts, results);
  std::cerr << "wrote " << opts.out_path << " (" << results.size() << " rows)\n";
  return report_failures(results);
}

int cmd_table(const CommonOptions& opts, std::vector<int> gammas) {
  const ExperimentConfig base = effective_config(opts);
  if (gammas.empty()) gammas = {1, 2, 3, 4, 5, 6, 7};
  for (const int g : gammas) require_gamma(g);
  const std::vector<int> ensemble_sizes = {20, 60};
  const std::vector<int> radii = {2, 6, 18};
  const std::vector<double> fractions = {0.7, 1.0};

  // One flat config list: every MC cell, every MLEF cell (no radius
  // dependence), and a single unassimilated baseline, swept together so
  // --jobs parallelizes across the whole grid.
  std::vector<ExperimentConfig> configs;
  auto cell = [&base](Method method, int gamma, int n_members, int radius, double fraction) {
    ExperimentConfig c = base;
    c.method = method;
    c.gamma = gamma;
    c.N = n_members;
    c.r = radius;
    c.p = fraction;
    return c;
  };
  for (const int g : gammas)
    for (const int n_members : ensemble_sizes)
      for (const int radius : radii)
        for (const double fraction : fractions)
          configs.push_back(cell(Method::MC, g, n_members, radius, fraction));
  const std::size_t mlef_begin = configs.size();
  for (const int g : gammas)
    for (const int n_members : ensemble_sizes)
      for (const double fraction : fractions)
        configs.push_back(cell(Method::MLEF, g, n_members, base.r, fraction));
  const std::size_t noda_index = configs.size();
  configs.push_back(cell(Method::NODA, 1, base.N, base.r, 1.0));

  const int reps = base.replications;
  std::cerr << "table: " << configs.size() << " cells x " << reps << " replication(s)\n";
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<RunSummary> results = sweep(configs, opts.jobs);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "grid finished in " << elapsed << " s\n";

  // Results arrive ordered by configuration, then replication.
  auto cell_mean = [&results, reps](std::size_t config_index) {
    std::vector<RunSummary> block(results.begin() + static_cast<std::ptrdiff_t>(config_index * reps),
                                  results.begin() +
                                      static_cast<std::ptrdiff_t>((config_index + 1) * reps));
    return mean_rmse(block);
  };
  const double noda = cell_mean(noda_index);

  std::ofstream out(opts.out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file \"" + opts.out_path + "\"");
  out << "gamma,N,r,p,mc_rmse,mlef_rmse,noda_rmse\n";
  std::size_t mc_index = 0;
  std::size_t mlef_index = mlef_begin;
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    for (std::size_t ni = 0; ni < ensemble_sizes.size(); ++ni) {
      std::vector<double> mlef_by_fraction(fractions.size());
      for (std::size_t pi = 0; pi < fractions.size(); ++pi) {
        mlef_by_fraction[pi] = cell_mean(mlef_index++);
      }
      for (const int radius : radii) {
        for (std::size_t pi = 0; pi < fractions.size(); ++pi) {
          out << gammas[gi] << ',' << ensemble_sizes[ni] << ',' << radius << ','
              << format_double(fractions[pi]) << ',' << format_double(cell_mean(mc_index++)) << ','
              << format_double(mlef_by_fraction[pi]) << ',' << format_double(noda) << "\n";
        }
      }
    }
  }
  out.close();
  std::cerr << "wrote " << opts.out_path << "\n";
  return report_failures(results);
}

int cmd_verify(std::uint64_t seed) {
  if (const auto env_seed = seed_from_environment()) seed = *env_seed;
  const std::vector<CheckResult> checks = run_all_checks(seed);
  bool all_passed = true;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    all_passed = all_passed && c.passed;
  }
  return all_passed ? 0 : 1;
}

void add_common_options(CLI::App* cmd, CommonOptions& opts, bool with_trace = true) {
  cmd->add_option("--config", opts.config_path, "JSON configuration file");
  cmd->add_option("--set", opts.overrides,
                  "override a config field (key=value, dotted paths such as model.n); repeatable, "
                  "last one wins");
  cmd->add_option("--out", opts.out_path, "output CSV path")->capture_default_str();
  if (with_trace) cmd->add_option("--trace", opts.trace_path, "per-step trace CSV path");
  cmd->add_option("--jobs", opts.jobs, "worker threads for independent runs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--timings", opts.timings,
                "write measured wall times into the CSV (off by default so reruns are "
                "byte-identical)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"windowed ensemble data-assimilation experiments"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "run one configuration (all replications)");
  add_common_options(run, run_opts);

  CommonOptions sweep_opts;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a JSON array of configurations");
  add_common_options(sweep_cmd, sweep_opts);

  CommonOptions table_opts;
  table_opts.out_path = "table.csv";
  std::vector<int> gammas;
  CLI::App* table = app.add_subcommand("table", "run the benchmark grid and tabulate mean RMSE");
  add_common_options(table, table_opts, /*with_trace=*/false);
  table->add_option("--gammas", gammas, "operator exponents to include (default 1..7)")
      ->delimiter(',');

  std::uint64_t verify_seed = 1;
  CLI::App* verify = app.add_subcommand("verify", "run the built-in verification suites");
  verify->add_option("--seed", verify_seed, "seed for the randomized checks")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*sweep_cmd) return cmd_sweep(sweep_opts);
    if (*table) return cmd_table(table_opts, std::move(gammas));
    if (*verify) return cmd_verify(verify_seed);
  } catch (const config_error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
