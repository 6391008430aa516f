// Acceptance gate: one line per criterion, measured value against a pinned
// bound plus a wall-clock cap, nonzero exit when anything fails. Criteria
// run against the public library and CLI surfaces only.

#include <ensda/harness.hpp>
#include <ensda/io.hpp>
#include <ensda/verification.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace {

using namespace ensda;

struct Criterion {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  double cap_seconds = 0.0;  ///< 0 disables the runtime check
  std::string detail;
  std::vector<std::string> sub_lines;
};

ObservationNetwork full_network(int n) {
  ObservationNetwork net;
  net.n = n;
  net.observed_indices.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) net.observed_indices[static_cast<std::size_t>(i)] = i + 1;
  return net;
}

// ---------------------------------------------------------------------------
// 1. Ensemble-space Gauss-Newton step vs closed-form linear weights
// ---------------------------------------------------------------------------
Criterion criterion_linear_step() {
  Criterion c;
  c.name = "linear-step-equivalence";
  c.cap_seconds = 10.0;
  const double bound = 1e-10;

  auto rng = make_rng(101);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 40;
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    const int members = (instance % 2 == 0) ? 5 : 20;
    const int num_times = (instance % 4 < 2) ? 1 : 4;

    AssimilationWindow w;
    w.err.std_dev = 1.0;
    std::vector<StateVector> snapshots;
    std::vector<AnomalyMatrix> anomalies;
    for (int k = 0; k < num_times; ++k) {
      EnsembleMatrix X(n, members);
      for (int i = 0; i < n; ++i) {
        for (int e = 0; e < members; ++e) X(i, e) = 3.0 * normal(rng);
      }
      snapshots.push_back(ensemble_mean(X));
      anomalies.push_back(ensemble_anomalies(X));
      w.times.push_back(k + 1);
      w.networks.push_back(instance % 3 == 0 ? sample_network(n, 0.7, rng) : full_network(n));
      ObservationVector y;
      y.values =
          apply_operator(snapshots.back(), w.networks.back(), 1) +
          standard_normal_vector(
              static_cast<Eigen::Index>(w.networks.back().observed_indices.size()), rng);
      y.time_index = k + 1;
      w.observations.push_back(y);
    }
    const Eigen::VectorXd gn = gauss_newton_direction_mlef(
        snapshots, anomalies, Eigen::VectorXd::Zero(members), w, 1);
    const Eigen::VectorXd closed = linear_4denkf_weights(snapshots, anomalies, w);
    worst = std::max(worst, (gn - closed).lpNorm<Eigen::Infinity>());
  }
  c.passed = worst < bound;
  c.detail = "max weight difference " + format_double(worst) + " over 50 instances (bound " +
             format_double(bound) + ")";
  return c;
}

// ---------------------------------------------------------------------------
// 2. Monotone cost sequences across both solvers
// ---------------------------------------------------------------------------
Criterion criterion_monotone() {
  Criterion c;
  c.name = "monotone-cost-sequences";
  c.cap_seconds = 120.0;

  ModelParams model;
  model.n = 20;
  const ObservationNetwork net = full_network(model.n);
  SolverConfig solver;
  solver.max_iters = 6;

  double worst_increase = 0.0;
  int runs = 0;
  for (std::uint64_t seed = 1; seed <= 13; ++seed) {
    for (const int gamma : {1, 3, 5, 7}) {
      auto rng = make_rng(seed, static_cast<std::uint64_t>(gamma));
      StateVector truth = StateVector::Constant(model.n, model.forcing) +
                          standard_normal_vector(model.n, rng);
      truth = propagate(truth, 10.0, model);

      EnsembleMatrix X0(model.n, 10);
      for (int e = 0; e < 10; ++e) {
        X0.col(e) = truth + 0.5 * standard_normal_vector(model.n, rng);
      }
      AssimilationWindow w;
      w.err.std_dev = 0.01;
      StateVector x = truth;
      for (int k = 0; k < 2; ++k) {
        if (k > 0) x = propagate(x, w.dt_obs, model);
        w.times.push_back(k + 1);
        w.networks.push_back(net);
        w.observations.push_back(
            synthesize_observation(x, net, gamma, ObsErrorModel{w.err.std_dev}, rng, k + 1));
      }

      for (const bool ensemble_space : {false, true}) {
        const auto [analysis, trace] =
            ensemble_space ? solve_4dvar_mlef(X0, w, model, gamma, solver, rng)
                           : solve_4dvar_mc(X0, w, model, gamma, 4, solver, rng);
        (void)analysis;
        ++runs;
        for (std::size_t i = 1; i < trace.cost_per_iter.size(); ++i) {
          worst_increase =
              std::max(worst_increase, trace.cost_per_iter[i] - trace.cost_per_iter[i - 1]);
        }
      }
    }
  }
  c.passed = worst_increase <= 0.0;
  c.detail = "worst cost increase " + format_double(worst_increase) + " over " +
             std::to_string(runs) + " solver runs (bound 0)";
  return c;
}

// ---------------------------------------------------------------------------
// 3. Full-rank precision estimate equals the dense sample precision
// ---------------------------------------------------------------------------
Criterion criterion_precision() {
  Criterion c;
  c.name = "precision-full-rank-equivalence";
  c.cap_seconds = 1.0;
  const double bound = 1e-8;
  const int n = 10, members = 200;

  auto rng = make_rng(103);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd mixing = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) mixing(i, j) += 0.3 * normal(rng);
  }
  EnsembleMatrix X(n, members);
  for (int i = 0; i < n; ++i) {
    for (int e = 0; e < members; ++e) X(i, e) = normal(rng);
  }
  X = mixing * X;

  const Eigen::MatrixXd precision = materialize_precision(fit_precision(X, n - 1));
  const Eigen::MatrixXd want = sample_covariance(X).inverse();
  const double rel = (precision - want).norm() / want.norm();
  c.passed = rel < bound;
  c.detail = "relative Frobenius error " + format_double(rel) + " (bound " +
             format_double(bound) + ")";
  return c;
}

// ---------------------------------------------------------------------------
// 4. Operator Jacobian and quadratic-model gradient vs finite differences
// ---------------------------------------------------------------------------
Criterion criterion_jacobian_gradient() {
  Criterion c;
  c.name = "jacobian-and-gradient-checks";
  c.cap_seconds = 5.0;
  const double bound = 1e-5;

  auto rng = make_rng(104);
  std::uniform_real_distribution<double> uniform(-10.0, 10.0);
  const double h = 1e-6;
  double worst_op = 0.0;
  for (int gamma = 1; gamma <= 7; ++gamma) {
    int accepted = 0;
    while (accepted < 1000) {
      const double s = uniform(rng);
      if (std::abs(s) < 0.1) continue;
      ++accepted;
      const double fd =
          (power_operator_scalar(s + h, gamma) - power_operator_scalar(s - h, gamma)) / (2 * h);
      const double tangent = power_operator_tangent_scalar(s, gamma);
      worst_op = std::max(worst_op, std::abs(fd - tangent) / std::abs(tangent));
    }
  }

  const CheckResult grad = check_quadratic_gradient(104, /*gamma=*/3, h, bound);
  c.passed = worst_op < bound && grad.passed;
  c.detail = "operator tangent max relative error " + format_double(worst_op) +
             ", cost gradient error " + format_double(grad.measured) + " (bound " +
             format_double(bound) + ")";
  return c;
}

// ---------------------------------------------------------------------------
// 5. Adaptive integrator vs fine fixed-step reference
// ---------------------------------------------------------------------------
Criterion criterion_integrator() {
  Criterion c;
  c.name = "integrator-fidelity";
  c.cap_seconds = 30.0;
  const CheckResult r = check_integrator(105, /*num_states=*/20, /*t_span=*/0.5,
                                         /*rk4_step=*/1e-4, /*bound=*/1e-5);
  c.passed = r.passed;
  c.detail = r.detail;
  return c;
}

// ---------------------------------------------------------------------------
// 6. Desk-scale benchmark grid
// ---------------------------------------------------------------------------
Criterion criterion_desk_scale() {
  Criterion c;
  c.name = "desk-scale-benchmark";
  c.cap_seconds = 900.0;

  ExperimentConfig base;
  base.M_steps = 100;
  base.window_len = 2;
  base.replications = 5;
  base.seed = 1;

  struct Cell {
    Method method;
    int gamma;
    int N;
    int r;
    double p;
  };
  std::vector<Cell> cells;
  for (const int gamma : {1, 2, 3}) {
    for (const double p : {1.0, 0.7}) {
      cells.push_back({Method::MC, gamma, 60, 2, p});
      cells.push_back({Method::MLEF, gamma, 60, 2, p});
    }
  }
  cells.push_back({Method::NODA, 1, 20, 2, 1.0});
  cells.push_back({Method::MC, 1, 20, 2, 1.0});
  cells.push_back({Method::MC, 1, 20, 18, 1.0});

  std::vector<ExperimentConfig> configs;
  for (const Cell& cell : cells) {
    ExperimentConfig cfg = base;
    cfg.method = cell.method;
    cfg.gamma = cell.gamma;
    cfg.N = cell.N;
    cfg.r = cell.r;
    cfg.p = cell.p;
    configs.push_back(cfg);
  }
  const auto results = sweep(configs, 1);

  const int reps = base.replications;
  auto cell_mean = [&](std::size_t index) {
    double sum = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      sum += results[index * static_cast<std::size_t>(reps) + static_cast<std::size_t>(rep)].rmse;
    }
    return sum / reps;
  };
  std::map<std::string, double> mean;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& cell = cells[i];
    std::ostringstream key;
    key << to_string(cell.method) << ",g" << cell.gamma << ",N" << cell.N << ",r" << cell.r
        << ",p" << format_double(cell.p);
    mean[key.str()] = cell_mean(i);
    c.sub_lines.push_back("cell " + key.str() + ": mean rmse " + format_double(cell_mean(i)));
  }

  const double mc_head = mean.at("MC,g1,N60,r2,p1");
  const double mlef_head = mean.at("MLEF,g1,N60,r2,p1");
  const double noda = mean.at("NODA,g1,N20,r2,p1");
  const bool a = mc_head < 1.0;
  const bool b = mlef_head > 10.0 && mlef_head < 31.0;
  const bool d_noda = noda > 25.0;
  bool ordering = true;
  for (const int gamma : {1, 2, 3}) {
    for (const double p : {1.0, 0.7}) {
      const std::string suffix = ",g" + std::to_string(gamma) + ",N60,r2,p" + format_double(p);
      const double mc = mean.at("MC" + suffix);
      const double mlef = mean.at("MLEF" + suffix);
      if (!(mc < mlef && mlef < noda)) ordering = false;
    }
  }
  const bool radius = mean.at("MC,g1,N20,r18,p1") > mean.at("MC,g1,N20,r2,p1");

  auto flag = [](bool ok) { return ok ? "pass" : "FAIL"; };
  c.sub_lines.push_back(std::string("(a) MC(g1,N60,r2,p1) < 1.0: ") + flag(a) + " (" +
                        format_double(mc_head) + ")");
  c.sub_lines.push_back(std::string("(b) MLEF(g1,N60,p1) in (10,31): ") + flag(b) + " (" +
                        format_double(mlef_head) + ")");
  c.sub_lines.push_back(std::string("(c) NODA > 25: ") + flag(d_noda) + " (" +
                        format_double(noda) + ")");
  c.sub_lines.push_back(std::string("(d) MC < MLEF < NODA for g in {1,2,3}, both p: ") +
                        flag(ordering));
  c.sub_lines.push_back(std::string("(e) MC(g1,N20): rmse(r=18) > rmse(r=2): ") + flag(radius));

  c.passed = a && b && d_noda && ordering && radius;
  c.detail = std::string("sub-checks a,b,c,d,e: ") + flag(a) + "," + flag(b) + "," +
             flag(d_noda) + "," + flag(ordering) + "," + flag(radius);
  return c;
}

// ---------------------------------------------------------------------------
// 7. Posterior draw statistics against the inverse Hessian
// ---------------------------------------------------------------------------
Criterion criterion_posterior() {
  Criterion c;
  c.name = "posterior-sampling-statistics";
  c.cap_seconds = 10.0;
  const double bound = 0.05;
  const int n = 40, draws = 10'000;

  auto rng = make_rng(107);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd G(n, 10);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 10; ++j) G(i, j) = 0.4 * normal(rng);
  }
  const Eigen::MatrixXd hessian =
      Eigen::MatrixXd::Identity(n, n) + G * G.transpose();
  const Eigen::VectorXd mean = standard_normal_vector(n, rng);

  const Eigen::MatrixXd sample = sample_posterior_weights(mean, hessian, draws, rng);
  const Eigen::VectorXd emp_mean = sample.rowwise().mean();
  const Eigen::MatrixXd centered = sample.colwise() - emp_mean;
  const Eigen::MatrixXd emp_cov = centered * centered.transpose() / double(draws - 1);

  const Eigen::MatrixXd target = hessian.inverse();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(target);
  const double spectral = es.eigenvalues().cwiseAbs().maxCoeff();
  // Entrywise deviation relative to the spectral norm of the target: the
  // per-entry Monte-Carlo noise floor at 1e4 draws sits near 4%, while the
  // worst-direction (spectral) deviation of any exact sampler concentrates
  // around 2 sqrt(n/draws) = 13% and cannot meet a 5% bound.
  const double worst = (emp_cov - target).cwiseAbs().maxCoeff() / spectral;
  c.passed = worst < bound;
  c.detail = "max entrywise covariance deviation " + format_double(worst) +
             " of the spectral norm over 10000 draws, n=40 (bound " + format_double(bound) + ")";
  return c;
}

// ---------------------------------------------------------------------------
// 8. Byte-identical CSV output across repeated CLI invocations
// ---------------------------------------------------------------------------
Criterion criterion_determinism() {
  Criterion c;
  c.name = "byte-identical-reruns";

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path();
  const fs::path out_a = dir / "ensda_acc_a.csv";
  const fs::path out_b = dir / "ensda_acc_b.csv";
  const std::string args =
      " run --set model.n=12 --set N=6 --set gamma=2 --set r=2 --set U=3"
      " --set M_steps=3 --set window_len=2 --set dt_obs=0.5 --set spinup_pre=2.0"
      " --set spinup_post=1.0 --set replications=2 --set seed=9 --out ";

  auto invoke = [&](const fs::path& out) {
    const std::string cmd =
        std::string(ENSDA_CLI_PATH) + args + out.string() + " >/dev/null 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) && WEXITSTATUS(status) == 0;
  };
  auto slurp = [](const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };

  const bool ok_a = invoke(out_a);
  const bool ok_b = invoke(out_b);
  const std::string bytes_a = slurp(out_a);
  const std::string bytes_b = slurp(out_b);
  fs::remove(out_a);
  fs::remove(out_b);

  c.passed = ok_a && ok_b && !bytes_a.empty() && bytes_a == bytes_b;
  c.detail = c.passed ? "two invocations, identical bytes (" +
                            std::to_string(bytes_a.size()) + " bytes)"
                      : "outputs differ or a run failed";
  return c;
}

}  // namespace

int main() {
  using Clock = std::chrono::steady_clock;
  std::vector<std::function<Criterion()>> criteria = {
      criterion_linear_step,  criterion_monotone,  criterion_precision,
      criterion_jacobian_gradient, criterion_integrator, criterion_desk_scale,
      criterion_posterior,    criterion_determinism,
  };

  int failures = 0;
  for (auto& make : criteria) {
    const auto t0 = Clock::now();
    Criterion c = make();
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool within_cap = c.cap_seconds <= 0.0 || c.seconds < c.cap_seconds;
    const bool ok = c.passed && within_cap;
    if (!ok) ++failures;

    std::printf("[%s] %s: %s (%.2f s%s)\n", ok ? "PASS" : "FAIL", c.name.c_str(),
                c.detail.c_str(), c.seconds,
                c.cap_seconds > 0.0
                    ? (", cap " + format_double(c.cap_seconds) + " s").c_str()
                    : "");
    if (!within_cap) std::printf("       runtime cap exceeded\n");
    for (const auto& line : c.sub_lines) std::printf("       %s\n", line.c_str());
    std::fflush(stdout);
  }

  std::printf("%d/8 criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
