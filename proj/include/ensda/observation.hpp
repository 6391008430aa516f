#pragma once

// Componentwise power-law observation operator, its tangent diagonal,
// synthetic observation generation, and random network sampling.
//
// Each observed component s maps to
//
//   h(s) = (s / 2) * ((|s| / 2)^(gamma - 1) + 1),
//
// an odd function that is the identity for gamma = 1 and increasingly
// nonlinear as the integer exponent gamma grows.

#include <ensda/core.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace ensda {

struct ObservationNetwork {
  std::vector<int> observed_indices;  ///< strictly increasing 1-based state labels
  int n = 0;                          ///< state dimension the labels refer to
};

struct ObsErrorModel {
  double std_dev = 0.01;  ///< uncorrelated Gaussian noise level (R = std_dev^2 I)
};

struct ObservationVector {
  Eigen::VectorXd values;
  int time_index = 0;  ///< global observation step the values belong to
};

inline void validate(const ObservationNetwork& net) {
  require(net.n >= 1, "ObservationNetwork: n must be >= 1");
  require(!net.observed_indices.empty(), "ObservationNetwork: empty network");
  int prev = 0;
  for (int idx : net.observed_indices) {
    require(idx >= 1 && idx <= net.n,
            "ObservationNetwork: index " + std::to_string(idx) + " outside [1, n]");
    require(idx > prev, "ObservationNetwork: indices must be strictly increasing");
    prev = idx;
  }
}

inline void require_gamma(int gamma) {
  require(gamma >= 1 && gamma <= 7,
          "gamma must be within [1, 7], got " + std::to_string(gamma));
}

[[nodiscard]] inline double power_operator_scalar(double s, int gamma) {
  return 0.5 * s * (std::pow(0.5 * std::abs(s), gamma - 1) + 1.0);
}

/// d h(s) / d s = 1/2 + gamma |s|^(gamma-1) / 2^gamma; for s = 0 this is 1
/// when gamma = 1 and 1/2 otherwise, matching the one-sided limits.
[[nodiscard]] inline double power_operator_tangent_scalar(double s, int gamma) {
  return 0.5 + gamma * std::pow(std::abs(s), gamma - 1) / std::pow(2.0, gamma);
}

/// h applied to the observed components of x, in network order.
[[nodiscard]] inline Eigen::VectorXd apply_operator(const StateVector& x,
                                                    const ObservationNetwork& net, int gamma) {
  validate(net);
  require_gamma(gamma);
  require(x.size() == net.n, "apply_operator: x.size must equal net.n");
  require_finite(x, "apply_operator: x");
  Eigen::VectorXd out(static_cast<Eigen::Index>(net.observed_indices.size()));
  for (std::size_t j = 0; j < net.observed_indices.size(); ++j) {
    out[static_cast<Eigen::Index>(j)] = power_operator_scalar(x[net.observed_indices[j] - 1], gamma);
  }
  return out;
}

/// Diagonal of the operator Jacobian restricted to the observed components;
/// entry j is the tangent at x[observed_indices[j]].
[[nodiscard]] inline Eigen::VectorXd operator_jacobian_diag(const StateVector& x,
                                                            const ObservationNetwork& net,
                                                            int gamma) {
  validate(net);
  require_gamma(gamma);
  require(x.size() == net.n, "operator_jacobian_diag: x.size must equal net.n");
  require_finite(x, "operator_jacobian_diag: x");
  Eigen::VectorXd out(static_cast<Eigen::Index>(net.observed_indices.size()));
  for (std::size_t j = 0; j < net.observed_indices.size(); ++j) {
    out[static_cast<Eigen::Index>(j)] =
        power_operator_tangent_scalar(x[net.observed_indices[j] - 1], gamma);
  }
  return out;
}

/// Synthetic observation h(truth) + std_dev * xi with xi ~ N(0, I).
/// A std_dev below 1e-200 is treated as exactly zero noise (no draws), so the
/// noise-free limit reproduces apply_operator bit for bit.
[[nodiscard]] inline ObservationVector synthesize_observation(const StateVector& truth,
                                                              const ObservationNetwork& net,
                                                              int gamma, const ObsErrorModel& err,
                                                              std::mt19937_64& rng,
                                                              int time_index = 0) {
  require(err.std_dev >= 0.0, "synthesize_observation: std_dev must be >= 0");
  ObservationVector obs;
  obs.time_index = time_index;
  obs.values = apply_operator(truth, net, gamma);
  if (err.std_dev >= 1e-200) {
    obs.values += err.std_dev * standard_normal_vector(obs.values.size(), rng);
  }
  return obs;
}

/// Uniform random network observing round(p * n) distinct components.
[[nodiscard]] inline ObservationNetwork sample_network(int n, double p, std::mt19937_64& rng) {
  require(n >= 1, "sample_network: n must be >= 1");
  require(p > 0.0 && p <= 1.0, "p must be within (0, 1], got " + std::to_string(p));
  const int m = static_cast<int>(std::llround(p * n));
  require(m >= 1, "sample_network: p too small, round(p * n) < 1");

  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i + 1;
  for (int i = 0; i < m; ++i) {  // partial Fisher-Yates
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(pick(rng))]);
  }
  ObservationNetwork net;
  net.n = n;
  net.observed_indices.assign(labels.begin(), labels.begin() + m);
  std::sort(net.observed_indices.begin(), net.observed_indices.end());
  return net;
}

}  // namespace ensda
