#pragma once

// Shared aliases, error types, and deterministic RNG helpers.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ensda {

/// Model state, length n.
using StateVector = Eigen::VectorXd;
/// n x N matrix, one ensemble member per column.
using EnsembleMatrix = Eigen::MatrixXd;
/// n x N matrix of member deviations from the ensemble mean.
using AnomalyMatrix = Eigen::MatrixXd;

/// Thrown when an argument violates a documented precondition.
class contract_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown on invalid experiment configuration (bad field value, unknown key).
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when the adaptive integrator cannot advance; carries the last time
/// for which a valid solution was produced.
class integration_error : public std::runtime_error {
 public:
  integration_error(const std::string& what, double last_valid_time)
      : std::runtime_error(what), last_valid_time_(last_valid_time) {}

  [[nodiscard]] double last_valid_time() const noexcept { return last_valid_time_; }

 private:
  double last_valid_time_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw contract_error(message);
}

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const std::string& what) {
  if (!m.allFinite()) throw contract_error(what + ": non-finite entries");
}

/// splitmix64 mixing step; used only to derive well-separated seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic generator for (seed, stream). Distinct streams are
/// decorrelated, so each concurrent task can own one and results do not
/// depend on scheduling.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t s = seed ^ (0x632be59bd9b4e019ull * (stream + 1));
  const std::uint64_t a = splitmix64(s);
  const std::uint64_t b = splitmix64(s);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

/// k independent draws from N(0, 1).
inline Eigen::VectorXd standard_normal_vector(Eigen::Index k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace ensda
