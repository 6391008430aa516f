#include <catch2/catch_amalgamated.hpp>

#include <ensda/ensemble.hpp>

#include <random>

namespace {

using namespace ensda;

EnsembleMatrix random_ensemble(int n, int members, std::uint64_t seed, double spread = 2.0) {
  auto rng = make_rng(seed, 23);
  std::normal_distribution<double> normal(0.0, spread);
  EnsembleMatrix X(n, members);
  for (int i = 0; i < n; ++i) {
    for (int e = 0; e < members; ++e) X(i, e) = normal(rng);
  }
  return X;
}

}  // namespace

TEST_CASE("mean and anomalies on a worked two-member example", "[ensemble]") {
  EnsembleMatrix X(2, 2);
  X << 1.0, 3.0, 2.0, 6.0;
  const StateVector mean = ensemble_mean(X);
  CHECK(mean[0] == 2.0);
  CHECK(mean[1] == 4.0);
  const AnomalyMatrix dx = ensemble_anomalies(X);
  CHECK(dx(0, 0) == -1.0);
  CHECK(dx(0, 1) == 1.0);
  CHECK(dx(1, 0) == -2.0);
  CHECK(dx(1, 1) == 2.0);
}

TEST_CASE("anomaly rows sum to zero", "[ensemble]") {
  const AnomalyMatrix dx = ensemble_anomalies(random_ensemble(15, 7, 5));
  CHECK(dx.rowwise().sum().lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("sample covariance matches the outer-product definition", "[ensemble]") {
  const EnsembleMatrix X = random_ensemble(6, 40, 9);
  const StateVector mean = ensemble_mean(X);
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(6, 6);
  for (int e = 0; e < X.cols(); ++e) {
    const StateVector d = X.col(e) - mean;
    want += d * d.transpose();
  }
  want /= static_cast<double>(X.cols() - 1);
  const Eigen::MatrixXd got = sample_covariance(X);
  CHECK((got - want).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((got - got.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(got);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("inflation scales anomalies and preserves the mean", "[ensemble]") {
  const EnsembleMatrix X = random_ensemble(10, 12, 21);
  const EnsembleMatrix Y = inflate(X, 1.5);
  CHECK((ensemble_mean(Y) - ensemble_mean(X)).lpNorm<Eigen::Infinity>() < 1e-13);
  const AnomalyMatrix want = 1.5 * ensemble_anomalies(X);
  CHECK((ensemble_anomalies(Y) - want).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(inflate(X, 1.0) == X);
  CHECK_THROWS_AS(inflate(X, 0.99), contract_error);
}

TEST_CASE("ensembles need at least two members", "[ensemble]") {
  CHECK_THROWS_AS(ensemble_mean(EnsembleMatrix::Zero(4, 1)), contract_error);
  CHECK_THROWS_AS(ensemble_anomalies(EnsembleMatrix::Zero(0, 3)), contract_error);
}
