#include <catch2/catch_amalgamated.hpp>

#include <ensda/lorenz96.hpp>

#include <random>

namespace {

using namespace ensda;

// Independent tendency route: explicit wrap arithmetic on plain indices,
// sharing no code with lorenz96_rhs.
StateVector rhs_reference(const StateVector& x, double forcing) {
  const int n = static_cast<int>(x.size());
  StateVector out(n);
  for (int j = 0; j < n; ++j) {
    int jp1 = j + 1;
    if (jp1 >= n) jp1 -= n;
    int jm1 = j - 1;
    if (jm1 < 0) jm1 += n;
    int jm2 = j - 2;
    if (jm2 < 0) jm2 += n;
    out[j] = (x[jp1] - x[jm2]) * x[jm1] - x[j] + forcing;
  }
  return out;
}

StateVector rotate_left(const StateVector& x, int shift) {
  const int n = static_cast<int>(x.size());
  StateVector out(n);
  for (int j = 0; j < n; ++j) out[j] = x[(j + shift) % n];
  return out;
}

}  // namespace

TEST_CASE("tendency matches a worked four-component example", "[lorenz96]") {
  ModelParams params;
  params.n = 4;
  StateVector x(4);
  x << 1.0, 2.0, 3.0, 4.0;
  const StateVector dxdt = lorenz96_rhs(x, params);
  CHECK(dxdt[0] == Catch::Approx(3.0).margin(1e-14));
  CHECK(dxdt[1] == Catch::Approx(5.0).margin(1e-14));
  CHECK(dxdt[2] == Catch::Approx(11.0).margin(1e-14));
  CHECK(dxdt[3] == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("tendency agrees with an independent index-arithmetic route", "[lorenz96]") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> normal(0.0, 5.0);
  for (int n : {4, 7, 40}) {
    ModelParams params;
    params.n = n;
    for (int trial = 0; trial < 20; ++trial) {
      StateVector x(n);
      for (int j = 0; j < n; ++j) x[j] = normal(rng);
      const StateVector got = lorenz96_rhs(x, params);
      const StateVector want = rhs_reference(x, params.forcing);
      REQUIRE((got - want).lpNorm<Eigen::Infinity>() < 1e-13);
    }
  }
}

TEST_CASE("constant forcing state is a fixed point", "[lorenz96]") {
  ModelParams params;
  params.n = 12;
  const StateVector x = StateVector::Constant(12, params.forcing);
  CHECK(lorenz96_rhs(x, params).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("tendency is equivariant under cyclic rotation", "[lorenz96]") {
  ModelParams params;
  params.n = 9;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 3.0);
  StateVector x(9);
  for (int j = 0; j < 9; ++j) x[j] = normal(rng);
  for (int shift : {1, 3, 8}) {
    const StateVector lhs = lorenz96_rhs(rotate_left(x, shift), params);
    const StateVector rhs = rotate_left(lorenz96_rhs(x, params), shift);
    REQUIRE((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-13);
  }
}

TEST_CASE("model parameter validation rejects degenerate rings", "[lorenz96]") {
  ModelParams params;
  params.n = 3;
  CHECK_THROWS_AS(validate(params), contract_error);
  params.n = 4;
  CHECK_NOTHROW(validate(params));
  params.forcing = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate(params), contract_error);
  params.forcing = 8.0;
  params.abs_tol = 0.0;
  CHECK_THROWS_AS(validate(params), contract_error);
}

TEST_CASE("tendency rejects mismatched state length", "[lorenz96]") {
  ModelParams params;
  params.n = 6;
  CHECK_THROWS_AS(lorenz96_rhs(StateVector::Zero(5), params), contract_error);
}
