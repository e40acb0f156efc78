#include <doctest.h>

#include <cmath>

#include "pln/errors.hpp"
#include "pln/stats.hpp"

using namespace pln;

TEST_CASE("normal quantile matches reference values") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_quantile(0.975) ==
        doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(normal_quantile(0.995) ==
        doctest::Approx(2.5758293035489004).epsilon(1e-9));
  CHECK(normal_quantile(0.9) ==
        doctest::Approx(1.2815515655446004).epsilon(1e-9));
  CHECK(normal_quantile(0.001) ==
        doctest::Approx(-3.090232306167813).epsilon(1e-9));
  // deep tail region of the approximation
  CHECK(normal_quantile(1e-12) ==
        doctest::Approx(-7.0344838253011321).epsilon(1e-9));
}

TEST_CASE("normal quantile is antisymmetric and inverts the cdf") {
  for (double p : {0.01, 0.12, 0.3, 0.47, 0.6, 0.88, 0.999}) {
    CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1.0 - p))
                                    .epsilon(1e-10));
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("normal quantile rejects endpoints") {
  CHECK_THROWS_AS(normal_quantile(0.0), ParameterDomainError);
  CHECK_THROWS_AS(normal_quantile(1.0), ParameterDomainError);
  CHECK_THROWS_AS(normal_quantile(-0.5), ParameterDomainError);
}

TEST_CASE("kolmogorov Q series") {
  // independent evaluation of the alternating series with the same
  // 1e-12 truncation rule
  double expected = 0.0;
  for (int k = 1; k <= 50; ++k) {
    const double term = std::exp(-2.0 * k * k * 0.25);
    expected += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-12) break;
  }
  CHECK(kolmogorov_q(0.5) == doctest::Approx(expected).epsilon(1e-12));
  // the leading 4 terms already give ~0.9639
  CHECK(kolmogorov_q(0.5) == doctest::Approx(0.9639).epsilon(1e-4));
  CHECK(kolmogorov_q(0.0) == 1.0);
  CHECK(kolmogorov_q(10.0) == doctest::Approx(0.0));
  // monotone decreasing
  double prev = 1.0;
  for (double lam = 0.1; lam < 3.0; lam += 0.1) {
    const double q = kolmogorov_q(lam);
    CHECK(q <= prev + 1e-15);
    prev = q;
  }
}

TEST_CASE("log factorial") {
  CHECK(log_factorial(0.0) == doctest::Approx(0.0));
  CHECK(log_factorial(1.0) == doctest::Approx(0.0));
  CHECK(log_factorial(2.0) == doctest::Approx(std::log(2.0)));
  CHECK(log_factorial(10.0) == doctest::Approx(std::log(3628800.0)));
  // stays exact-ish for large counts
  double direct = 0.0;
  for (int k = 2; k <= 170; ++k) direct += std::log(double(k));
  CHECK(log_factorial(170.0) == doctest::Approx(direct).epsilon(1e-12));
}
