#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "selfqa/specialfn.hpp"

using namespace selfqa;

TEST_CASE("lgamma_pos matches std::lgamma across scales") {
  for (double x : {1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 7.3, 42.0, 1e3, 1e6}) {
    double ref = std::lgamma(x);
    CHECK(std::abs(lgamma_pos(x) - ref) <=
          1e-10 * std::max(1.0, std::abs(ref)));
  }
  CHECK_THROWS_AS(lgamma_pos(0.0), std::domain_error);
  CHECK_THROWS_AS(lgamma_pos(-2.5), std::domain_error);
}

TEST_CASE("digamma satisfies the recurrence psi(x+1) = psi(x) + 1/x") {
  for (double x : {1e-3, 0.07, 0.5, 1.0, 3.7, 11.0, 250.0, 1e5}) {
    CHECK(std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-10);
  }
}

TEST_CASE("digamma known values") {
  constexpr double kEulerGamma = 0.5772156649015328606;
  CHECK(std::abs(digamma(1.0) + kEulerGamma) < 1e-10);
  // psi(1/2) = -gamma - 2 ln 2
  CHECK(std::abs(digamma(0.5) + kEulerGamma + 2.0 * std::log(2.0)) < 1e-10);
  CHECK(std::abs(digamma(2.0) + kEulerGamma - 1.0) < 1e-10);
}

TEST_CASE("digamma is the derivative of lgamma (finite differences)") {
  for (double x : {0.3, 1.0, 2.5, 17.0, 400.0}) {
    double h = 1e-6 * std::max(1.0, x);
    double fd = (lgamma_pos(x + h) - lgamma_pos(x - h)) / (2.0 * h);
    CHECK(std::abs(digamma(x) - fd) <
          1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("trigamma is the derivative of digamma (finite differences)") {
  for (double x : {0.3, 1.0, 2.5, 17.0, 400.0}) {
    double h = 1e-6 * std::max(1.0, x);
    double fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
    CHECK(std::abs(trigamma(x) - fd) < 1e-4 * std::max(1.0, std::abs(fd)));
  }
  // psi'(1) = pi^2/6
  CHECK(std::abs(trigamma(1.0) - 1.6449340668482264365) < 1e-10);
}

TEST_CASE("log_multinomial_beta equals the lgamma expansion") {
  std::vector<double> alpha = {1.5, 2.0, 0.7, 4.4};
  double direct = 0.0, s = 0.0;
  for (double a : alpha) {
    direct += std::lgamma(a);
    s += a;
  }
  direct -= std::lgamma(s);
  CHECK(std::abs(log_multinomial_beta(alpha) - direct) < 1e-10);
}
