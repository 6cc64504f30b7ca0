#include <cmath>

#include <doctest.h>

#include "selfqa/stats.hpp"

using namespace selfqa;

TEST_CASE("median of odd, even and single-element lists") {
  CHECK(median({3.0}) == 3.0);
  CHECK(median({5.0, 1.0, 3.0}) == 3.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
}

TEST_CASE("spearman on monotone and anti-monotone data") {
  std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> inc = {10, 20, 30, 40, 50};
  std::vector<double> dec = {5, 4, 3, 2, 1};
  CHECK(spearman(x, inc) == doctest::Approx(1.0));
  CHECK(spearman(x, dec) == doctest::Approx(-1.0));
  // nonlinear but monotone still gives rho = 1
  std::vector<double> exp_y = {1, 8, 27, 1000, 100000};
  CHECK(spearman(x, exp_y) == doctest::Approx(1.0));
}

TEST_CASE("spearman handles ties via average ranks") {
  std::vector<double> x = {1, 2, 2, 3};
  std::vector<double> y = {1, 2, 2, 3};
  CHECK(spearman(x, y) == doctest::Approx(1.0));
  std::vector<double> flat = {7, 7, 7, 7};
  // zero variance -> correlation defined as 0
  CHECK(spearman(x, flat) == doctest::Approx(0.0));
}

TEST_CASE("mann-whitney detects a clear shift") {
  std::vector<double> hi = {5.1, 6.2, 7.3, 8.4, 9.0, 5.5, 6.6, 7.7};
  std::vector<double> lo = {1.1, 0.2, 2.3, 1.4, 0.9, 1.5, 2.6, 0.7};
  CHECK(mann_whitney_p(hi, lo) < 0.01);
  // reversed direction is far from significant
  CHECK(mann_whitney_p(lo, hi) > 0.5);
}

TEST_CASE("mann-whitney on identical samples is near one half") {
  std::vector<double> a = {1, 2, 3, 4, 5, 6, 7, 8};
  double p = mann_whitney_p(a, a);
  CHECK(p > 0.4);
  CHECK(p <= 1.0);
}

TEST_CASE("chi-square statistic matches hand computation") {
  // observed {30, 70}, expected {0.5, 0.5} of n=100 -> (20^2/50)*2 = 16
  std::vector<std::size_t> obs = {30, 70};
  CHECK(chi_square_stat(obs, {0.5, 0.5}) == doctest::Approx(16.0));
  // perfect agreement -> 0
  std::vector<std::size_t> exact = {25, 75};
  CHECK(chi_square_stat(exact, {0.25, 0.75}) == doctest::Approx(0.0));
}
