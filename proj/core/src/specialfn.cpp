#include "selfqa/specialfn.hpp"

#include <cmath>
#include <stdexcept>

namespace selfqa {

namespace {

// Lanczos g=7, n=9 coefficients (Godfrey).
constexpr double kLanczos[9] = {
    0.99999999999980993,   676.5203681218851,     -1259.1392167224028,
    771.32342877765313,    -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,  9.9843695780195716e-6, 1.5056327351493116e-7};

constexpr double kLogSqrtTwoPi = 0.91893853320467274178;

void require_positive(double x, const char* fn) {
  if (!(x > 0.0)) throw std::domain_error(std::string(fn) + ": argument must be > 0");
}

}  // namespace

double lgamma_pos(double x) {
  require_positive(x, "lgamma");
  if (x < 0.5) {
    // Reflection keeps the Lanczos sum well conditioned near zero.
    return std::log(M_PI / std::sin(M_PI * x)) - lgamma_pos(1.0 - x);
  }
  double z = x - 1.0;
  double a = kLanczos[0];
  for (int i = 1; i < 9; ++i) a += kLanczos[i] / (z + double(i));
  double t = z + 7.5;
  return kLogSqrtTwoPi + (z + 0.5) * std::log(t) - t + std::log(a);
}

double digamma(double x) {
  require_positive(x, "digamma");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  // Asymptotic series with Bernoulli-number coefficients.
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv;
  result -= inv2 * (1.0 / 12.0 -
             inv2 * (1.0 / 120.0 -
             inv2 * (1.0 / 252.0 -
             inv2 * (1.0 / 240.0 -
             inv2 * (1.0 / 132.0)))));
  return result;
}

double trigamma(double x) {
  require_positive(x, "trigamma");
  double result = 0.0;
  while (x < 10.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  result += inv * (1.0 + 0.5 * inv +
            inv2 * (1.0 / 6.0 -
            inv2 * (1.0 / 30.0 -
            inv2 * (1.0 / 42.0 -
            inv2 * (1.0 / 30.0)))));
  return result;
}

double log_multinomial_beta(const std::vector<double>& alpha) {
  if (alpha.empty()) throw std::domain_error("log_multinomial_beta: empty alpha");
  double sum = 0.0, lg = 0.0;
  for (double a : alpha) {
    require_positive(a, "log_multinomial_beta");
    sum += a;
    lg += lgamma_pos(a);
  }
  return lg - lgamma_pos(sum);
}

}  // namespace selfqa
