#pragma once

#include <vector>

namespace selfqa {

/// log Gamma(x) for x > 0, Lanczos approximation. Throws std::domain_error
/// on x <= 0.
double lgamma_pos(double x);

/// Digamma psi(x) for x > 0: recurrence shift to x >= 10, then the
/// asymptotic series. Absolute error < 1e-10 on [1e-3, 1e6].
double digamma(double x);

/// Trigamma psi'(x) for x > 0; exact derivative used by the autodiff tape
/// for the evidential losses.
double trigamma(double x);

/// log of the multinomial beta function:
///   log B(alpha) = sum_k lgamma(alpha_k) - lgamma(sum_k alpha_k).
double log_multinomial_beta(const std::vector<double>& alpha);

}  // namespace selfqa
