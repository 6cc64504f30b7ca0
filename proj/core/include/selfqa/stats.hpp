#pragma once

#include <vector>

namespace selfqa {

double median(std::vector<double> xs);

/// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// One-sided Mann-Whitney U p-value for H1: values in `hi` tend larger than
/// in `lo`. Normal approximation with tie correction.
double mann_whitney_p(const std::vector<double>& hi, const std::vector<double>& lo);

/// Pearson chi-square statistic for observed counts vs expected probabilities.
double chi_square_stat(const std::vector<std::size_t>& observed,
                       const std::vector<double>& expected_probs);

}  // namespace selfqa
