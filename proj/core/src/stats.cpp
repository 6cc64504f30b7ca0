#include "selfqa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace selfqa {

double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty");
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace {

std::vector<double> ranks(const std::vector<double>& x) {
  std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    double avg = 0.5 * double(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series");
  return pearson(ranks(x), ranks(y));
}

double mann_whitney_p(const std::vector<double>& hi, const std::vector<double>& lo) {
  if (hi.empty() || lo.empty()) throw std::invalid_argument("mann_whitney: empty group");
  double n1 = double(hi.size()), n2 = double(lo.size());
  std::vector<double> all;
  all.insert(all.end(), hi.begin(), hi.end());
  all.insert(all.end(), lo.begin(), lo.end());
  std::vector<double> r = ranks(all);
  double r1 = 0;
  for (std::size_t i = 0; i < hi.size(); ++i) r1 += r[i];
  double u = r1 - n1 * (n1 + 1.0) / 2.0;

  // tie correction on the rank variance
  std::vector<double> sorted(all);
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  std::size_t i = 0, n = sorted.size();
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
    double t = double(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  double nn = n1 + n2;
  double mu = n1 * n2 / 2.0;
  double var = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (var <= 0.0) return 1.0;
  double z = (u - mu - 0.5) / std::sqrt(var);  // continuity correction
  return 0.5 * std::erfc(z / std::sqrt(2.0));  // P(U >= u)
}

double chi_square_stat(const std::vector<std::size_t>& observed,
                       const std::vector<double>& expected_probs) {
  if (observed.size() != expected_probs.size() || observed.empty())
    throw std::invalid_argument("chi_square: size mismatch");
  double total = 0;
  for (std::size_t c : observed) total += double(c);
  double stat = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    double e = expected_probs[i] * total;
    if (e <= 0) throw std::invalid_argument("chi_square: zero expected count");
    double d = double(observed[i]) - e;
    stat += d * d / e;
  }
  return stat;
}

}  // namespace selfqa
