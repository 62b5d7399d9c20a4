#include "bets/rank_tests.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "bets/special.hpp"

namespace bets {

namespace {

struct Pooled {
  std::vector<double> ranks;  // mid-ranks, x first then y
  double tie_term = 0.0;      // sum over tie groups of t^3 - t
};

Pooled midranks(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 10 || y.size() < 10) {
    throw std::invalid_argument("rank tests need at least 10 values in each sample");
  }
  std::vector<double> values(x.begin(), x.end());
  values.insert(values.end(), y.begin(), y.end());
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  Pooled out;
  out.ranks.resize(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) out.ranks[order[k]] = rank;
    const double t = static_cast<double>(j - i + 1);
    out.tie_term += t * t * t - t;
    i = j + 1;
  }
  if (out.tie_term == std::pow(static_cast<double>(values.size()), 3) - values.size()) {
    throw std::invalid_argument("rank tests are undefined when all values are tied");
  }
  return out;
}

double two_sided(double z) {
  const double p = normal_cdf(z);
  return std::min(1.0, 2.0 * std::min(p, 1.0 - p));
}

}  // namespace

RankTestResult ansari_bradley(std::span<const double> x, std::span<const double> y) {
  const Pooled pooled = midranks(x, y);
  const double m = static_cast<double>(x.size());
  const double n = static_cast<double>(y.size());
  const double N = m + n;
  std::vector<double> scores(pooled.ranks.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = std::min(pooled.ranks[i], N - pooled.ranks[i] + 1.0);
  }
  const double statistic = std::accumulate(scores.begin(), scores.begin() + x.size(), 0.0);
  const double mean_score = std::accumulate(scores.begin(), scores.end(), 0.0) / N;
  double ss = 0.0;
  for (double a : scores) ss += (a - mean_score) * (a - mean_score);
  // Permutation variance of a sum of m scores drawn without replacement.
  const double variance = m * n / (N * (N - 1.0)) * ss;
  if (!(variance > 0.0)) throw std::invalid_argument("ansari_bradley: scores have no spread");
  RankTestResult out;
  out.statistic = statistic;
  out.z = (statistic - m * mean_score) / std::sqrt(variance);
  out.p_value = two_sided(out.z);
  return out;
}

RankTestResult rank_location_test(std::span<const double> x, std::span<const double> y) {
  const Pooled pooled = midranks(x, y);
  const double m = static_cast<double>(x.size());
  const double n = static_cast<double>(y.size());
  const double N = m + n;
  const double w = std::accumulate(pooled.ranks.begin(), pooled.ranks.begin() + x.size(), 0.0) -
                   m * (m + 1.0) / 2.0;
  const double centred = w - m * n / 2.0;
  const double sigma = std::sqrt(m * n / 12.0 * ((N + 1.0) - pooled.tie_term / (N * (N - 1.0))));
  const double correction = centred > 0.0 ? 0.5 : (centred < 0.0 ? -0.5 : 0.0);
  RankTestResult out;
  out.statistic = w;
  out.z = (centred - correction) / sigma;
  out.p_value = two_sided(out.z);
  return out;
}

}  // namespace bets
