#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "bets/rank_tests.hpp"

using namespace bets;

namespace {

std::vector<double> normals(std::mt19937_64& rng, int n, double sd) {
  std::normal_distribution<double> z(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = z(rng);
  return v;
}

double two_sided_p(double z) {
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
}

// Textbook no-ties moments of the Ansari-Bradley statistic.
double ab_z(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> all(x);
  all.insert(all.end(), y.begin(), y.end());
  std::sort(all.begin(), all.end());
  const double m = static_cast<double>(x.size()), n = static_cast<double>(y.size()), N = m + n;
  double stat = 0.0;
  for (double v : x) {
    const double rank = static_cast<double>(std::lower_bound(all.begin(), all.end(), v) - all.begin()) + 1.0;
    stat += std::min(rank, N + 1.0 - rank);
  }
  const bool even = static_cast<long>(N) % 2 == 0;
  const double mean = even ? m * (N + 2.0) / 4.0 : m * (N + 1.0) * (N + 1.0) / (4.0 * N);
  const double var = even ? m * n * (N + 2.0) * (N - 2.0) / (48.0 * (N - 1.0))
                          : m * n * (N + 1.0) * (3.0 + N * N) / (48.0 * N * N);
  return (stat - mean) / std::sqrt(var);
}

// Mann-Whitney U by pair counting.
double mw_u(const std::vector<double>& x, const std::vector<double>& y) {
  double u = 0.0;
  for (double a : x) {
    for (double b : y) u += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return u;
}

}  // namespace

TEST_CASE("identical samples give location p near one") {
  std::mt19937_64 rng(1);
  const auto x = normals(rng, 40, 1.0);
  const auto loc = rank_location_test(x, x);
  CHECK(loc.p_value == doctest::Approx(1.0));
  CHECK(ansari_bradley(x, x).p_value == doctest::Approx(1.0));
}

TEST_CASE("Ansari-Bradley agrees with the closed-form moments without ties") {
  std::mt19937_64 rng(2);
  for (int sizes : {0, 1}) {
    const auto x = normals(rng, 25 + sizes, 1.0);
    const auto y = normals(rng, 30, 2.0);
    const auto got = ansari_bradley(x, y);
    const double z = ab_z(x, y);
    CHECK(got.z == doctest::Approx(z).epsilon(1e-10));
    CHECK(got.p_value == doctest::Approx(two_sided_p(z)).epsilon(1e-10));
  }
}

TEST_CASE("rank-sum statistic matches pair counting") {
  std::mt19937_64 rng(3);
  auto x = normals(rng, 30, 1.0);
  auto y = normals(rng, 35, 1.0);
  for (double& v : y) v += 1.5;
  for (int i = 0; i < 5; ++i) y[i] = x[i];  // a few ties
  const auto got = rank_location_test(x, y);
  CHECK(got.statistic == doctest::Approx(mw_u(x, y)).epsilon(1e-12));
  CHECK(got.p_value < 0.01);
}

TEST_CASE("dispersion test detects a threefold scale change") {
  std::mt19937_64 rng(4);
  int rejections = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = normals(rng, 200, 1.0);
    const auto y = normals(rng, 200, 3.0);
    rejections += ansari_bradley(x, y).p_value < 0.01 ? 1 : 0;
  }
  CHECK(rejections >= 18);
}

TEST_CASE("ties and degenerate input") {
  std::vector<double> x{1, 2, 2, 3, 3, 3, 4, 5, 5, 6};
  std::vector<double> y{2, 3, 3, 4, 4, 4, 5, 6, 7, 8, 9};
  const auto ab = ansari_bradley(x, y);
  CHECK(std::isfinite(ab.p_value));
  CHECK(ab.p_value > 0.0);
  CHECK(ab.p_value <= 1.0);
  CHECK(rank_location_test(x, y).statistic == doctest::Approx(mw_u(x, y)));

  const std::vector<double> tied(12, 4.0);
  CHECK_THROWS_AS(ansari_bradley(tied, tied), std::invalid_argument);
  CHECK_THROWS_AS(rank_location_test(tied, tied), std::invalid_argument);
  const std::vector<double> small{1, 2, 3};
  CHECK_THROWS_AS(ansari_bradley(small, y), std::invalid_argument);
}
