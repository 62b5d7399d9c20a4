#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "bets/optimize.hpp"
#include "bets/quadrature.hpp"
#include "bets/special.hpp"
#include "oracles.hpp"

using namespace bets;

TEST_CASE("gamma_cdf limits and exponential median") {
  CHECK(gamma_cdf(1.0, 1.0, std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(gamma_cdf(1.86, 0.33, 0.0) == 0.0);
  CHECK(gamma_cdf(1.86, 0.33, -3.0) == 0.0);
  CHECK(gamma_cdf(1.86, 0.33, 1e4) == doctest::Approx(1.0));
  CHECK_THROWS_AS(gamma_cdf(1.86, 0.33, NAN), std::domain_error);
  CHECK_THROWS_AS(gamma_cdf(1.86, 0.33, INFINITY), std::domain_error);
  CHECK_THROWS_AS(gamma_cdf(0.0, 0.33, 1.0), std::domain_error);
}

TEST_CASE("gamma_cdf agrees with Boost to 1e-12 absolute") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> la(std::log(0.05), std::log(200.0));
  std::uniform_real_distribution<double> lx(std::log(1e-4), std::log(500.0));
  for (int i = 0; i < 5000; ++i) {
    const double a = std::exp(la(rng)), x = std::exp(lx(rng));
    CHECK(std::abs(gamma_p(a, x) - boost::math::gamma_p(a, x)) <= 1e-12);
    CHECK(std::abs(gamma_q(a, x) - boost::math::gamma_q(a, x)) <= 1e-12);
  }
}

TEST_CASE("log_gamma_q stays finite deep in the tail") {
  const double a = 2.0, x = 1200.0;
  // Q(2, x) = e^{-x} (1 + x); Boost underflows to zero here.
  const double want = -x + std::log1p(x);
  CHECK(std::isfinite(log_gamma_q(a, x)));
  CHECK(log_gamma_q(a, x) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("H_{1.86,0.33}(13.5) is close to 0.95") {
  const double by_quadrature = oracle::quad([](double t) { return oracle::gamma_pdf(1.86, 0.33, t); }, 0.0, 13.5);
  CHECK(gamma_cdf(1.86, 0.33, 13.5) == doctest::Approx(by_quadrature).epsilon(1e-10));
  CHECK(gamma_cdf(1.86, 0.33, 13.5) == doctest::Approx(0.95).epsilon(0.01));
}

TEST_CASE("gamma_cdf_diff keeps precision in both tails") {
  const double lo = 200.0, hi = 210.0;
  const double want = boost::math::gamma_q(1.86, 0.33 * lo) - boost::math::gamma_q(1.86, 0.33 * hi);
  CHECK(gamma_cdf_diff(1.86, 0.33, lo, hi) == doctest::Approx(want).epsilon(1e-10));
  CHECK(gamma_cdf_diff(1.86, 0.33, 3.0, 3.0) == 0.0);
}

TEST_CASE("gamma_quantile inverts gamma_cdf") {
  for (double p : {1e-6, 0.05, 0.5, 0.95, 0.999999}) {
    const double x = gamma_quantile(1.86, 0.33, p);
    CHECK(gamma_cdf(1.86, 0.33, x) == doctest::Approx(p).epsilon(1e-10));
  }
}

TEST_CASE("chi-squared and normal tails") {
  boost::math::chi_squared_distribution<double> chi1(1.0), chi7(7.0);
  CHECK(chi_squared_sf(3.8414588, 1.0) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_squared_sf(4.2, 7.0) == doctest::Approx(boost::math::cdf(boost::math::complement(chi7, 4.2))));
  CHECK(chi_squared_quantile(0.95, 1.0) == doctest::Approx(boost::math::quantile(chi1, 0.95)).epsilon(1e-10));
  CHECK(chi_squared_quantile(0.0, 1.0) == 0.0);
  boost::math::normal_distribution<double> z;
  for (double v : {-8.0, -1.96, 0.0, 0.3, 5.0}) {
    CHECK(normal_cdf(v) == doctest::Approx(boost::math::cdf(z, v)).epsilon(1e-12));
  }
}

TEST_CASE("adaptive quadrature") {
  CHECK(integrate([](double x) { return std::exp(x); }, 0.0, 1.0) == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-13));
  CHECK(integrate([](double x) { return std::sqrt(x); }, 0.0, 1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-11));
  CHECK(integrate([](double) { return 1.0; }, 2.0, 1.0) == 0.0);
  const double kink = integrate([](double x) { return std::abs(x - 0.3); }, 0.0, 1.0);
  CHECK(kink == doctest::Approx(0.045 + 0.245).epsilon(1e-11));
}

TEST_CASE("Nelder-Mead minimises the Rosenbrock function") {
  const auto rosen = [](const Eigen::VectorXd& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  const auto res = nelder_mead(rosen, Eigen::Vector2d(-1.2, 1.0));
  CHECK(res.converged);
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(res.x(1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("Nelder-Mead treats non-finite values as walls") {
  const auto f = [](const Eigen::VectorXd& x) {
    return x(0) < 0.5 ? NAN : (x(0) - 1.0) * (x(0) - 1.0);
  };
  Eigen::VectorXd x0(1);
  x0 << 2.0;
  const auto res = nelder_mead(f, x0);
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-6));
}
