#include "bets/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace bets {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 100000;

void check_shape(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) {
    throw std::domain_error("incomplete gamma: shape must be positive, got " + std::to_string(a));
  }
}

// log of x^a e^{-x} / Gamma(a)
double log_prefactor(double a, double x) { return a * std::log(x) - x - std::lgamma(a); }

// Series sum for P(a, x) without the prefactor.
double lower_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) return sum;
  }
  throw std::runtime_error("incomplete gamma series did not converge");
}

// Modified Lentz continued fraction for Q(a, x) without the prefactor.
double upper_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete gamma continued fraction did not converge");
}

}  // namespace

double gamma_p(double a, double x) {
  check_shape(a);
  if (std::isnan(x)) throw std::domain_error("gamma_p: NaN argument");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return std::exp(log_prefactor(a, x)) * lower_series(a, x);
  return 1.0 - std::exp(log_prefactor(a, x)) * upper_fraction(a, x);
}

double gamma_q(double a, double x) {
  check_shape(a);
  if (std::isnan(x)) throw std::domain_error("gamma_q: NaN argument");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - std::exp(log_prefactor(a, x)) * lower_series(a, x);
  return std::exp(log_prefactor(a, x)) * upper_fraction(a, x);
}

double log_gamma_q(double a, double x) {
  check_shape(a);
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return -std::numeric_limits<double>::infinity();
  if (x < a + 1.0) return std::log1p(-std::exp(log_prefactor(a, x)) * lower_series(a, x));
  return log_prefactor(a, x) + std::log(upper_fraction(a, x));
}

static void check_rate(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw std::domain_error("Gamma distribution requires shape > 0 and rate > 0");
  }
}

double gamma_cdf(double shape, double rate, double x) {
  check_rate(shape, rate);
  if (!std::isfinite(x)) throw std::domain_error("gamma_cdf: non-finite argument");
  return x <= 0.0 ? 0.0 : gamma_p(shape, rate * x);
}

double gamma_sf(double shape, double rate, double x) {
  check_rate(shape, rate);
  if (!std::isfinite(x)) throw std::domain_error("gamma_sf: non-finite argument");
  return x <= 0.0 ? 1.0 : gamma_q(shape, rate * x);
}

double gamma_cdf_diff(double shape, double rate, double lo, double hi) {
  if (hi <= lo) return 0.0;
  if (lo <= 0.0) return gamma_cdf(shape, rate, hi);
  // Both points in the upper tail: difference of survival functions.
  if (rate * lo > shape) return gamma_sf(shape, rate, lo) - gamma_sf(shape, rate, hi);
  return gamma_cdf(shape, rate, hi) - gamma_cdf(shape, rate, lo);
}

double gamma_pdf(double shape, double rate, double x) {
  check_rate(shape, rate);
  if (x < 0.0) return 0.0;
  if (x == 0.0) {
    if (shape < 1.0) return std::numeric_limits<double>::infinity();
    return shape == 1.0 ? rate : 0.0;
  }
  return std::exp(shape * std::log(rate) + (shape - 1.0) * std::log(x) - rate * x - std::lgamma(shape));
}

double gamma_quantile(double shape, double rate, double p) {
  check_rate(shape, rate);
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return 0.0;
    throw std::domain_error("gamma_quantile: p must lie in [0, 1)");
  }
  // Newton iteration on y = log x for the unit-rate quantile, safeguarded
  // by a bisection bracket.
  double y;
  if (shape < 1.0) {
    y = (std::log(p) + std::lgamma(shape + 1.0)) / shape;
  } else {
    // Wilson-Hilferty starting point.
    // Normal quantile by bisection; only a starting point is needed.
    double zlo = -40.0, zhi = 40.0;
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (zlo + zhi);
      (normal_cdf(mid) < p ? zlo : zhi) = mid;
    }
    const double z = 0.5 * (zlo + zhi);
    const double c = 1.0 / (9.0 * shape);
    double w = 1.0 - c + z * std::sqrt(c);
    w = std::max(w, 1e-3);
    y = std::log(shape * w * w * w);
  }
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    const double x = std::exp(y);
    const double f = gamma_p(shape, x) - p;
    if (f > 0.0) hi = std::min(hi, y); else lo = std::max(lo, y);
    const double dlog = shape * y - x - std::lgamma(shape);  // log(x * density)
    const double step = std::clamp(f / std::exp(dlog), -2.0, 2.0);
    double next = y - step;
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      if (std::isfinite(lo) && std::isfinite(hi)) next = 0.5 * (lo + hi);
      else if (std::isfinite(lo)) next = lo + 1.0;
      else next = hi - 1.0;
    }
    if (std::abs(next - y) < 1e-14 * std::max(1.0, std::abs(y))) { y = next; break; }
    y = next;
  }
  return std::exp(y) / rate;
}

double chi_squared_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * x);
}

double chi_squared_quantile(double p, double dof) {
  if (p <= 0.0) return 0.0;
  return gamma_quantile(0.5 * dof, 0.5, p);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace bets
