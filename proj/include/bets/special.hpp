#pragma once

// Special functions used throughout the likelihood code: regularized
// incomplete gamma (series for x < a + 1, Lentz continued fraction
// otherwise), Gamma distribution helpers and chi-squared tails.

namespace bets {

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed
/// without cancellation in the upper tail.
double gamma_q(double a, double x);

/// log Q(a, x); finite far into the tail where Q itself underflows.
double log_gamma_q(double a, double x);

/// Gamma(shape, rate) distribution function H_{shape,rate}(x).
/// Zero for x <= 0. Throws std::domain_error for non-finite x or a
/// non-positive shape/rate.
double gamma_cdf(double shape, double rate, double x);

/// 1 - H_{shape,rate}(x).
double gamma_sf(double shape, double rate, double x);

/// H(hi) - H(lo), evaluated through whichever tail keeps precision.
double gamma_cdf_diff(double shape, double rate, double lo, double hi);

double gamma_pdf(double shape, double rate, double x);

/// Inverse of gamma_cdf; p in (0, 1).
double gamma_quantile(double shape, double rate, double p);

/// Upper tail of the chi-squared distribution.
double chi_squared_sf(double x, double dof);

/// Quantile of the chi-squared distribution; chi_squared_quantile(0, k) = 0.
double chi_squared_quantile(double p, double dof);

double normal_cdf(double z);

}  // namespace bets
