#include "bets/likelihood.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "bets/quadrature.hpp"
#include "bets/roots.hpp"
#include "bets/special.hpp"

namespace bets {

namespace {

constexpr double kLogFloor = -690.7755278982137;  // log(1e-300)

// Gamma(shape, rate) tails memoised per argument. Likelihood arguments
// live on a quarter-day lattice, so a cohort touches few distinct values.
class GammaTail {
 public:
  GammaTail(double shape, double rate) : shape_(shape), rate_(rate) {}

  double cdf(double x) { return x <= 0.0 ? 0.0 : get(x).p; }
  double sf(double x) { return x <= 0.0 ? 1.0 : get(x).q; }

  double cdf_diff(double lo, double hi) {
    if (hi <= lo) return 0.0;
    if (lo <= 0.0) return cdf(hi);
    if (rate_ * lo > shape_) return get(lo).q - get(hi).q;
    return get(hi).p - get(lo).p;
  }

  double log_sf(double x) {
    if (x <= 0.0) return 0.0;
    const auto it = log_sf_.find(x);
    if (it != log_sf_.end()) return it->second;
    return log_sf_[x] = log_gamma_q(shape_, rate_ * x);
  }

  double shape() const { return shape_; }
  double rate() const { return rate_; }

 private:
  struct Entry {
    double p, q;
  };

  Entry get(double x) {
    const auto it = cache_.find(x);
    if (it != cache_.end()) return it->second;
    const double z = rate_ * x;
    Entry e{};
    if (z < shape_ + 1.0) {
      e.p = gamma_p(shape_, z);
      e.q = 1.0 - e.p;
    } else {
      e.q = gamma_q(shape_, z);
      e.p = 1.0 - e.q;
    }
    return cache_[x] = e;
  }

  double shape_, rate_;
  std::unordered_map<double, Entry> cache_;
  std::unordered_map<double, double> log_sf_;
};

void check_gamma(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw std::domain_error("likelihood requires alpha > 0 and beta > 0");
  }
}

double positive_part(double x) { return x > 0.0 ? x : 0.0; }

// log of r / (exp(r x) - 1), continuous at r = 0.
double log_growth_weight(double r, double x) {
  if (std::abs(r) < kGrowthZeroThreshold) return -std::log(x);
  return std::log(r / std::expm1(r * x));
}

// Per-case log terms with shared tail caches.
double log_cond_term(const CaseRecord& c, double r, double alpha, double beta, GammaTail& shifted) {
  if (std::abs(r) < kGrowthZeroThreshold) {
    return std::log(shifted.cdf_diff(positive_part(c.S - c.E), c.S - c.B)) - std::log(c.E - c.B);
  }
  const double hd = shifted.cdf_diff(positive_part(c.S - c.E), c.S - c.B);
  return alpha * std::log(beta / (beta + r)) + r * (c.S - c.B) + log_growth_weight(r, c.E - c.B) +
         std::log(hd);
}

double log_uncond_term(const CaseRecord& c, double rho, double r, double alpha, double beta,
                       double L, GammaTail& shifted) {
  const double weight = c.wuhan_resident() ? 1.0 : rho / L;
  const double hd = shifted.cdf_diff(positive_part(c.S - c.E), c.S - c.B);
  return 2.0 * std::log(r) + alpha * std::log(beta / (beta + r)) + std::log(weight) -
         std::log1p(rho * (1.0 - 2.0 / (r * L))) + r * (c.S - L) + std::log(hd);
}

// Integral of H_{alpha,beta} over [0, x] as beta^-1 sum_{k >= 1} P(alpha + k, beta x):
// every term is positive, so it keeps full relative precision while H is small.
double integrated_cdf_series(double alpha, double beta, double x) {
  if (x <= 0.0) return 0.0;
  const double y = beta * x;
  double sum = 0.0;
  for (int k = 1; k < 10000; ++k) {
    const double term = gamma_p(alpha + k, y);
    sum += term;
    if (term <= 1e-17 * sum) break;
  }
  return sum / beta;
}

// exp(r M) * [Z_r(M - b) - Z_r((M - e)_+)] for r != 0; plain difference for r = 0.
double scaled_truncation_normalizer(double b, double e, double M, double r, GammaTail& base,
                                    GammaTail& shifted, GammaTail& base_plus1) {
  const double alpha = base.shape();
  const double beta = base.rate();
  const double x1 = M - b;
  const double u = positive_part(M - e);
  if (std::abs(r) < kGrowthZeroThreshold) {
    if (base.cdf(x1) < 0.5) {
      return integrated_cdf_series(alpha, beta, x1) - integrated_cdf_series(alpha, beta, u);
    }
    if (u == 0.0) return x1 * base.cdf(x1) - (alpha / beta) * base_plus1.cdf(x1);
    return (std::min(e, M) - b) - x1 * base.sf(x1) + u * base.sf(u) +
           (alpha / beta) * (base_plus1.sf(x1) - base_plus1.sf(u));
  }
  const double log_scale = alpha * std::log(beta / (beta + r)) + r * M;
  double first;
  if (u > 0.0 && shifted.rate() * u > alpha) {
    first = std::exp(log_scale + shifted.log_sf(u)) - std::exp(log_scale + shifted.log_sf(x1));
  } else {
    first = std::exp(log_scale) * shifted.cdf_diff(u, x1);
  }
  double value = first - std::exp(r * b) * base.cdf(x1);
  if (u > 0.0) value += std::exp(r * e) * base.cdf(u);
  return value;
}

double log_trunc_term(const CaseRecord& c, double r, double M, GammaTail& base, GammaTail& shifted,
                      GammaTail& base_plus1) {
  const double alpha = base.shape();
  const double beta = base.rate();
  const double denom = scaled_truncation_normalizer(c.B, c.E, M, r, base, shifted, base_plus1);
  if (std::abs(r) < kGrowthZeroThreshold) {
    return std::log(base.cdf_diff(positive_part(c.S - c.E), c.S - c.B)) - std::log(denom);
  }
  const double hd = shifted.cdf_diff(positive_part(c.S - c.E), c.S - c.B);
  return std::log(r) + alpha * std::log(beta / (beta + r)) + r * c.S + std::log(hd) -
         std::log(denom);
}

template <typename TermFn>
double accumulate(const CaseGroups& cases, LikelihoodDiagnostics* diag, TermFn&& term) {
  double total = 0.0;
  for (const auto& g : cases.groups()) {
    double value = term(g.rep);
    if (std::isnan(value) || value == std::numeric_limits<double>::infinity()) {
      throw std::domain_error("likelihood term is not finite for case " + g.rep.case_id);
    }
    if (value < kLogFloor) {
      value = kLogFloor;
      if (diag) diag->clamped += static_cast<std::size_t>(g.count);
    }
    total += g.count * value;
  }
  return total;
}

}  // namespace

CaseGroups::CaseGroups(std::span<const CaseRecord> cases) : n_cases_(cases.size()) {
  std::map<std::array<double, 4>, std::size_t> index;
  for (const auto& c : cases) {
    const std::array<double, 4> key{c.B, c.E, c.S, c.wuhan_resident() ? 1.0 : 0.0};
    const auto [it, inserted] = index.emplace(key, groups_.size());
    if (inserted) groups_.push_back({c, 1.0});
    else groups_[it->second].count += 1.0;
    max_onset_ = std::max(max_onset_, c.S);
  }
}

ShapeRate quantiles_to_shape_rate(double median, double q95) {
  if (!(median > 0.0) || !(q95 > median) || !std::isfinite(q95)) {
    throw std::domain_error("quantiles_to_shape_rate requires 0 < median < q95");
  }
  const double target = std::log(q95 / median);
  const auto gap = [&](double log_alpha) {
    const double a = std::exp(log_alpha);
    return std::log(gamma_quantile(a, 1.0, 0.95)) - std::log(gamma_quantile(a, 1.0, 0.5)) - target;
  };
  const auto root = brent_root(gap, std::log(1e-3), std::log(1e3), 1e-13);
  if (!root) throw std::domain_error("no Gamma shape in [1e-3, 1e3] matches the quantile ratio");
  const double alpha = std::exp(*root);
  return {alpha, gamma_quantile(alpha, 1.0, 0.5) / median};
}

DisplayTheta to_display(const ParamTheta& theta) {
  check_gamma(theta.alpha, theta.beta);
  DisplayTheta d;
  d.doubling_time = theta.r > 0.0 ? std::numbers::ln2 / theta.r : std::numeric_limits<double>::infinity();
  d.median_incubation = gamma_quantile(theta.alpha, theta.beta, 0.5);
  d.q95_incubation = gamma_quantile(theta.alpha, theta.beta, 0.95);
  d.rho = theta.rho;
  return d;
}

ParamTheta from_display(const DisplayTheta& display) {
  if (!(display.doubling_time > 0.0)) throw std::domain_error("doubling time must be positive");
  const ShapeRate sr = quantiles_to_shape_rate(display.median_incubation, display.q95_incubation);
  const double r = std::isinf(display.doubling_time) ? 0.0 : std::numbers::ln2 / display.doubling_time;
  return {display.rho, r, sr.alpha, sr.beta};
}

double gamma_exp_integral(double b, double e, double s, double r, double alpha, double beta) {
  check_gamma(alpha, beta);
  if (!(r > -beta)) throw std::domain_error("gamma_exp_integral requires r > -beta");
  if (e <= b || s <= b) return 0.0;
  return std::exp(alpha * std::log(beta / (beta + r)) + r * s) *
         gamma_cdf_diff(alpha, beta + r, positive_part(s - e), s - b);
}

double selection_prob_given_be(double b, double e, const GrowthCurve& growth) {
  if (e <= b) return 0.0;
  if (const auto* s = std::get_if<SingleGrowth>(&growth.shape())) {
    const double lo = std::max(b, 0.0), hi = std::min(e, growth.horizon());
    if (hi <= lo) return 0.0;
    const double span = hi - lo;
    const double rel = std::abs(s->r) < 1e-12 ? span : std::expm1(s->r * span) / s->r;
    return growth.kappa() * std::exp(s->r * lo) * rel;
  }
  return growth.cumulative(e) - growth.cumulative(b);
}

SelectionProbability selection_prob_total(double pi, double lambda_W, double lambda_V, double kappa,
                                          double nu, double r, double L) {
  SelectionProbability out{};
  out.approx = kappa * std::exp(r * L) * nu / (r * r) *
               ((1.0 - pi) * lambda_W + pi * lambda_V * (1.0 - 2.0 / (r * L)));

  const GrowthCurve growth(kappa, SingleGrowth{r}, L);
  const auto inner = [&](double b) {
    return integrate([&](double e) { return selection_prob_given_be(b, e, growth); }, b, L);
  };
  const double resident = lambda_W * inner(0.0);
  const double visitors = lambda_V / L * integrate(inner, 0.0, L);
  out.exact = nu * ((1.0 - pi) * resident + pi * visitors);
  return out;
}

double log_lik_cond(const CaseGroups& cases, double r, double alpha, double beta,
                    LikelihoodDiagnostics* diag) {
  check_gamma(alpha, beta);
  if (cases.n_cases() == 0) throw std::invalid_argument("log_lik_cond: no cases");
  GammaTail shifted(alpha, beta + (std::abs(r) < kGrowthZeroThreshold ? 0.0 : r));
  return accumulate(cases, diag, [&](const CaseRecord& c) {
    if (!(c.B < c.E)) throw std::invalid_argument("case " + c.case_id + " has E <= B");
    return log_cond_term(c, r, alpha, beta, shifted);
  });
}

double log_lik_uncond(const CaseGroups& cases, double rho, double r, double alpha, double beta,
                      LikelihoodDiagnostics* diag) {
  check_gamma(alpha, beta);
  if (cases.n_cases() == 0) throw std::invalid_argument("log_lik_uncond: no cases");
  if (!(r > 5.0 / kHorizon)) throw std::domain_error("log_lik_uncond requires r > 5/L");
  if (!(rho >= 0.0)) throw std::domain_error("log_lik_uncond requires rho >= 0");
  GammaTail shifted(alpha, beta + r);
  return accumulate(cases, diag, [&](const CaseRecord& c) {
    return log_uncond_term(c, rho, r, alpha, beta, kHorizon, shifted);
  });
}

double log_lik_cond_trunc(const CaseGroups& cases, double r, double alpha, double beta, double M,
                          LikelihoodDiagnostics* diag) {
  check_gamma(alpha, beta);
  if (cases.n_cases() == 0) throw std::invalid_argument("log_lik_cond_trunc: no cases");
  if (cases.max_onset() > M) {
    for (const auto& g : cases.groups()) {
      if (g.rep.S > M) {
        throw std::invalid_argument("case " + g.rep.case_id +
                                    " has symptom onset after truncation day");
      }
    }
  }
  GammaTail base(alpha, beta), base_plus1(alpha + 1.0, beta);
  GammaTail shifted(alpha, beta + (std::abs(r) < kGrowthZeroThreshold ? 0.0 : r));
  return accumulate(cases, diag, [&](const CaseRecord& c) {
    return log_trunc_term(c, r, M, base, shifted, base_plus1);
  });
}

double log_lik_cond(std::span<const CaseRecord> cases, double r, double alpha, double beta,
                    LikelihoodDiagnostics* diag) {
  return log_lik_cond(CaseGroups(cases), r, alpha, beta, diag);
}

double log_lik_uncond(std::span<const CaseRecord> cases, double rho, double r, double alpha,
                      double beta, LikelihoodDiagnostics* diag) {
  return log_lik_uncond(CaseGroups(cases), rho, r, alpha, beta, diag);
}

double log_lik_cond_trunc(std::span<const CaseRecord> cases, double r, double alpha, double beta,
                          double M, LikelihoodDiagnostics* diag) {
  return log_lik_cond_trunc(CaseGroups(cases), r, alpha, beta, M, diag);
}

double cond_case_term(const CaseRecord& c, double r, double alpha, double beta) {
  check_gamma(alpha, beta);
  GammaTail shifted(alpha, beta + (std::abs(r) < kGrowthZeroThreshold ? 0.0 : r));
  return std::exp(log_cond_term(c, r, alpha, beta, shifted));
}

double uncond_case_term(const CaseRecord& c, double rho, double r, double alpha, double beta,
                        double L) {
  check_gamma(alpha, beta);
  GammaTail shifted(alpha, beta + r);
  return std::exp(log_uncond_term(c, rho, r, alpha, beta, L, shifted));
}

double cond_trunc_case_term(const CaseRecord& c, double r, double alpha, double beta, double M) {
  check_gamma(alpha, beta);
  GammaTail base(alpha, beta), base_plus1(alpha + 1.0, beta);
  GammaTail shifted(alpha, beta + (std::abs(r) < kGrowthZeroThreshold ? 0.0 : r));
  return std::exp(log_trunc_term(c, r, M, base, shifted, base_plus1));
}

double truncation_z(double x, double r, double alpha, double beta) {
  check_gamma(alpha, beta);
  if (x <= 0.0) return 0.0;
  if (std::abs(r) < kGrowthZeroThreshold) {
    if (gamma_cdf(alpha, beta, x) < 0.5) return integrated_cdf_series(alpha, beta, x);
    return x * gamma_cdf(alpha, beta, x) - (alpha / beta) * gamma_cdf(alpha + 1.0, beta, x);
  }
  return std::pow(beta / (beta + r), alpha) * gamma_cdf(alpha, beta + r, x) -
         std::exp(-r * x) * gamma_cdf(alpha, beta, x);
}

double truncation_normalizer(double b, double e, double M, double r, double alpha, double beta) {
  check_gamma(alpha, beta);
  GammaTail base(alpha, beta), base_plus1(alpha + 1.0, beta);
  GammaTail shifted(alpha, beta + (std::abs(r) < kGrowthZeroThreshold ? 0.0 : r));
  const double scaled = scaled_truncation_normalizer(b, e, M, r, base, shifted, base_plus1);
  return std::abs(r) < kGrowthZeroThreshold ? scaled : scaled * std::exp(-r * M);
}

double marginal_t_density(double t, double r, double L) {
  if (t < 0.0 || t > L) return 0.0;
  return std::exp(r * t) * (L - t);
}

double marginal_t_density_normalized(double t, double r, double L) {
  // integral of exp(r t)(L - t) over [0, L] = (exp(rL) - 1 - rL) / r^2
  const double norm = std::abs(r) < 1e-8 ? 0.5 * L * L
                                         : (std::expm1(r * L) - r * L) / (r * r);
  return marginal_t_density(t, r, L) / norm;
}

double marginal_s_density(double s, double r, double alpha, double beta, double L) {
  check_gamma(alpha, beta);
  const double over = positive_part(s - L);
  return std::exp(r * s) * ((L - s) * gamma_sf(alpha, beta + r, over) +
                            alpha / (beta + r) * gamma_sf(alpha + 1.0, beta + r, over));
}

bool marginal_s_condition_holds(double r, double alpha, double beta, double L) {
  return L > 4.0 * (alpha + 5.0) / (beta + r);
}

double growth_bias_correction(double alpha, double beta, double r_ref, double c) {
  if (!(c > 0.0) || !(beta + r_ref > 0.0)) {
    throw std::domain_error("growth_bias_correction requires c > 0 and beta + r > 0");
  }
  return 1.0 / (alpha / (beta + r_ref) + 0.5 * c);
}

double corrected_growth_fixed_point(double r_naive, double alpha, double beta, double c) {
  double r = r_naive;
  for (int it = 0; it < 10000; ++it) {
    const double next = r_naive + growth_bias_correction(alpha, beta, r, c);
    if (std::abs(next - r) < 1e-8) return next;
    r = next;
  }
  throw std::runtime_error("bias-correction fixed point did not converge");
}

}  // namespace bets
