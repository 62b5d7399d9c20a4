#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "bets/generative.hpp"
#include "bets/timeline.hpp"

namespace bets {

/// Inference parameters. rho = (lambda_V / lambda_W) * pi / (1 - pi) is the
/// only travel quantity the unconditional likelihood depends on.
struct ParamTheta {
  double rho = 0.0;
  double r = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
};

/// Interpretable reparameterization used for reporting and optimisation.
struct DisplayTheta {
  double doubling_time = 4.0;
  double median_incubation = 5.0;
  double q95_incubation = 12.0;
  double rho = 0.5;
};

struct ShapeRate {
  double alpha;
  double beta;
};

/// Unique Gamma (shape, rate) with the given median and 95% quantile.
/// Throws std::domain_error when 0 < median < q95 fails or no shape in
/// [1e-3, 1e3] matches the quantile ratio.
ShapeRate quantiles_to_shape_rate(double median, double q95);

DisplayTheta to_display(const ParamTheta& theta);
ParamTheta from_display(const DisplayTheta& display);

/// Integral over t in [b, min(s, e)] of exp(r t) h_{alpha,beta}(s - t).
double gamma_exp_integral(double b, double e, double s, double r, double alpha, double beta);

/// P(selected | B = b, E = e) up to the symptomatic fraction nu: G(e) - G(b).
double selection_prob_given_be(double b, double e, const GrowthCurve& growth);

struct SelectionProbability {
  double approx;  ///< closed form valid for r L > 5
  double exact;   ///< numerical double integral over the travel model
};

SelectionProbability selection_prob_total(double pi, double lambda_W, double lambda_V, double kappa,
                                          double nu, double r, double L = kHorizon);

/// Counts per-case terms that underflowed and were floored at 1e-300.
struct LikelihoodDiagnostics {
  std::size_t clamped = 0;
};

inline constexpr double kGrowthZeroThreshold = 1e-8;

/// Cases collapsed to distinct (B, E, S, residency) with multiplicities.
/// Fitting code builds this once and reuses it for every evaluation.
class CaseGroups {
 public:
  struct Group {
    CaseRecord rep;
    double count;
  };

  explicit CaseGroups(std::span<const CaseRecord> cases);

  const std::vector<Group>& groups() const { return groups_; }
  std::size_t n_cases() const { return n_cases_; }
  double max_onset() const { return max_onset_; }

 private:
  std::vector<Group> groups_;
  std::size_t n_cases_ = 0;
  double max_onset_ = 0.0;
};

/// Conditional likelihood given (B, E); free of the travel parameters.
/// Throws std::domain_error naming the case when a term is not finite.
double log_lik_cond(std::span<const CaseRecord> cases, double r, double alpha, double beta,
                    LikelihoodDiagnostics* diag = nullptr);
double log_lik_cond(const CaseGroups& cases, double r, double alpha, double beta,
                    LikelihoodDiagnostics* diag = nullptr);

/// Unconditional likelihood (approximate normaliser, requires r > 5/L).
double log_lik_uncond(std::span<const CaseRecord> cases, double rho, double r, double alpha,
                      double beta, LikelihoodDiagnostics* diag = nullptr);
double log_lik_uncond(const CaseGroups& cases, double rho, double r, double alpha,
                      double beta, LikelihoodDiagnostics* diag = nullptr);

/// Conditional likelihood under right truncation S <= M. Throws
/// std::invalid_argument if any case has S > M.
double log_lik_cond_trunc(std::span<const CaseRecord> cases, double r, double alpha, double beta,
                          double M, LikelihoodDiagnostics* diag = nullptr);
double log_lik_cond_trunc(const CaseGroups& cases, double r, double alpha, double beta,
                          double M, LikelihoodDiagnostics* diag = nullptr);

/// Per-case density terms (not logged) of the three likelihoods.
double cond_case_term(const CaseRecord& c, double r, double alpha, double beta);
double uncond_case_term(const CaseRecord& c, double rho, double r, double alpha, double beta,
                        double L = kHorizon);
double cond_trunc_case_term(const CaseRecord& c, double r, double alpha, double beta, double M);

/// Z_r(x) of the truncated likelihood (both r = 0 and r != 0 forms).
double truncation_z(double x, double r, double alpha, double beta);
/// Z_r(M - b) - Z_r((M - e)_+).
double truncation_normalizer(double b, double e, double M, double r, double alpha, double beta);

/// exp(r t) (L - t): unnormalised density of T among exported residents.
double marginal_t_density(double t, double r, double L = kHorizon);
/// marginal_t_density divided by its integral over [0, L].
double marginal_t_density_normalized(double t, double r, double L = kHorizon);

/// Unnormalised density of S among exported residents, valid for s >= L/2.
double marginal_s_density(double s, double r, double alpha, double beta, double L = kHorizon);
/// L > 4 (alpha + 5) / (beta + r): the tail condition behind marginal_s_density.
bool marginal_s_condition_holds(double r, double alpha, double beta, double L = kHorizon);

/// Under-estimation of r by a log-linear fit of onsets over the last c
/// days before L: 1 / (alpha / (beta + r_ref) + c / 2).
double growth_bias_correction(double alpha, double beta, double r_ref, double c);

/// Solves r = r_naive + growth_bias_correction(alpha, beta, r, c) by
/// fixed-point iteration to 1e-8.
double corrected_growth_fixed_point(double r_naive, double alpha, double beta, double c);

}  // namespace bets
