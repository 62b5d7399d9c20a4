#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bets/likelihood.hpp"
#include "bets/timeline.hpp"

namespace bets {

enum class LikelihoodKind {
  cond,              ///< conditional on (B, E), growth rate free
  cond_zero_growth,  ///< conditional with r pinned at 0
  uncond,            ///< unconditional, depends on rho
  cond_trunc,        ///< conditional under right truncation S <= M
};

struct LikelihoodModel {
  LikelihoodKind kind = LikelihoodKind::cond;
  /// Truncation day M (continuous scale); used by cond_trunc only.
  double truncation = 0.0;
};

/// "cond", "cond_r0", "uncond" or "cond_trunc".
std::string to_string(LikelihoodKind kind);
std::optional<LikelihoodKind> parse_likelihood_kind(const std::string& text);

enum class Param { doubling_time, median, q95, rho };

std::string to_string(Param p);
std::optional<Param> parse_param(const std::string& text);

/// Parameters the model estimates, in optimisation order.
std::vector<Param> free_params(const LikelihoodModel& model);

double param_value(const DisplayTheta& d, Param p);

double log_likelihood(std::span<const CaseRecord> cases, const LikelihoodModel& model,
                      const ParamTheta& theta, LikelihoodDiagnostics* diag = nullptr);
double log_likelihood(const CaseGroups& cases, const LikelihoodModel& model,
                      const ParamTheta& theta, LikelihoodDiagnostics* diag = nullptr);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  /// False when the endpoint was not bracketed and lo/hi is the search limit.
  bool lo_bracketed = true;
  bool hi_bracketed = true;
  std::string method;
};

struct FitResult {
  ParamTheta theta_hat;
  DisplayTheta display;
  double log_lik = 0.0;
  LikelihoodModel model;
  bool converged = false;
  std::size_t n_cases = 0;
  std::map<std::string, ConfidenceInterval> ci;
  int evaluations = 0;
  std::size_t clamped_terms = 0;
  /// Set when the optimum sits on the edge of the parameter space.
  std::optional<std::string> diagnostic;
};

struct FitOptions {
  int restarts = 3;
  int max_evals = 50000;
  double diameter_tol = 1e-8;
  /// Standard deviation of restart jitter in transformed coordinates.
  double jitter = 0.3;
  std::uint64_t seed = 20200123;
  /// Re-runs the simplex from the best optimum with a small initial step.
  bool polish = true;
  /// Holds one parameter fixed (profile likelihood).
  std::optional<std::pair<Param, double>> pinned;
};

/// Maximum likelihood by Nelder-Mead over (log doubling time, log median,
/// log(q95 - median), log rho). Throws std::invalid_argument for an empty
/// cohort or a truncated model with S > M.
FitResult mle_fit(std::span<const CaseRecord> cases, const LikelihoodModel& model,
                  const DisplayTheta& init = {}, const FitOptions& options = {});

/// Likelihood-ratio interval for one parameter, found by bisection on the
/// profile deviance. Endpoints not bracketed in [point/100, 100 point] are
/// reported at the limit with the corresponding *_bracketed flag cleared.
ConfidenceInterval profile_ci(std::span<const CaseRecord> cases, const FitResult& fit, Param param,
                              double level = 0.95, const FitOptions& options = {});

/// Fills fit.ci with profile intervals for every free parameter.
void attach_profile_cis(std::span<const CaseRecord> cases, FitResult& fit, double level = 0.95,
                        unsigned threads = 0);

enum class BootstrapInterval { basic, percentile };

struct BootstrapOptions {
  std::size_t resamples = 1000;
  double level = 0.95;
  BootstrapInterval interval = BootstrapInterval::basic;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  FitOptions fit = [] {
    FitOptions f;
    f.restarts = 1;
    return f;
  }();
};

struct BootstrapResult {
  ConfidenceInterval ci;
  double estimate = 0.0;
  std::size_t failures = 0;
  std::vector<double> replicates;
};

/// Nonparametric bootstrap: resample cases, refit from the point estimate,
/// evaluate `statistic`. Throws std::runtime_error when more than 5% of the
/// refits fail to converge.
BootstrapResult bootstrap_ci(std::span<const CaseRecord> cases, const FitResult& fit,
                             const std::function<double(const FitResult&)>& statistic,
                             const BootstrapOptions& options = {});

struct SweepOptions {
  int truncation_offset = 7;
  std::size_t min_cases = 20;
  /// Bootstrap bands are computed when > 0.
  std::size_t bootstrap_resamples = 0;
  double level = 0.95;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct SweepRow {
  int cutoff = 0;  ///< epoch day; cases confirmed on or before it are used
  LikelihoodKind model = LikelihoodKind::cond;
  std::size_t n_cases = 0;
  bool flagged = false;  ///< too few cases; not fitted
  bool converged = false;
  double median = 0.0;
  double q95 = 0.0;
  double doubling_time = 0.0;
  std::optional<ConfidenceInterval> median_band;
  std::optional<ConfidenceInterval> q95_band;
};

/// For each cutoff d, fits the r = 0, growth-adjusted and truncation-adjusted
/// (M = d - truncation_offset, cases with S_int <= M) conditional models.
std::vector<SweepRow> bias_sweep(std::span<const CaseRecord> cases, std::span<const int> cutoffs,
                                 const SweepOptions& options = {});

struct GofBin {
  int first = 0;  ///< first pooled bin (day or index)
  int last = 0;
  double observed = 0.0;
  double expected = 0.0;
};

struct GofResult {
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 1.0;
  std::vector<GofBin> bins;
};

/// Pearson chi-squared after pooling adjacent bins until each expected
/// count reaches `min_expected`; dof = pooled bins - 1. Throws
/// std::invalid_argument when fewer than 3 bins remain.
GofResult pearson_chi2(std::span<const double> observed, std::span<const double> expected,
                       double min_expected = 5.0);

/// Expected onset counts per day first..last from the onset marginal,
/// normalised to `total` over that range.
std::vector<double> expected_onset_counts(int first_day, int last_day, double total, double r,
                                          double alpha, double beta);

/// Goodness of fit of the onset marginal for Wuhan residents (B_int = 0).
/// Requires at least 30 such cases.
GofResult gof_onset_marginal(std::span<const CaseRecord> cases, double r, double alpha,
                             double beta);

}  // namespace bets
