#include "bets/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "bets/optimize.hpp"
#include "bets/parallel.hpp"
#include "bets/quadrature.hpp"
#include "bets/rng.hpp"
#include "bets/special.hpp"

namespace bets {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();
// Transformed coordinates beyond this magnitude mean the optimum ran off
// to the edge of the parameter space (a factor of e^12 ~ 1.6e5).
constexpr double kBoundaryCoordinate = 12.0;

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Maps DisplayTheta to unconstrained optimiser coordinates and back. A pinned
// parameter is dropped; pinning q95 turns the median coordinate into
// logit(median / q95) so the ordering constraint stays implicit.
class Coordinates {
 public:
  Coordinates(const LikelihoodModel& model, std::optional<std::pair<Param, double>> pinned)
      : model_(model), pinned_(pinned) {
    for (Param p : free_params(model)) {
      if (pinned && pinned->first == p) continue;
      params_.push_back(p);
    }
    if (pinned) {
      const auto all = free_params(model);
      if (std::find(all.begin(), all.end(), pinned->first) == all.end()) {
        throw std::invalid_argument("parameter " + to_string(pinned->first) +
                                    " is not estimated by the " + to_string(model.kind) +
                                    " likelihood");
      }
    }
  }

  const std::vector<Param>& params() const { return params_; }

  Eigen::VectorXd encode(DisplayTheta d) const {
    apply_fixed(d);
    if (pinned_q95() && d.median_incubation >= d.q95_incubation) {
      d.median_incubation = d.q95_incubation / 2.4;
    }
    if (d.q95_incubation <= d.median_incubation) {
      d.q95_incubation = d.median_incubation * 2.4;
    }
    Eigen::VectorXd x(static_cast<Eigen::Index>(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      double v = 0.0;
      switch (params_[i]) {
        case Param::doubling_time: v = std::log(d.doubling_time); break;
        case Param::median:
          v = pinned_q95() ? logit(d.median_incubation / d.q95_incubation)
                           : std::log(d.median_incubation);
          break;
        case Param::q95: v = std::log(d.q95_incubation - d.median_incubation); break;
        case Param::rho: v = std::log(d.rho); break;
      }
      x(static_cast<Eigen::Index>(i)) = v;
    }
    return x;
  }

  DisplayTheta decode(const Eigen::VectorXd& x) const {
    DisplayTheta d;
    apply_fixed(d);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const double v = x(static_cast<Eigen::Index>(i));
      switch (params_[i]) {
        case Param::doubling_time: d.doubling_time = std::exp(v); break;
        case Param::median:
          d.median_incubation = pinned_q95() ? d.q95_incubation * sigmoid(v) : std::exp(v);
          break;
        case Param::q95: d.q95_incubation = d.median_incubation + std::exp(v); break;
        case Param::rho: d.rho = std::exp(v); break;
      }
    }
    return d;
  }

 private:
  bool pinned_q95() const { return pinned_ && pinned_->first == Param::q95; }

  void apply_fixed(DisplayTheta& d) const {
    if (model_.kind == LikelihoodKind::cond_zero_growth) d.doubling_time = kInfinity;
    if (model_.kind != LikelihoodKind::uncond) d.rho = 0.0;
    if (!pinned_) return;
    switch (pinned_->first) {
      case Param::doubling_time: d.doubling_time = pinned_->second; break;
      case Param::median: d.median_incubation = pinned_->second; break;
      case Param::q95: d.q95_incubation = pinned_->second; break;
      case Param::rho: d.rho = pinned_->second; break;
    }
  }

  LikelihoodModel model_;
  std::optional<std::pair<Param, double>> pinned_;
  std::vector<Param> params_;
};

double negative_log_lik(const CaseGroups& cases, const LikelihoodModel& model,
                        const DisplayTheta& d) {
  if (!std::isfinite(d.median_incubation) || !std::isfinite(d.q95_incubation) ||
      !(d.q95_incubation > d.median_incubation) || !(d.median_incubation > 0.0)) {
    return kInfinity;
  }
  try {
    const double ll = log_likelihood(cases, model, from_display(d));
    return std::isfinite(ll) ? -ll : kInfinity;
  } catch (const std::domain_error&) {
    return kInfinity;
  }
}

double type7_quantile(std::vector<double> sorted, double p) {
  std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<std::optional<FitResult>> bootstrap_fits(std::span<const CaseRecord> cases,
                                                     const FitResult& fit,
                                                     const BootstrapOptions& options) {
  if (options.resamples < 100) throw std::invalid_argument("bootstrap needs at least 100 resamples");
  std::vector<std::optional<FitResult>> fits(options.resamples);
  parallel_for(
      options.resamples,
      [&](std::size_t i) {
        Rng rng = split_stream(options.seed, i);
        std::uniform_int_distribution<std::size_t> pick(0, cases.size() - 1);
        std::vector<CaseRecord> sample;
        sample.reserve(cases.size());
        for (std::size_t k = 0; k < cases.size(); ++k) sample.push_back(cases[pick(rng)]);
        FitOptions fo = options.fit;
        fo.seed = options.seed + i;
        FitResult refit = mle_fit(sample, fit.model, fit.display, fo);
        if (refit.converged) fits[i] = std::move(refit);
      },
      options.threads);
  std::size_t failures = 0;
  for (const auto& f : fits) failures += f ? 0 : 1;
  if (static_cast<double>(failures) > 0.05 * static_cast<double>(options.resamples)) {
    throw std::runtime_error("bootstrap: " + std::to_string(failures) + " of " +
                             std::to_string(options.resamples) + " resample fits did not converge");
  }
  return fits;
}

BootstrapResult summarise_bootstrap(const std::vector<std::optional<FitResult>>& fits,
                                    double estimate,
                                    const std::function<double(const FitResult&)>& statistic,
                                    const BootstrapOptions& options) {
  BootstrapResult out;
  out.estimate = estimate;
  for (const auto& f : fits) {
    if (f) out.replicates.push_back(statistic(*f));
    else ++out.failures;
  }
  const double tail = 0.5 * (1.0 - options.level);
  const double q_lo = type7_quantile(out.replicates, tail);
  const double q_hi = type7_quantile(out.replicates, 1.0 - tail);
  out.ci.level = options.level;
  if (options.interval == BootstrapInterval::basic) {
    out.ci.lo = 2.0 * estimate - q_hi;
    out.ci.hi = 2.0 * estimate - q_lo;
    out.ci.method = "bootstrap-basic";
  } else {
    out.ci.lo = q_lo;
    out.ci.hi = q_hi;
    out.ci.method = "bootstrap-percentile";
  }
  return out;
}

}  // namespace

std::string to_string(LikelihoodKind kind) {
  switch (kind) {
    case LikelihoodKind::cond: return "cond";
    case LikelihoodKind::cond_zero_growth: return "cond_r0";
    case LikelihoodKind::uncond: return "uncond";
    case LikelihoodKind::cond_trunc: return "cond_trunc";
  }
  return "cond";
}

std::optional<LikelihoodKind> parse_likelihood_kind(const std::string& text) {
  for (auto k : {LikelihoodKind::cond, LikelihoodKind::cond_zero_growth, LikelihoodKind::uncond,
                 LikelihoodKind::cond_trunc}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::string to_string(Param p) {
  switch (p) {
    case Param::doubling_time: return "doubling_time";
    case Param::median: return "median";
    case Param::q95: return "q95";
    case Param::rho: return "rho";
  }
  return "median";
}

std::optional<Param> parse_param(const std::string& text) {
  for (auto p : {Param::doubling_time, Param::median, Param::q95, Param::rho}) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

std::vector<Param> free_params(const LikelihoodModel& model) {
  switch (model.kind) {
    case LikelihoodKind::cond_zero_growth: return {Param::median, Param::q95};
    case LikelihoodKind::uncond:
      return {Param::doubling_time, Param::median, Param::q95, Param::rho};
    default: return {Param::doubling_time, Param::median, Param::q95};
  }
}

double param_value(const DisplayTheta& d, Param p) {
  switch (p) {
    case Param::doubling_time: return d.doubling_time;
    case Param::median: return d.median_incubation;
    case Param::q95: return d.q95_incubation;
    case Param::rho: return d.rho;
  }
  return 0.0;
}

double log_likelihood(std::span<const CaseRecord> cases, const LikelihoodModel& model,
                      const ParamTheta& theta, LikelihoodDiagnostics* diag) {
  return log_likelihood(CaseGroups(cases), model, theta, diag);
}

double log_likelihood(const CaseGroups& cases, const LikelihoodModel& model,
                      const ParamTheta& theta, LikelihoodDiagnostics* diag) {
  switch (model.kind) {
    case LikelihoodKind::cond: return log_lik_cond(cases, theta.r, theta.alpha, theta.beta, diag);
    case LikelihoodKind::cond_zero_growth:
      return log_lik_cond(cases, 0.0, theta.alpha, theta.beta, diag);
    case LikelihoodKind::uncond:
      return log_lik_uncond(cases, theta.rho, theta.r, theta.alpha, theta.beta, diag);
    case LikelihoodKind::cond_trunc:
      return log_lik_cond_trunc(cases, theta.r, theta.alpha, theta.beta, model.truncation, diag);
  }
  return 0.0;
}

FitResult mle_fit(std::span<const CaseRecord> cases, const LikelihoodModel& model,
                  const DisplayTheta& init, const FitOptions& options) {
  if (cases.empty()) throw std::invalid_argument("mle_fit: no cases");
  if (model.kind == LikelihoodKind::cond_trunc) {
    for (const auto& c : cases) {
      if (c.S > model.truncation) {
        throw std::invalid_argument("case " + c.case_id + " has symptom onset after truncation day");
      }
    }
  }
  const Coordinates coords(model, options.pinned);
  const CaseGroups groups(cases);
  const auto objective = [&](const Eigen::VectorXd& x) {
    return negative_log_lik(groups, model, coords.decode(x));
  };

  NelderMeadOptions nm;
  nm.max_evals = options.max_evals;
  nm.diameter_tol = options.diameter_tol;
  const Eigen::VectorXd x0 = coords.encode(init);

  FitResult out;
  out.model = model;
  out.n_cases = cases.size();
  NelderMeadResult best;
  best.value = kInfinity;
  best.x = x0;
  Rng rng = split_stream(options.seed, 0);
  std::normal_distribution<double> jitter(0.0, options.jitter);
  for (int k = 0; k < std::max(1, options.restarts); ++k) {
    Eigen::VectorXd start = x0;
    if (k > 0) {
      for (Eigen::Index i = 0; i < start.size(); ++i) start(i) += jitter(rng);
    }
    NelderMeadResult res = nelder_mead(objective, start, nm);
    out.evaluations += res.evals;
    if (k == 0 || res.value < best.value) best = std::move(res);
  }
  // Restarting from the optimum guards against a collapsed simplex.
  if (options.polish && std::isfinite(best.value)) {
    NelderMeadOptions polish = nm;
    polish.initial_step = 0.05;
    NelderMeadResult res = nelder_mead(objective, best.x, polish);
    out.evaluations += res.evals;
    if (res.value <= best.value) best = std::move(res);
  }

  out.display = coords.decode(best.x);
  out.converged = best.converged && std::isfinite(best.value);
  if (std::isfinite(best.value)) {
    out.theta_hat = from_display(out.display);
    LikelihoodDiagnostics diag;
    out.log_lik = log_likelihood(groups, model, out.theta_hat, &diag);
    out.clamped_terms = diag.clamped;
  } else {
    out.log_lik = -kInfinity;
    out.diagnostic = "no parameter value gave a finite likelihood";
  }
  // The shape solver stops at 1e3; an optimum there is a collapsed incubation
  // spread. It is still the maximiser over the allowed space, so only flag it.
  if (std::isfinite(best.value) && out.theta_hat.alpha > 0.99e3) {
    out.diagnostic = "estimate on the boundary of the parameter space: Gamma shape";
  }
  for (std::size_t i = 0; i < coords.params().size(); ++i) {
    if (std::abs(best.x(static_cast<Eigen::Index>(i))) > kBoundaryCoordinate) {
      out.diagnostic = "estimate on the boundary of the parameter space: " +
                       to_string(coords.params()[i]);
      out.converged = false;
    }
  }
  return out;
}

ConfidenceInterval profile_ci(std::span<const CaseRecord> cases, const FitResult& fit, Param param,
                              double level, const FitOptions& options) {
  const double point = param_value(fit.display, param);
  ConfidenceInterval ci{point, point, level, true, true, "profile"};
  if (!(level > 0.0)) return ci;
  if (!std::isfinite(point) || !(point > 0.0)) {
    throw std::invalid_argument("profile_ci: point estimate of " + to_string(param) +
                                " is not a positive number");
  }
  const double critical = chi_squared_quantile(level, 1.0);

  const auto search = [&](double direction) -> std::pair<double, bool> {
    DisplayTheta warm = fit.display;
    const auto deviance = [&](double v, DisplayTheta* at) {
      FitOptions fo = options;
      fo.restarts = 1;
      fo.polish = false;
      fo.pinned = std::make_pair(param, v);
      const FitResult pinned = mle_fit(cases, fit.model, warm, fo);
      if (!std::isfinite(pinned.log_lik)) return kInfinity;
      if (at) *at = pinned.display;
      return 2.0 * (fit.log_lik - pinned.log_lik);
    };

    // Expand geometrically until the deviance crosses the threshold.
    const double limit = direction > 0 ? point * 100.0 : point / 100.0;
    double inside = point, outside = point;
    bool bracketed = false;
    for (double factor = 1.05; ; factor *= factor) {
      const double v = direction > 0 ? std::min(point * factor, limit)
                                     : std::max(point / factor, limit);
      DisplayTheta at = warm;
      const double dev = deviance(v, &at);
      if (dev >= critical) {
        outside = v;
        bracketed = true;
        break;
      }
      inside = v;
      warm = at;
      if (v == limit) break;
    }
    if (!bracketed) return {limit, false};

    // Bisection in log scale.
    for (int it = 0; it < 200; ++it) {
      const double mid = std::sqrt(inside * outside);
      DisplayTheta at = warm;
      const double dev = deviance(mid, &at);
      if (std::abs(dev - critical) < 1e-4) return {mid, true};
      if (dev < critical) {
        inside = mid;
        warm = at;
      } else {
        outside = mid;
      }
      if (std::abs(std::log(outside / inside)) < 1e-12) break;
    }
    return {std::sqrt(inside * outside), true};
  };

  const auto [lo, lo_ok] = search(-1.0);
  const auto [hi, hi_ok] = search(+1.0);
  ci.lo = lo;
  ci.hi = hi;
  ci.lo_bracketed = lo_ok;
  ci.hi_bracketed = hi_ok;
  return ci;
}

void attach_profile_cis(std::span<const CaseRecord> cases, FitResult& fit, double level,
                        unsigned threads) {
  const auto params = free_params(fit.model);
  std::vector<ConfidenceInterval> cis(params.size());
  parallel_for(
      params.size(), [&](std::size_t i) { cis[i] = profile_ci(cases, fit, params[i], level); },
      threads);
  for (std::size_t i = 0; i < params.size(); ++i) fit.ci[to_string(params[i])] = cis[i];
}

BootstrapResult bootstrap_ci(std::span<const CaseRecord> cases, const FitResult& fit,
                             const std::function<double(const FitResult&)>& statistic,
                             const BootstrapOptions& options) {
  const auto fits = bootstrap_fits(cases, fit, options);
  return summarise_bootstrap(fits, statistic(fit), statistic, options);
}

std::vector<SweepRow> bias_sweep(std::span<const CaseRecord> cases, std::span<const int> cutoffs,
                                 const SweepOptions& options) {
  constexpr LikelihoodKind kModels[] = {LikelihoodKind::cond_zero_growth, LikelihoodKind::cond,
                                        LikelihoodKind::cond_trunc};
  std::vector<SweepRow> rows(cutoffs.size() * 3);
  parallel_for(
      rows.size(),
      [&](std::size_t idx) {
        const int cutoff = cutoffs[idx / 3];
        SweepRow& row = rows[idx];
        row.cutoff = cutoff;
        row.model = kModels[idx % 3];
        LikelihoodModel model{row.model, 0.0};
        const int M = cutoff - options.truncation_offset;
        if (row.model == LikelihoodKind::cond_trunc) model.truncation = M;

        std::vector<CaseRecord> subset;
        for (const auto& c : cases) {
          if (c.C_int > cutoff) continue;
          if (row.model == LikelihoodKind::cond_trunc && c.S_int > M) continue;
          subset.push_back(c);
        }
        row.n_cases = subset.size();
        if (subset.size() < options.min_cases) {
          row.flagged = true;
          return;
        }
        const FitResult fit = mle_fit(subset, model);
        row.converged = fit.converged;
        row.median = fit.display.median_incubation;
        row.q95 = fit.display.q95_incubation;
        row.doubling_time = fit.display.doubling_time;
        if (options.bootstrap_resamples > 0 && fit.converged) {
          BootstrapOptions bo;
          bo.resamples = options.bootstrap_resamples;
          bo.level = options.level;
          bo.seed = options.seed + idx * 1000003ULL;
          bo.threads = 1;
          const auto fits = bootstrap_fits(subset, fit, bo);
          const auto median = [](const FitResult& f) { return f.display.median_incubation; };
          const auto q95 = [](const FitResult& f) { return f.display.q95_incubation; };
          row.median_band = summarise_bootstrap(fits, median(fit), median, bo).ci;
          row.q95_band = summarise_bootstrap(fits, q95(fit), q95, bo).ci;
        }
      },
      options.threads);
  return rows;
}

GofResult pearson_chi2(std::span<const double> observed, std::span<const double> expected,
                       double min_expected) {
  if (observed.size() != expected.size()) {
    throw std::invalid_argument("pearson_chi2: observed and expected differ in length");
  }
  GofResult out;
  GofBin current{0, -1, 0.0, 0.0};
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (current.last < current.first) current = {static_cast<int>(i), static_cast<int>(i), 0.0, 0.0};
    current.last = static_cast<int>(i);
    current.observed += observed[i];
    current.expected += expected[i];
    if (current.expected >= min_expected) {
      out.bins.push_back(current);
      current = {0, -1, 0.0, 0.0};
    }
  }
  if (current.last >= current.first) {
    if (out.bins.empty()) {
      out.bins.push_back(current);
    } else {
      out.bins.back().last = current.last;
      out.bins.back().observed += current.observed;
      out.bins.back().expected += current.expected;
    }
  }
  if (out.bins.size() < 3) {
    throw std::invalid_argument("goodness of fit needs at least 3 bins after pooling, got " +
                                std::to_string(out.bins.size()));
  }
  for (const auto& b : out.bins) {
    out.chi2 += (b.observed - b.expected) * (b.observed - b.expected) / b.expected;
  }
  out.dof = static_cast<int>(out.bins.size()) - 1;
  out.p_value = chi_squared_sf(out.chi2, out.dof);
  return out;
}

std::vector<double> expected_onset_counts(int first_day, int last_day, double total, double r,
                                          double alpha, double beta) {
  std::vector<double> out;
  double sum = 0.0;
  for (int k = first_day; k <= last_day; ++k) {
    const double mass = integrate(
        [&](double s) { return marginal_s_density(s, r, alpha, beta); }, k - 1.0, k,
        {.rel_tol = 1e-10});
    out.push_back(mass);
    sum += mass;
  }
  if (!(sum > 0.0)) throw std::domain_error("onset marginal has no mass on the observed range");
  for (double& v : out) v *= total / sum;
  return out;
}

GofResult gof_onset_marginal(std::span<const CaseRecord> cases, double r, double alpha,
                             double beta) {
  std::vector<int> days;
  for (const auto& c : cases) {
    if (c.wuhan_resident()) days.push_back(c.S_int);
  }
  if (days.size() < 30) {
    throw std::invalid_argument("goodness of fit needs at least 30 Wuhan residents, got " +
                                std::to_string(days.size()));
  }
  const auto [lo, hi] = std::minmax_element(days.begin(), days.end());
  const int first = *lo, last = *hi;
  std::vector<double> observed(static_cast<std::size_t>(last - first + 1), 0.0);
  for (int d : days) observed[static_cast<std::size_t>(d - first)] += 1.0;
  const auto expected =
      expected_onset_counts(first, last, static_cast<double>(days.size()), r, alpha, beta);
  GofResult out = pearson_chi2(observed, expected);
  for (auto& b : out.bins) {
    b.first += first;
    b.last += first;
  }
  return out;
}

}  // namespace bets
