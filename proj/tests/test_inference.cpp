#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bets/generative.hpp"
#include "bets/inference.hpp"
#include "bets/json_io.hpp"
#include "bets/special.hpp"
#include "oracles.hpp"

using namespace bets;

namespace {

const GenerativeParams kTruth = GenerativeParams::from_theta(0.45, 0.30, 1.86, 0.33);

std::vector<CaseRecord> simulate(std::size_t n, std::uint64_t seed) {
  Rng rng = split_stream(seed, 0);
  return sample_exported(n, kTruth, rng).cases;
}

const double kTrueMedian = boost::math::gamma_p_inv(1.86, 0.5) / 0.33;
const double kTrueQ95 = boost::math::gamma_p_inv(1.86, 0.95) / 0.33;

}  // namespace

TEST_CASE("names round trip") {
  for (auto k : {LikelihoodKind::cond, LikelihoodKind::cond_zero_growth, LikelihoodKind::uncond,
                 LikelihoodKind::cond_trunc}) {
    CHECK(parse_likelihood_kind(to_string(k)) == k);
  }
  for (auto p : {Param::doubling_time, Param::median, Param::q95, Param::rho}) CHECK(parse_param(to_string(p)) == p);
  CHECK_FALSE(parse_likelihood_kind("full").has_value());
  CHECK(free_params({LikelihoodKind::uncond, 0}).size() == 4);
  CHECK(free_params({LikelihoodKind::cond_zero_growth, 0}).size() == 2);
}

TEST_CASE("conditional fit recovers the growth rate and incubation quantiles") {
  const auto cases = simulate(2000, 11);
  const FitResult fit = mle_fit(cases, {LikelihoodKind::cond, 0.0});
  CHECK(fit.converged);
  CHECK(fit.clamped_terms == 0);
  CHECK(fit.n_cases == 2000);
  CHECK(std::abs(fit.display.doubling_time / (std::numbers::ln2 / 0.30) - 1.0) < 0.10);
  CHECK(std::abs(fit.display.median_incubation / kTrueMedian - 1.0) < 0.10);
  CHECK(std::abs(fit.display.q95_incubation / kTrueQ95 - 1.0) < 0.10);
}

TEST_CASE("the optimum is a maximum in natural coordinates") {
  const auto cases = simulate(400, 12);
  const LikelihoodModel model{LikelihoodKind::uncond, 0.0};
  const FitResult fit = mle_fit(cases, model);
  REQUIRE(fit.converged);
  CHECK(log_likelihood(cases, model, fit.theta_hat) == doctest::Approx(fit.log_lik).epsilon(1e-12));
  CHECK(to_display(fit.theta_hat).median_incubation == doctest::Approx(fit.display.median_incubation).epsilon(1e-6));
  const double h = 1e-4;
  for (int i = 0; i < 4; ++i) {
    for (double sign : {-1.0, 1.0}) {
      ParamTheta t = fit.theta_hat;
      double* field[] = {&t.rho, &t.r, &t.alpha, &t.beta};
      *field[i] *= 1.0 + sign * h;
      CHECK(log_likelihood(cases, model, t) <= fit.log_lik + 1e-7);
    }
  }
  // A different starting point reaches the same optimum.
  const FitResult other = mle_fit(cases, model, DisplayTheta{2.0, 8.0, 20.0, 2.0});
  CHECK(other.log_lik == doctest::Approx(fit.log_lik).epsilon(1e-9));
  CHECK(other.display.q95_incubation == doctest::Approx(fit.display.q95_incubation).epsilon(1e-4));
}

TEST_CASE("identical cases give a flagged fit") {
  std::vector<CaseRecord> cases(50, make_case_record("same", 0, 30, 33));
  const FitResult fit = mle_fit(cases, {LikelihoodKind::cond, 0.0});
  CHECK((!fit.converged || fit.diagnostic.has_value()));
}

TEST_CASE("fit preconditions") {
  CHECK_THROWS_AS(mle_fit({}, {LikelihoodKind::cond, 0.0}), std::invalid_argument);
  const auto cases = simulate(30, 13);
  CHECK_THROWS_AS(mle_fit(cases, {LikelihoodKind::cond_trunc, 20.0}), std::invalid_argument);
}

TEST_CASE("pinned fits hold the parameter") {
  const auto cases = simulate(300, 14);
  FitOptions fo;
  fo.pinned = std::make_pair(Param::q95, 15.0);
  const FitResult fit = mle_fit(cases, {LikelihoodKind::cond, 0.0}, {}, fo);
  CHECK(fit.display.q95_incubation == doctest::Approx(15.0).epsilon(1e-10));
  fo.pinned = std::make_pair(Param::median, 3.0);
  const FitResult fit2 = mle_fit(cases, {LikelihoodKind::cond, 0.0}, {}, fo);
  CHECK(fit2.display.median_incubation == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("profile interval endpoints solve the likelihood-ratio equation") {
  const auto cases = simulate(300, 15);
  const LikelihoodModel model{LikelihoodKind::cond, 0.0};
  const FitResult fit = mle_fit(cases, model);
  const double critical = 3.8414588206941254;
  CHECK(chi_squared_quantile(0.95, 1.0) == doctest::Approx(critical).epsilon(1e-10));
  for (Param p : {Param::doubling_time, Param::q95}) {
    const ConfidenceInterval ci = profile_ci(cases, fit, p);
    CHECK(ci.lo_bracketed);
    CHECK(ci.hi_bracketed);
    CHECK(ci.lo < param_value(fit.display, p));
    CHECK(ci.hi > param_value(fit.display, p));
    for (double end : {ci.lo, ci.hi}) {
      FitOptions fo;
      fo.pinned = std::make_pair(p, end);
      const FitResult pinned = mle_fit(cases, model, fit.display, fo);
      CHECK(std::abs(2.0 * (fit.log_lik - pinned.log_lik) - critical) <= 1e-3);
    }
  }
  const ConfidenceInterval zero = profile_ci(cases, fit, Param::median, 0.0);
  CHECK(zero.lo == fit.display.median_incubation);
  CHECK(zero.hi == fit.display.median_incubation);
}

TEST_CASE("unbracketed profile endpoints are reported one-sided") {
  // One-day exposure windows carry almost no information on growth.
  std::vector<CaseRecord> cases;
  for (int i = 0; i < 6; ++i) cases.push_back(make_case_record("c" + std::to_string(i), 20, 21, 24 + i % 3));
  const FitResult fit = mle_fit(cases, {LikelihoodKind::cond, 0.0});
  const ConfidenceInterval ci = profile_ci(cases, fit, Param::doubling_time);
  CHECK((!ci.hi_bracketed || !ci.lo_bracketed || !fit.converged));
}

TEST_CASE("bootstrap intervals") {
  const auto cases = simulate(150, 16);
  const LikelihoodModel model{LikelihoodKind::cond_zero_growth, 0.0};
  const FitResult fit = mle_fit(cases, model);
  BootstrapOptions bo;
  bo.resamples = 100;
  bo.seed = 4;
  const auto constant = bootstrap_ci(cases, fit, [](const FitResult&) { return 7.0; }, bo);
  CHECK(constant.ci.lo == 7.0);
  CHECK(constant.ci.hi == 7.0);

  const auto median = [](const FitResult& f) { return f.display.median_incubation; };
  const auto basic = bootstrap_ci(cases, fit, median, bo);
  CHECK(basic.replicates.size() == 100);
  CHECK(basic.ci.method == "bootstrap-basic");
  bo.interval = BootstrapInterval::percentile;
  const auto pct = bootstrap_ci(cases, fit, median, bo);
  // Basic and percentile intervals reflect each other around the estimate.
  CHECK(basic.ci.lo + pct.ci.hi == doctest::Approx(2.0 * basic.estimate));
  CHECK(basic.ci.hi + pct.ci.lo == doctest::Approx(2.0 * basic.estimate));

  // Same seed, same replicates regardless of thread count.
  bo.threads = 1;
  const auto serial = bootstrap_ci(cases, fit, median, bo);
  bo.threads = 4;
  const auto threaded = bootstrap_ci(cases, fit, median, bo);
  CHECK(serial.replicates == threaded.replicates);
}

TEST_CASE("bootstrap intervals widen as the sample shrinks") {
  const LikelihoodModel model{LikelihoodKind::cond_zero_growth, 0.0};
  int wider = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto full = simulate(160, 100 + trial);
    const std::vector<CaseRecord> half(full.begin(), full.begin() + 80);
    BootstrapOptions bo;
    bo.resamples = 100;
    bo.seed = trial;
    const auto median = [](const FitResult& f) { return f.display.median_incubation; };
    const auto wide = bootstrap_ci(half, mle_fit(half, model), median, bo).ci;
    const auto narrow = bootstrap_ci(full, mle_fit(full, model), median, bo).ci;
    wider += (wide.hi - wide.lo) > (narrow.hi - narrow.lo) ? 1 : 0;
  }
  CHECK(wider >= 18);
}

TEST_CASE("bias sweep layout") {
  auto cases = simulate(300, 17);
  const int from = 60, to = 66;
  std::vector<int> cutoffs;
  for (int d = from; d <= to; ++d) cutoffs.push_back(d);
  const auto rows = bias_sweep(cases, cutoffs);
  REQUIRE(rows.size() == cutoffs.size() * 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    CHECK(row.cutoff == cutoffs[i / 3]);
    std::size_t expect = 0;
    for (const auto& c : cases) {
      if (c.C_int > row.cutoff) continue;
      if (row.model == LikelihoodKind::cond_trunc && c.S_int > row.cutoff - 7) continue;
      ++expect;
    }
    CHECK(row.n_cases == expect);
    CHECK(row.flagged == (expect < 20));
    if (!row.flagged) CHECK(row.median > 0.0);
  }
  CHECK(rows[0].model == LikelihoodKind::cond_zero_growth);
  CHECK(rows[1].model == LikelihoodKind::cond);
  CHECK(rows[2].model == LikelihoodKind::cond_trunc);
}

TEST_CASE("bias ordering on growing-epidemic data") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto cases = simulate(400, 200 + seed);
    const FitResult r0 = mle_fit(cases, {LikelihoodKind::cond_zero_growth, 0.0});
    const FitResult growth = mle_fit(cases, {LikelihoodKind::cond, 0.0});
    CHECK(r0.display.median_incubation > growth.display.median_incubation);

    const double M = 58.0;
    std::vector<CaseRecord> early;
    for (const auto& c : cases) {
      if (c.S <= M) early.push_back(c);
    }
    const FitResult naive = mle_fit(early, {LikelihoodKind::cond, 0.0});
    const FitResult trunc = mle_fit(early, {LikelihoodKind::cond_trunc, M});
    CHECK(naive.display.q95_incubation < trunc.display.q95_incubation);
  }
}

TEST_CASE("Pearson statistic with pooling") {
  const std::vector<double> same{3, 6, 8, 10, 4, 2};
  const GofResult exact = pearson_chi2(same, same);
  CHECK(exact.chi2 == 0.0);
  CHECK(exact.p_value == doctest::Approx(1.0));
  // 3 is pooled with 6, and the trailing 4 with 2.
  CHECK(exact.bins.size() == 4);
  CHECK(exact.dof == 3);
  CHECK(exact.bins.front().expected == 9.0);
  CHECK(exact.bins.back().expected == 6.0);

  const std::vector<double> obs{10, 20, 30}, exp{20, 20, 20};
  const GofResult g = pearson_chi2(obs, exp);
  CHECK(g.chi2 == doctest::Approx(10.0));
  CHECK(g.p_value == doctest::Approx(std::exp(-5.0)));
  CHECK_THROWS_AS(pearson_chi2(std::vector<double>{1, 1}, std::vector<double>{6, 6}), std::invalid_argument);
}

TEST_CASE("goodness of fit on model data rarely rejects") {
  int rejected = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto cases = simulate(400, 300 + seed);
    rejected += gof_onset_marginal(cases, 0.30, 1.86, 0.33).p_value < 0.05 ? 1 : 0;
  }
  CHECK(rejected <= 2);

  std::vector<CaseRecord> few(10, make_case_record("w", 0, 54, 56));
  CHECK_THROWS_AS(gof_onset_marginal(few, 0.3, 1.86, 0.33), std::invalid_argument);
}

TEST_CASE("expected onset counts integrate the marginal per day") {
  const auto counts = expected_onset_counts(40, 60, 100.0, 0.3, 1.86, 0.33);
  CHECK(std::accumulate(counts.begin(), counts.end(), 0.0) == doctest::Approx(100.0));
  const double day45 = oracle::quad([](double s) { return marginal_s_density(s, 0.3, 1.86, 0.33); }, 44.0, 45.0);
  const double all = oracle::quad([](double s) { return marginal_s_density(s, 0.3, 1.86, 0.33); }, 39.0, 54.0) +
                     oracle::quad([](double s) { return marginal_s_density(s, 0.3, 1.86, 0.33); }, 54.0, 60.0);
  CHECK(counts[5] == doctest::Approx(100.0 * day45 / all).epsilon(1e-8));
}

TEST_CASE("fits serialise deterministically") {
  const auto cases = simulate(200, 18);
  FitOptions fo;
  fo.seed = 9;
  const auto a = dump(Json(mle_fit(cases, {LikelihoodKind::uncond, 0.0}, {}, fo)));
  const auto b = dump(Json(mle_fit(cases, {LikelihoodKind::uncond, 0.0}, {}, fo)));
  CHECK(a == b);
}
