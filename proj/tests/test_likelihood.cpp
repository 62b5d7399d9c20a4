#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bets/generative.hpp"
#include "bets/likelihood.hpp"
#include "bets/special.hpp"
#include "oracles.hpp"

using namespace bets;

namespace {

std::vector<CaseRecord> sample_cases(std::size_t n, std::uint64_t seed) {
  Rng rng = split_stream(seed, 0);
  return sample_exported(n, GenerativeParams::from_theta(0.45, 0.30, 1.86, 0.33), rng).cases;
}

}  // namespace

TEST_CASE("quantiles_to_shape_rate round trips") {
  const double median = boost::math::gamma_p_inv(1.86, 0.5) / 0.33;
  const double q95 = boost::math::gamma_p_inv(1.86, 0.95) / 0.33;
  const ShapeRate sr = quantiles_to_shape_rate(median, q95);
  CHECK(sr.alpha == doctest::Approx(1.86).epsilon(1e-6));
  CHECK(sr.beta == doctest::Approx(0.33).epsilon(1e-6));

  const ShapeRate t3 = quantiles_to_shape_rate(4.5, 13.4);
  CHECK(std::abs(oracle::gamma_cdf(t3.alpha, t3.beta, 4.5) - 0.5) <= 1e-9);
  CHECK(std::abs(oracle::gamma_cdf(t3.alpha, t3.beta, 13.4) - 0.95) <= 1e-9);

  CHECK_THROWS_AS(quantiles_to_shape_rate(5.0, 5.0), std::domain_error);
  CHECK_THROWS_AS(quantiles_to_shape_rate(-1.0, 5.0), std::domain_error);
  // A ratio beyond what shape 1e-3 can produce.
  CHECK_THROWS_AS(quantiles_to_shape_rate(1e-300, 5.0), std::domain_error);
}

TEST_CASE("display transform is a bijection") {
  const ParamTheta theta{0.45, 0.3, 1.86, 0.33};
  const DisplayTheta d = to_display(theta);
  CHECK(d.doubling_time == doctest::Approx(std::numbers::ln2 / 0.3));
  const ParamTheta back = from_display(d);
  CHECK(back.r == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(back.alpha == doctest::Approx(1.86).epsilon(1e-8));
  CHECK(back.beta == doctest::Approx(0.33).epsilon(1e-8));
  CHECK(back.rho == 0.45);
}

TEST_CASE("gamma_exp_integral") {
  CHECK(gamma_exp_integral(5.0, 5.0, 9.0, 0.3, 1.86, 0.33) == 0.0);
  CHECK(gamma_exp_integral(5.0, 4.0, 9.0, 0.3, 1.86, 0.33) == 0.0);
  const double r0 = gamma_exp_integral(2.0, 6.0, 9.0, 0.0, 1.86, 0.33);
  CHECK(r0 == doctest::Approx(oracle::gamma_cdf(1.86, 0.33, 7.0) - oracle::gamma_cdf(1.86, 0.33, 3.0)).epsilon(1e-13));

  std::mt19937_64 rng(21);
  for (int i = 0; i < 60; ++i) {
    const auto c = oracle::random_config(rng);
    const double b = c.B_int, e = c.E_int + 0.5, s = c.S_int + 0.25;
    const double want = oracle::growth_incubation_integral(b, e, s, c.r, c.alpha, c.beta);
    CHECK(oracle::rel_err(gamma_exp_integral(b, e, s, c.r, c.alpha, c.beta), want) <= 1e-10);
  }
}

TEST_CASE("selection probability given (b, e)") {
  const GrowthCurve g(0.01, SingleGrowth{0.3});
  CHECK(selection_prob_given_be(10.0, 10.0, g) == 0.0);
  CHECK(selection_prob_given_be(10.0, 20.0, g) ==
        doctest::Approx(0.01 / 0.3 * (std::exp(6.0) - std::exp(3.0))).epsilon(1e-13));
  const GrowthCurve flat(0.01, SingleGrowth{1e-14});
  CHECK(selection_prob_given_be(10.0, 20.0, flat) == doctest::Approx(0.1).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const double b = 54.0 * u(rng), e = b + (54.0 - b) * u(rng), r = 0.05 + 0.5 * u(rng), k = u(rng);
    const GrowthCurve gc(k, SingleGrowth{r});
    const double want = oracle::quad([&](double t) { return k * std::exp(r * t); }, b, e);
    CHECK(oracle::rel_err(selection_prob_given_be(b, e, gc), want) <= 1e-12);
  }
}

TEST_CASE("selection probability closed form") {
  const double L = kHorizon, r = std::numbers::ln2 / 4.0;
  CHECK(r * L == doctest::Approx(9.357).epsilon(1e-3));
  const auto p = selection_prob_total(0.0, 1.0 / L, 0.5 / L, 1e-6, 1.0, r);
  CHECK(std::abs(p.approx / p.exact - 1.0) <= 0.02);
  const oracle::Travel tr{0.0, 1.0 / L, 0.5 / L};
  CHECK(oracle::rel_err(p.exact, 1e-6 * oracle::selection_exact(tr, r, L)) <= 1e-9);
  CHECK(oracle::rel_err(p.approx, 1e-6 * oracle::selection_approx(tr, r, L)) <= 1e-12);

  const auto q = selection_prob_total(0.4, 1.0 / L, 0.5 / L, 1e-6, 0.7, 0.3);
  const auto q2 = selection_prob_total(0.4, 1.0 / L, 0.5 / L, 2e-6, 0.7, 0.3);
  CHECK(q2.approx == doctest::Approx(2.0 * q.approx).epsilon(1e-14));
  CHECK(q2.exact == doctest::Approx(2.0 * q.exact).epsilon(1e-12));
}

TEST_CASE("per-case terms match quadrature of their defining integrals") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 40; ++i) {
    const auto cfg = oracle::random_config(rng);
    const CaseRecord c = make_case_record("q", cfg.B_int, cfg.E_int, cfg.S_int);
    const double cond = cond_case_term(c, cfg.r, cfg.alpha, cfg.beta);
    CHECK(oracle::rel_err(cond, oracle::cond_term(c.B, c.E, c.S, cfg.r, cfg.alpha, cfg.beta)) <= 1e-8);

    const double rho = 0.1 + 1.5 * std::uniform_real_distribution<double>(0, 1)(rng);
    const auto tr = oracle::Travel::from_rho(rho, kHorizon);
    const double uncond = uncond_case_term(c, rho, cfg.r, cfg.alpha, cfg.beta);
    const double want = oracle::uncond_term(c.B, c.E, c.S, c.wuhan_resident(), tr, cfg.r, cfg.alpha, cfg.beta,
                                            oracle::selection_approx(tr, cfg.r, kHorizon));
    CHECK(oracle::rel_err(uncond, want) <= 1e-8);

    const double M = c.S + std::uniform_int_distribution<int>(0, 10)(rng);
    const double trunc = cond_trunc_case_term(c, cfg.r, cfg.alpha, cfg.beta, M);
    CHECK(oracle::rel_err(trunc, oracle::cond_trunc_term(c.B, c.E, c.S, M, cfg.r, cfg.alpha, cfg.beta)) <= 1e-8);
  }
}

TEST_CASE("unconditional term against the exact selection probability") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const auto cfg = oracle::random_config(rng);
    const double r = std::max(cfg.r, 0.2);  // rL >= 10.8
    const CaseRecord c = make_case_record("q", cfg.B_int, cfg.E_int, cfg.S_int);
    const auto tr = oracle::Travel::from_rho(0.45, kHorizon);
    const double want = oracle::uncond_term(c.B, c.E, c.S, c.wuhan_resident(), tr, r, cfg.alpha, cfg.beta,
                                            oracle::selection_exact(tr, r, kHorizon));
    CHECK(oracle::rel_err(uncond_case_term(c, 0.45, r, cfg.alpha, cfg.beta), want) <= 0.02);
  }
}

TEST_CASE("conditional likelihood at r = 0, one case") {
  const CaseRecord c = make_case_record("one", 10, 20, 25);
  const double want = std::log((oracle::gamma_cdf(2.0, 0.4, c.S - c.B) - oracle::gamma_cdf(2.0, 0.4, c.S - c.E)) /
                               (c.E - c.B));
  const std::vector<CaseRecord> v{c};
  CHECK(log_lik_cond(v, 0.0, 2.0, 0.4) == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("log-likelihoods are continuous across r = 0") {
  const auto cases = sample_cases(200, 1);
  const double at0 = log_lik_cond(cases, 0.0, 1.86, 0.33);
  const double near = log_lik_cond(cases, 1e-6, 1.86, 0.33);
  // d/dr of each log term is a difference of two means of t over [0, L].
  CHECK(std::abs(near - at0) / cases.size() <= 1e-6 * kHorizon);
  for (const auto& c : std::span(cases).first(30)) {
    CHECK(oracle::rel_err(cond_case_term(c, 1e-6, 1.86, 0.33), cond_case_term(c, 0.0, 1.86, 0.33)) <= 1e-4);
    CHECK(std::abs(std::log(cond_case_term(c, 1e-9, 1.86, 0.33)) - std::log(cond_case_term(c, 0.0, 1.86, 0.33))) <= 1e-8);
    const double M = c.S + 3.0;
    CHECK(std::abs(std::log(cond_trunc_case_term(c, 1e-9, 1.86, 0.33, M)) -
                   std::log(cond_trunc_case_term(c, 0.0, 1.86, 0.33, M))) <= 1e-8);
    CHECK(oracle::rel_err(cond_trunc_case_term(c, 1e-6, 1.86, 0.33, M), cond_trunc_case_term(c, 0.0, 1.86, 0.33, M)) <= 1e-4);
  }
}

TEST_CASE("unconditional minus conditional depends on residency counts and r only") {
  const auto cases = sample_cases(300, 2);
  const double r = 0.3, a = 1.86, b = 0.33, rho = 0.45, L = kHorizon;
  std::size_t residents = 0;
  for (const auto& c : cases) residents += c.wuhan_resident() ? 1 : 0;
  const double visitors = cases.size() - residents;
  // The incubation factor cancels; what remains involves only B, E, r and
  // the residency indicator.
  double identity = 0.0;
  for (const auto& c : cases) {
    identity += 2.0 * std::log(r) - std::log1p(rho * (1.0 - 2.0 / (r * L))) + r * (c.B - L) +
                std::log(std::expm1(r * (c.E - c.B)) / r);
  }
  identity += visitors * std::log(rho / L);
  const double diff = log_lik_uncond(cases, rho, r, a, b) - log_lik_cond(cases, r, a, b);
  CHECK(diff == doctest::Approx(identity).epsilon(1e-12));
  // The identity has no alpha or beta in it.
  CHECK(log_lik_uncond(cases, rho, r, 3.0, 0.5) - log_lik_cond(cases, r, 3.0, 0.5) ==
        doctest::Approx(identity).epsilon(1e-12));
}

TEST_CASE("rho profile when every case is a visitor") {
  std::vector<CaseRecord> cases;
  for (int i = 0; i < 40; ++i) cases.push_back(make_case_record("v" + std::to_string(i), 10 + i % 30, 40 + i % 14, 45 + i % 17));
  const double r = 0.3, L = kHorizon;
  const double base = log_lik_uncond(cases, 1.0, r, 1.86, 0.33);
  for (double rho : {0.1, 0.5, 2.0, 10.0}) {
    const double reduced = cases.size() * (std::log((rho / L) / (1.0 + rho * (1.0 - 2.0 / (r * L)))) -
                                           std::log((1.0 / L) / (1.0 + (1.0 - 2.0 / (r * L)))));
    CHECK(log_lik_uncond(cases, rho, r, 1.86, 0.33) - base == doctest::Approx(reduced).epsilon(1e-12));
  }
  // n log[(rho/L) / (1 + rho c)] increases without bound in rho: the
  // maximiser is the boundary.
  CHECK(log_lik_uncond(cases, 1e4, r, 1.86, 0.33) > log_lik_uncond(cases, 1e2, r, 1.86, 0.33));
}

TEST_CASE("unconditional likelihood domain") {
  const auto cases = sample_cases(20, 3);
  CHECK_THROWS_AS(log_lik_uncond(cases, 0.45, 5.0 / kHorizon, 1.86, 0.33), std::domain_error);
  CHECK_NOTHROW(log_lik_uncond(cases, 0.45, 5.0 / kHorizon + 1e-6, 1.86, 0.33));
  CHECK_THROWS_AS(log_lik_cond(cases, 0.3, -1.0, 0.33), std::domain_error);
}

TEST_CASE("error and clamp diagnostics name the case") {
  std::vector<CaseRecord> cases{make_case_record("ok", 10, 20, 25), make_case_record("far", 10, 20, 2000)};
  LikelihoodDiagnostics diag;
  const double v = log_lik_cond(cases, 0.3, 1.86, 0.33, &diag);
  CHECK(std::isfinite(v));
  CHECK(diag.clamped == 1);
  try {
    log_lik_cond_trunc(cases, 0.3, 1.86, 0.33, 100.0);
    FAIL("expected a precondition error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("far") != std::string::npos);
  }
}

TEST_CASE("truncated likelihood reduces to the conditional one") {
  const auto cases = sample_cases(100, 4);
  for (double r : {0.0, 0.3}) {
    for (const auto& c : cases) {
      CHECK(std::abs(std::log(cond_trunc_case_term(c, r, 1.86, 0.33, 1e4)) -
                     std::log(cond_case_term(c, r, 1.86, 0.33))) <= 1e-10);
    }
  }
  const double full = log_lik_cond(cases, 0.3, 1.86, 0.33);
  double prev = INFINITY;
  for (double M : {80.0, 100.0, 150.0, 300.0}) {
    const double gap = std::abs(log_lik_cond_trunc(cases, 0.3, 1.86, 0.33, M) - full);
    CHECK(gap <= prev);
    prev = gap;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("Z_r and the truncation normaliser") {
  CHECK(truncation_z(0.0, 0.3, 1.86, 0.33) == 0.0);
  CHECK(truncation_z(0.0, 0.0, 1.86, 0.33) == 0.0);
  std::mt19937_64 rng(17);
  for (int i = 0; i < 40; ++i) {
    const auto cfg = oracle::random_config(rng);
    const double b = std::max(0.0, cfg.B_int - 0.75), e = cfg.E_int - 0.25;
    const double M = e + std::uniform_real_distribution<double>(-5.0, 20.0)(rng);
    if (M <= b) continue;
    for (double r : {0.0, cfg.r}) {
      const double got = truncation_normalizer(b, e, M, r, cfg.alpha, cfg.beta);
      // Z_r is defined so that r exp(rM) times it is the integral.
      const double scale = r == 0.0 ? 1.0 : std::exp(r * M) / r;
      // H(M - t) ~ (M - t)^alpha at the upper end: tanh-sinh copes with that.
      const double want = oracle::quad_ts([&](double t) {
        return std::exp(r * t) * oracle::gamma_cdf(cfg.alpha, cfg.beta, M - t);
      }, b, std::min(e, M)) / scale;
      CHECK(oracle::rel_err(got, want) <= 1e-8);
    }
  }
}

TEST_CASE("marginal of T") {
  const double r = 0.3, L = kHorizon;
  CHECK(marginal_t_density(L, r) == 0.0);
  const double mode = L - 1.0 / r;
  CHECK(marginal_t_density(mode, r) > marginal_t_density(mode - 1e-3, r));
  CHECK(marginal_t_density(mode, r) > marginal_t_density(mode + 1e-3, r));
  const double total = oracle::quad([&](double t) { return marginal_t_density_normalized(t, r); }, 0.0, L);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("marginal of S") {
  const double r = 0.3, a = 1.86, b = 0.33, L = kHorizon;
  CHECK(marginal_s_condition_holds(r, a, b));
  CHECK_FALSE(marginal_s_condition_holds(0.0, 10.0, 0.2));
  for (double s = L / 2; s <= L; s += 1.5) {
    const double simplified = std::exp(r * s) * (L + a / (b + r) - s);
    CHECK(oracle::rel_err(marginal_s_density(s, r, a, b), simplified) <= 1e-12);
  }
  // Beyond L the density is the convolution of the T marginal with the
  // incubation density, up to the same constant.
  const auto conv = [&](double s) {
    return oracle::quad([&](double t) {
      return std::exp(r * t) * (L - t) * oracle::gamma_pdf(a, b, s - t) / std::pow(b / (b + r), a);
    }, 0.0, std::min(s, L), 1e-13);
  };
  for (double s : {56.0, 60.0, 70.0}) {
    // Lower limit of the t integral is replaced by -infinity in the closed
    // form; with s >= L/2 the difference is below 1%.
    CHECK(oracle::rel_err(marginal_s_density(s, r, a, b), conv(s)) <= 0.01);
  }
}

TEST_CASE("growth bias correction") {
  CHECK(growth_bias_correction(1.86, 0.33, 0.30, 14.0) == doctest::Approx(1.0 / (1.86 / 0.63 + 7.0)).epsilon(1e-15));
  CHECK(growth_bias_correction(1.86, 0.33, 0.30, 1e12) < 1e-11);
  const double fixed = corrected_growth_fixed_point(0.11, 1.86, 0.33, 14.0);
  CHECK(fixed == doctest::Approx(0.11 + growth_bias_correction(1.86, 0.33, fixed, 14.0)).epsilon(1e-7));
  CHECK_THROWS_AS(growth_bias_correction(1.86, 0.33, 0.30, 0.0), std::domain_error);
}
