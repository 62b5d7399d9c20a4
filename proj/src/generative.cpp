#include "bets/generative.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace bets {

namespace {

// (exp(r x) - 1) / r with the r -> 0 limit.
double exprel(double r, double x) {
  if (std::abs(r) < 1e-12) return x;
  return std::expm1(r * x) / r;
}

// Inverse of exprel in x for a fixed rate.
double inverse_exprel(double r, double y) {
  if (std::abs(r) < 1e-12) return y;
  return std::log1p(r * y) / r;
}

}  // namespace

GrowthCurve::GrowthCurve(double kappa, std::variant<SingleGrowth, TwoStageGrowth> shape, double L)
    : kappa_(kappa), shape_(shape), L_(L) {}

double GrowthCurve::density(double t) const {
  if (t < 0.0 || t > L_) return 0.0;
  if (const auto* s = std::get_if<SingleGrowth>(&shape_)) return kappa_ * std::exp(s->r * t);
  const auto& two = std::get<TwoStageGrowth>(shape_);
  if (t <= two.switch_day) return kappa_ * std::exp(two.r1 * t);
  return kappa_ * std::exp(two.r1 * two.switch_day + two.r2 * (t - two.switch_day));
}

double GrowthCurve::cumulative(double t) const {
  t = std::clamp(t, 0.0, L_);
  if (const auto* s = std::get_if<SingleGrowth>(&shape_)) return kappa_ * exprel(s->r, t);
  const auto& two = std::get<TwoStageGrowth>(shape_);
  if (t <= two.switch_day) return kappa_ * exprel(two.r1, t);
  return kappa_ * (exprel(two.r1, two.switch_day) +
                   std::exp(two.r1 * two.switch_day) * exprel(two.r2, t - two.switch_day));
}

double GrowthCurve::inverse_cumulative(double mass) const {
  if (mass <= 0.0) return 0.0;
  const double y = mass / kappa_;
  if (const auto* s = std::get_if<SingleGrowth>(&shape_)) {
    return std::min(L_, inverse_exprel(s->r, y));
  }
  const auto& two = std::get<TwoStageGrowth>(shape_);
  const double first = exprel(two.r1, two.switch_day);
  if (y <= first) return inverse_exprel(two.r1, y);
  const double rest = (y - first) / std::exp(two.r1 * two.switch_day);
  return std::min(L_, two.switch_day + inverse_exprel(two.r2, rest));
}

void validate(const IncubationDist& dist) {
  if (const auto* g = std::get_if<GammaIncubation>(&dist)) {
    if (!(g->alpha > 0.0) || !(g->beta > 0.0)) {
      throw std::invalid_argument("gamma incubation requires alpha > 0 and beta > 0");
    }
    return;
  }
  const auto& pmf = std::get<DiscreteIncubation>(dist).pmf;
  if (pmf.size() == 0 || (pmf.array() < 0.0).any()) {
    throw std::invalid_argument("incubation pmf must be nonempty and nonnegative");
  }
  if (std::abs(pmf.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("incubation pmf must sum to 1");
  }
}

void GenerativeParams::validate() const {
  const auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  };
  prob(pi, "pi");
  prob(nu, "nu");
  if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be nonnegative");
  if (!(lambda_W >= 0.0) || L * lambda_W > 1.0 + 1e-12) {
    throw std::invalid_argument("lambda_W must lie in [0, 1/L]");
  }
  if (!(lambda_V >= 0.0) || L * lambda_V > 1.0 + 1e-12) {
    throw std::invalid_argument("lambda_V must lie in [0, 1/L]");
  }
  if (growth_curve().cumulative(L) > 1.0 + 1e-12) {
    throw std::invalid_argument("infection intensity integrates to more than 1 over [0, L]");
  }
  bets::validate(incubation);
}

GenerativeParams GenerativeParams::from_theta(double rho, double r, double alpha, double beta,
                                              double nu, double kappa_fraction) {
  GenerativeParams p;
  p.pi = 0.5;
  if (rho <= 1.0) {
    p.lambda_W = 1.0 / kHorizon;
    p.lambda_V = rho / kHorizon;
  } else {
    p.lambda_V = 1.0 / kHorizon;
    p.lambda_W = 1.0 / (rho * kHorizon);
  }
  p.growth = SingleGrowth{r};
  p.kappa = kappa_fraction / exprel(r, kHorizon);
  p.nu = nu;
  p.incubation = GammaIncubation{alpha, beta};
  p.validate();
  return p;
}

FullTuple sample_one(const GenerativeParams& params, const GrowthCurve& growth, Rng& rng) {
  const double L = params.L;
  FullTuple t;
  t.B = uniform01(rng) < 1.0 - params.pi ? 0.0 : L * (1.0 - uniform01(rng));

  const double lambda = t.B == 0.0 ? params.lambda_W : params.lambda_V;
  if (uniform01(rng) < lambda * (L - t.B)) t.E = t.B + (L - t.B) * uniform01(rng);

  const double upper = std::min(t.E, L);
  const double base = growth.cumulative(t.B);
  const double mass = growth.cumulative(upper) - base;
  if (uniform01(rng) < mass) {
    t.T = std::clamp(growth.inverse_cumulative(base + uniform01(rng) * mass), t.B, upper);
  }
  if (std::isinf(t.T) || uniform01(rng) >= params.nu) return t;

  if (const auto* g = std::get_if<GammaIncubation>(&params.incubation)) {
    t.S = t.T + std::gamma_distribution<double>(g->alpha, 1.0 / g->beta)(rng);
  } else {
    const auto& pmf = std::get<DiscreteIncubation>(params.incubation).pmf;
    std::discrete_distribution<int> pick(pmf.data(), pmf.data() + pmf.size());
    t.S = t.T + pick(rng);
  }
  return t;
}

std::vector<FullTuple> sample_population(std::size_t n, const GenerativeParams& params, Rng& rng) {
  params.validate();
  const GrowthCurve growth = params.growth_curve();
  std::vector<FullTuple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(params, growth, rng));
  return out;
}

bool in_selection(const FullTuple& t, double L) {
  return t.B <= t.T && t.T <= t.E && t.E <= L && t.T <= t.S && std::isfinite(t.S);
}

DiscreteTuple discretize(const FullTuple& t) {
  const auto ceil_day = [](double x) {
    return std::isinf(x) ? EpochDay::kInfinite : static_cast<int>(std::ceil(x));
  };
  return {ceil_day(t.B), ceil_day(t.E), ceil_day(t.T), ceil_day(t.S)};
}

ExportedSample sample_exported(std::size_t m, const GenerativeParams& params, Rng& rng) {
  params.validate();
  ExportedSample out;
  if (m == 0) return out;
  const GrowthCurve growth = params.growth_curve();
  constexpr std::size_t kMaxDraws = 1'000'000'000;
  out.cases.reserve(m);
  out.tuples.reserve(m);
  while (out.cases.size() < m) {
    if (out.draws >= kMaxDraws) throw std::runtime_error("selection probability too small");
    ++out.draws;
    const FullTuple t = sample_one(params, growth, rng);
    if (!in_selection(t, params.L)) continue;
    const DiscreteTuple d = discretize(t);
    char id[32];
    std::snprintf(id, sizeof id, "sim-%06zu", out.cases.size() + 1);
    CaseRecord rec = make_case_record(id, d.B, d.E, d.S);
    rec.C_int = d.S;
    rec.location = "simulated";
    out.cases.push_back(std::move(rec));
    out.tuples.push_back(t);
  }
  out.acceptance_rate = static_cast<double>(m) / static_cast<double>(out.draws);
  return out;
}

}  // namespace bets
