#include "bets/json_io.hpp"

#include <cmath>

namespace bets {

namespace {

// nlohmann writes NaN and infinities as null already; this keeps the intent
// explicit where a field is expected to be infinite (no growth).
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

void to_json(Json& j, const ParamTheta& t) {
  j = Json{{"rho", number(t.rho)}, {"r", number(t.r)}, {"alpha", number(t.alpha)},
           {"beta", number(t.beta)}};
}

void to_json(Json& j, const DisplayTheta& d) {
  j = Json{{"doubling_time", number(d.doubling_time)},
           {"median_incubation", number(d.median_incubation)},
           {"q95_incubation", number(d.q95_incubation)},
           {"rho", number(d.rho)}};
}

void to_json(Json& j, const ConfidenceInterval& ci) {
  j = Json{{"lo", number(ci.lo)},
           {"hi", number(ci.hi)},
           {"level", ci.level},
           {"lo_bracketed", ci.lo_bracketed},
           {"hi_bracketed", ci.hi_bracketed},
           {"method", ci.method}};
}

void to_json(Json& j, const FitResult& fit) {
  j = Json::object();
  j["likelihood"] = to_string(fit.model.kind);
  if (fit.model.kind == LikelihoodKind::cond_trunc) j["truncation_day"] = fit.model.truncation;
  j["converged"] = fit.converged;
  j["n_cases"] = fit.n_cases;
  j["log_lik"] = number(fit.log_lik);
  j["theta"] = fit.theta_hat;
  j["display"] = fit.display;
  Json ci = Json::object();
  for (const auto& [name, interval] : fit.ci) ci[name] = interval;
  j["ci"] = ci;
  j["evaluations"] = fit.evaluations;
  j["clamped_terms"] = fit.clamped_terms;
  j["diagnostic"] = fit.diagnostic ? Json(*fit.diagnostic) : Json(nullptr);
}

void to_json(Json& j, const ExclusionReport& report) {
  Json excluded = Json::object();
  for (const auto& [rule, count] : report.excluded) excluded[rule] = count;
  j = Json{{"input", report.input},
           {"kept", report.kept},
           {"excluded", excluded},
           {"imputed_end", report.imputed_end},
           {"missing_symptom_fraction", number(report.missing_symptom_fraction)}};
}

void to_json(Json& j, const GenerativeParams& p) {
  j = Json::object();
  j["pi"] = p.pi;
  j["lambda_W"] = p.lambda_W;
  j["lambda_V"] = p.lambda_V;
  j["kappa"] = p.kappa;
  if (const auto* s = std::get_if<SingleGrowth>(&p.growth)) {
    j["growth"] = Json{{"kind", "single"}, {"r", s->r}};
  } else {
    const auto& t = std::get<TwoStageGrowth>(p.growth);
    j["growth"] = Json{{"kind", "two-stage"}, {"r1", t.r1}, {"r2", t.r2}, {"switch_day", t.switch_day}};
  }
  j["nu"] = p.nu;
  if (const auto* g = std::get_if<GammaIncubation>(&p.incubation)) {
    j["incubation"] = Json{{"kind", "gamma"}, {"alpha", g->alpha}, {"beta", g->beta}};
  } else {
    const auto& pmf = std::get<DiscreteIncubation>(p.incubation).pmf;
    j["incubation"] = Json{{"kind", "pmf"}, {"pmf", std::vector<double>(pmf.begin(), pmf.end())}};
  }
  j["L"] = p.L;
}

void to_json(Json& j, const GofResult& gof) {
  Json bins = Json::array();
  for (const auto& b : gof.bins) {
    bins.push_back(Json{{"first", b.first}, {"last", b.last}, {"observed", b.observed},
                        {"expected", b.expected}});
  }
  j = Json{{"chi2", number(gof.chi2)}, {"dof", gof.dof}, {"p_value", number(gof.p_value)},
           {"bins", bins}};
}

void to_json(Json& j, const SweepRow& row) {
  j = Json::object();
  j["cutoff"] = format_date(from_epoch(EpochDay{row.cutoff}));
  j["model"] = to_string(row.model);
  j["n_cases"] = row.n_cases;
  j["flagged"] = row.flagged;
  j["converged"] = row.converged;
  j["median"] = row.flagged ? Json(nullptr) : number(row.median);
  j["q95"] = row.flagged ? Json(nullptr) : number(row.q95);
  j["doubling_time"] = row.flagged ? Json(nullptr) : number(row.doubling_time);
  j["median_band"] = row.median_band ? Json(*row.median_band) : Json(nullptr);
  j["q95_band"] = row.q95_band ? Json(*row.q95_band) : Json(nullptr);
}

void to_json(Json& j, const PosteriorSummary& s) {
  j = Json{{"name", s.name}, {"mean", number(s.mean)}, {"lo", number(s.lo)}, {"hi", number(s.hi)}};
}

void to_json(Json& j, const ConvergenceReport& r) {
  j = Json{{"functional", r.functional}, {"rhat", number(r.rhat)}};
}

void to_json(Json& j, const MoveStats& m) {
  j = Json{{"move", m.move},
           {"proposed", m.proposed},
           {"accepted", m.accepted},
           {"rate", number(m.rate())},
           {"final_scale", number(m.final_scale)}};
}

void to_json(Json& j, const DiscreteConfig& c) {
  j = Json{{"L", c.L},
           {"L1", c.L1},
           {"L_chunyun", c.L_chunyun},
           {"max_incubation", c.max_incubation},
           {"growth", to_string(c.growth)},
           {"departure", to_string(c.departure)},
           {"mu", c.mu},
           {"strata", to_string(c.strata)},
           {"pi", c.pi}};
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace bets
