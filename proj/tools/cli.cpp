#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "bets/bayes.hpp"
#include "bets/generative.hpp"
#include "bets/inference.hpp"
#include "bets/json_io.hpp"
#include "bets/likelihood.hpp"
#include "bets/rank_tests.hpp"
#include "bets/timeline.hpp"

namespace bets::cli {

namespace fs = std::filesystem;

struct IngestSettings {
  std::string in, out, delimiter = ",", location, format = "json";
  bool no_impute_end = false, keep_late_arrivals = false, keep_outside_exposure = false;
};

struct SimulateSettings {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  double rho = 0.45, r = 0.30, alpha = 1.86, beta = 0.33, nu = 1.0, kappa_fraction = 0.9;
  std::string out, format = "json";
};

struct CohortSelection {
  std::string in, location, confirmed_by;
};

struct FitSettings {
  CohortSelection cohort;
  std::string likelihood = "cond", truncation_date;
  double init_doubling = 4.0, init_median = 5.0, init_q95 = 12.0, init_rho = 0.5;
  int restarts = 3;
  std::uint64_t seed = 1;
  std::string out, format = "json";
};

struct CiSettings {
  CohortSelection cohort;
  std::string likelihood = "cond", truncation_date, method = "profile", param = "all";
  std::string interval = "basic";
  double level = 0.95;
  std::size_t resamples = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out, format = "json";
};

struct BiasSettings {
  std::string in, from = "2020-01-23", to = "2020-02-18";
  int offset = 7;
  std::size_t min_cases = 20, bootstrap = 0;
  double level = 0.95;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out, format = "json";
};

struct GofSettings {
  CohortSelection cohort;
  std::optional<double> r, alpha, beta;
  std::string out, format = "json";
};

struct McmcSettings {
  CohortSelection cohort;
  int steps = 80000, chains = 8, thin = 10;
  double mu = 1.0;
  std::string growth = "single", departure = "uniform", strata = "none";
  std::uint64_t seed = 1;
  unsigned threads = 0;
  bool prior_only = false;
  std::string out, format = "json";
};

struct PlotSettings {
  std::string kind, in;
  std::optional<double> r, alpha, beta;
  std::string strata = "gender";
  double bandwidth = 1.0, level = 0.95;
  std::string out, format = "json";
};

struct Settings {
  IngestSettings ingest;
  SimulateSettings simulate;
  FitSettings fit;
  CiSettings ci;
  BiasSettings bias;
  GofSettings gof;
  McmcSettings mcmc;
  PlotSettings plot;
};

namespace {

const char* const kVersion = BETS_VERSION;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyCohortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- option registration -------------------------------------------------

void add_format(CLI::App* sub, std::string& format) {
  sub->add_option("--format", format, "stdout rendering: json, csv or table")
      ->check(CLI::IsMember({"json", "csv", "table"}))
      ->capture_default_str();
}

void add_out(CLI::App* sub, std::string& out) {
  sub->add_option("--out", out, "output directory (default: $BETS_OUT_DIR or .)");
}

void add_cohort(CLI::App* sub, CohortSelection& c) {
  sub->add_option("--in", c.in, "cohort CSV written by `ingest` or `simulate`")->required();
  sub->add_option("--location", c.location, "keep only cases from this location");
  sub->add_option("--confirmed-by", c.confirmed_by, "keep cases confirmed on or before this date");
}

void register_all(CLI::App& app, Settings& s) {
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Build the analysis cohort from a raw case table");
  ingest->add_option("--in", s.ingest.in, "raw case table")->required();
  add_out(ingest, s.ingest.out);
  ingest->add_option("--delimiter", s.ingest.delimiter, "field separator: ',' or 'tab'")
      ->capture_default_str();
  ingest->add_option("--location", s.ingest.location, "keep only cases from this location");
  ingest->add_flag("--no-impute-end", s.ingest.no_impute_end,
                   "drop cases without an end of exposure instead of imputing it");
  ingest->add_flag("--keep-late-arrivals", s.ingest.keep_late_arrivals,
                   "keep cases that arrived after the quarantine began");
  ingest->add_flag("--keep-outside-exposure", s.ingest.keep_outside_exposure,
                   "keep cases with possible exposure outside Wuhan");
  add_format(ingest, s.ingest.format);

  auto* sim = app.add_subcommand("simulate", "Simulate exported cases");
  sim->add_option("--n", s.simulate.n, "number of exported cases")->capture_default_str();
  sim->add_option("--seed", s.simulate.seed, "random seed")->capture_default_str();
  sim->add_option("--rho", s.simulate.rho, "travel mix parameter")->capture_default_str();
  sim->add_option("--r", s.simulate.r, "epidemic growth rate per day")->capture_default_str();
  sim->add_option("--alpha", s.simulate.alpha, "incubation Gamma shape")->capture_default_str();
  sim->add_option("--beta", s.simulate.beta, "incubation Gamma rate")->capture_default_str();
  sim->add_option("--nu", s.simulate.nu, "symptomatic fraction")->capture_default_str();
  sim->add_option("--kappa-fraction", s.simulate.kappa_fraction,
                  "infection mass as a fraction of its admissible maximum")
      ->capture_default_str();
  add_out(sim, s.simulate.out);
  add_format(sim, s.simulate.format);

  const auto add_likelihood = [](CLI::App* sub, std::string& kind, std::string& trunc) {
    sub->add_option("--likelihood", kind, "cond, cond_r0, uncond or cond_trunc")
        ->check(CLI::IsMember({"cond", "cond_r0", "uncond", "cond_trunc"}))
        ->capture_default_str();
    sub->add_option("--truncation-date", trunc, "truncation date M for cond_trunc");
  };

  auto* fit = app.add_subcommand("fit", "Maximum likelihood fit");
  add_cohort(fit, s.fit.cohort);
  add_likelihood(fit, s.fit.likelihood, s.fit.truncation_date);
  fit->add_option("--init-doubling", s.fit.init_doubling, "initial doubling time")->capture_default_str();
  fit->add_option("--init-median", s.fit.init_median, "initial median incubation")->capture_default_str();
  fit->add_option("--init-q95", s.fit.init_q95, "initial 95% incubation quantile")->capture_default_str();
  fit->add_option("--init-rho", s.fit.init_rho, "initial rho")->capture_default_str();
  fit->add_option("--restarts", s.fit.restarts, "jittered optimiser starts")->capture_default_str();
  fit->add_option("--seed", s.fit.seed, "seed for restart jitter")->capture_default_str();
  add_out(fit, s.fit.out);
  add_format(fit, s.fit.format);

  auto* ci = app.add_subcommand("ci", "Confidence intervals (profile likelihood or bootstrap)");
  add_cohort(ci, s.ci.cohort);
  add_likelihood(ci, s.ci.likelihood, s.ci.truncation_date);
  ci->add_option("--method", s.ci.method, "profile or bootstrap")
      ->check(CLI::IsMember({"profile", "bootstrap"}))
      ->capture_default_str();
  ci->add_option("--param", s.ci.param, "doubling_time, median, q95, rho or all")
      ->check(CLI::IsMember({"all", "doubling_time", "median", "q95", "rho"}))
      ->capture_default_str();
  ci->add_option("--level", s.ci.level, "confidence level")->capture_default_str();
  ci->add_option("--resamples", s.ci.resamples, "bootstrap resamples")->capture_default_str();
  ci->add_option("--interval", s.ci.interval, "bootstrap interval: basic or percentile")
      ->check(CLI::IsMember({"basic", "percentile"}))
      ->capture_default_str();
  ci->add_option("--seed", s.ci.seed, "bootstrap seed")->capture_default_str();
  ci->add_option("--threads", s.ci.threads, "worker threads (0: all cores)")->capture_default_str();
  add_out(ci, s.ci.out);
  add_format(ci, s.ci.format);

  auto* bias = app.add_subcommand("bias-demo", "Retrospective sweep over confirmation cutoffs");
  bias->add_option("--in", s.bias.in, "cohort CSV")->required();
  bias->add_option("--from", s.bias.from, "first cutoff date")->capture_default_str();
  bias->add_option("--to", s.bias.to, "last cutoff date (inclusive)")->capture_default_str();
  bias->add_option("--offset", s.bias.offset, "days between cutoff and truncation day M")
      ->capture_default_str();
  bias->add_option("--min-cases", s.bias.min_cases, "fewer cases flag the row")->capture_default_str();
  bias->add_option("--bootstrap", s.bias.bootstrap, "bootstrap resamples for bands (0: none)")
      ->capture_default_str();
  bias->add_option("--level", s.bias.level, "band level")->capture_default_str();
  bias->add_option("--seed", s.bias.seed, "bootstrap seed")->capture_default_str();
  bias->add_option("--threads", s.bias.threads, "worker threads (0: all cores)")->capture_default_str();
  add_out(bias, s.bias.out);
  add_format(bias, s.bias.format);

  auto* gof = app.add_subcommand("gof", "Goodness of fit of the onset marginal (Wuhan residents)");
  add_cohort(gof, s.gof.cohort);
  gof->add_option("--r", s.gof.r, "growth rate (default: conditional MLE)");
  gof->add_option("--alpha", s.gof.alpha, "incubation shape (default: conditional MLE)");
  gof->add_option("--beta", s.gof.beta, "incubation rate (default: conditional MLE)");
  add_out(gof, s.gof.out);
  add_format(gof, s.gof.format);

  auto* mcmc = app.add_subcommand("mcmc", "Bayesian nonparametric fit by random-walk Metropolis");
  add_cohort(mcmc, s.mcmc.cohort);
  mcmc->add_option("--steps", s.mcmc.steps, "iterations per chain")->capture_default_str();
  mcmc->add_option("--chains", s.mcmc.chains, "parallel chains")->capture_default_str();
  mcmc->add_option("--mu", s.mcmc.mu, "prior concentration")->capture_default_str();
  mcmc->add_option("--growth", s.mcmc.growth, "single or two-stage")
      ->check(CLI::IsMember({"single", "two-stage"}))
      ->capture_default_str();
  mcmc->add_option("--departure", s.mcmc.departure, "uniform or geometric")
      ->check(CLI::IsMember({"uniform", "geometric"}))
      ->capture_default_str();
  mcmc->add_option("--strata", s.mcmc.strata, "none, gender or age50")
      ->check(CLI::IsMember({"none", "gender", "age50"}))
      ->capture_default_str();
  mcmc->add_option("--seed", s.mcmc.seed, "random seed")->capture_default_str();
  mcmc->add_option("--thin", s.mcmc.thin, "keep every n-th draw")->capture_default_str();
  mcmc->add_option("--threads", s.mcmc.threads, "worker threads (0: all cores)")->capture_default_str();
  mcmc->add_flag("--prior-only", s.mcmc.prior_only, "sample the prior (likelihood off)");
  add_out(mcmc, s.mcmc.out);
  add_format(mcmc, s.mcmc.format);

  auto* plot = app.add_subcommand("plot-data", "Long-format CSV for plotting");
  plot->add_option("--kind", s.plot.kind, "onset, sweep, posterior-pmf or kde")
      ->check(CLI::IsMember({"onset", "sweep", "posterior-pmf", "kde"}))
      ->required();
  plot->add_option("--in", s.plot.in,
                   "cohort CSV (onset, kde), sweep.json (sweep) or mcmc_draws.csv (posterior-pmf)")
      ->required();
  plot->add_option("--r", s.plot.r, "growth rate for onset (default: conditional MLE)");
  plot->add_option("--alpha", s.plot.alpha, "incubation shape for onset");
  plot->add_option("--beta", s.plot.beta, "incubation rate for onset");
  plot->add_option("--strata", s.plot.strata, "kde strata: gender or age50")
      ->check(CLI::IsMember({"gender", "age50"}))
      ->capture_default_str();
  plot->add_option("--bandwidth", s.plot.bandwidth, "Gaussian kernel bandwidth in days")
      ->capture_default_str();
  plot->add_option("--level", s.plot.level, "credible level for posterior-pmf")->capture_default_str();
  add_out(plot, s.plot.out);
  add_format(plot, s.plot.format);
}

// ---- helpers ---------------------------------------------------------------

std::string fmt(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "NA" : (v > 0 ? "Inf" : "-Inf");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fixed(double v, int digits = 3) {
  if (!std::isfinite(v)) return fmt(v);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("BETS_OUT_DIR"); env && *env) return env;
  return ".";
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    if (!f) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Date parse_date_flag(const std::string& flag, const std::string& text) {
  const auto d = parse_date(text);
  if (!d) throw UsageError("--" + flag + ": cannot parse date '" + text + "'");
  return *d;
}

std::vector<CaseRecord> load_cohort(const CohortSelection& sel) {
  std::ifstream f(sel.in);
  if (!f) throw UsageError("cannot open input file " + sel.in);
  std::vector<CaseRecord> cases;
  try {
    cases = read_cohort_csv(f);
  } catch (const TableParseError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(sel.in + ": " + e.what());
  }
  std::optional<int> cutoff;
  if (!sel.confirmed_by.empty()) {
    cutoff = to_epoch(parse_date_flag("confirmed-by", sel.confirmed_by)).value;
  }
  std::vector<CaseRecord> kept;
  for (auto& c : cases) {
    if (!sel.location.empty() && c.location != sel.location) continue;
    if (cutoff && c.C_int > *cutoff) continue;
    kept.push_back(std::move(c));
  }
  if (kept.empty()) throw EmptyCohortError("no cases left in the cohort");
  return kept;
}

// Every JSON artefact records the version, the seed and all flag values.
Json provenance(const CLI::App* sub, std::optional<std::uint64_t> seed) {
  Json flags = Json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help") continue;
    const std::string& name = names.front();
    if (opt->get_type_size() == 0) {
      flags[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      flags[name] = res.size() == 1 ? Json(res.front()) : Json(res);
    } else if (!opt->get_default_str().empty()) {
      flags[name] = opt->get_default_str();
    } else {
      flags[name] = nullptr;
    }
  }
  return Json{{"version", kVersion},
              {"command", sub->get_name()},
              {"seed", seed ? Json(*seed) : Json(nullptr)},
              {"flags", flags}};
}

void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << "  ";
      out << cells[i];
      if (i + 1 < cells.size()) out << std::string(width[i] - cells[i].size(), ' ');
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

void print_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string csv_text(const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream s;
  print_csv(s, header, rows);
  return s.str();
}

void emit(std::ostream& out, const std::string& format, const Json& j,
          const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  if (format == "json") out << dump(j);
  else if (format == "csv") print_csv(out, header, rows);
  else print_table(out, header, rows);
}

LikelihoodModel likelihood_from_flags(const std::string& kind, const std::string& truncation) {
  const auto k = parse_likelihood_kind(kind);
  if (!k) throw UsageError("unknown likelihood " + kind);
  LikelihoodModel model{*k, 0.0};
  if (*k == LikelihoodKind::cond_trunc) {
    if (truncation.empty()) throw UsageError("--likelihood cond_trunc needs --truncation-date");
    model.truncation = to_epoch(parse_date_flag("truncation-date", truncation)).value;
  } else if (!truncation.empty()) {
    throw UsageError("--truncation-date only applies to --likelihood cond_trunc");
  }
  return model;
}

std::vector<CaseRecord> apply_truncation(std::vector<CaseRecord> cases, const LikelihoodModel& m) {
  if (m.kind != LikelihoodKind::cond_trunc) return cases;
  std::erase_if(cases, [&](const CaseRecord& c) { return c.S > m.truncation; });
  if (cases.empty()) throw EmptyCohortError("no cases with symptom onset on or before the truncation date");
  return cases;
}

std::vector<std::string> fit_header() {
  return {"likelihood", "n", "converged", "log_lik", "doubling_time", "median", "q95", "rho"};
}

std::vector<std::string> fit_row(const FitResult& f) {
  return {to_string(f.model.kind),
          std::to_string(f.n_cases),
          f.converged ? "yes" : "no",
          fixed(f.log_lik, 4),
          fixed(f.display.doubling_time),
          fixed(f.display.median_incubation),
          fixed(f.display.q95_incubation),
          f.model.kind == LikelihoodKind::uncond ? fixed(f.display.rho) : "-"};
}

// Onset parameters from flags, else the conditional (growth-adjusted) MLE.
ParamTheta onset_theta(std::span<const CaseRecord> cases, std::optional<double> r,
                       std::optional<double> alpha, std::optional<double> beta, std::string* source) {
  if (r && alpha && beta) {
    *source = "flags";
    return {0.0, *r, *alpha, *beta};
  }
  if (r || alpha || beta) throw UsageError("--r, --alpha and --beta must be given together");
  *source = "conditional MLE";
  const FitResult fit = mle_fit(cases, {LikelihoodKind::cond, 0.0});
  return fit.theta_hat;
}

// ---- subcommands -------------------------------------------------------------

int cmd_ingest(const CLI::App* sub, const IngestSettings& s, std::ostream& out) {
  std::ifstream f(s.in);
  if (!f) throw UsageError("cannot open input file " + s.in);
  TableFormat format;
  if (s.delimiter == "tab" || s.delimiter == "\\t") format.delimiter = '\t';
  else if (s.delimiter.size() == 1) format.delimiter = s.delimiter[0];
  else throw UsageError("--delimiter must be a single character or 'tab'");
  const auto raw = parse_case_table(f, format);
  InclusionRules rules;
  rules.keep_only_outside_no = !s.keep_outside_exposure;
  rules.drop_late_arrivals = !s.keep_late_arrivals;
  rules.impute_missing_end = !s.no_impute_end;
  rules.location = s.location;
  const Cohort cohort = build_cohort(raw, rules);

  const fs::path dir = output_dir(s.out);
  Json j = cohort.report;
  j["provenance"] = provenance(sub, std::nullopt);
  std::ostringstream csv;
  write_cohort_csv(csv, cohort.cases);
  if (cohort.cases.empty()) {
    write_atomic(dir / "exclusions.json", dump(j));
    throw EmptyCohortError("every case was excluded");
  }
  write_atomic(dir / "cohort.csv", csv.str());
  write_atomic(dir / "exclusions.json", dump(j));

  std::vector<std::vector<std::string>> rows{{"input", std::to_string(cohort.report.input)}};
  for (const auto& [rule, n] : cohort.report.excluded) rows.push_back({rule, std::to_string(n)});
  rows.push_back({"kept", std::to_string(cohort.report.kept)});
  emit(out, s.format, j, {"rule", "cases"}, rows);
  return kOk;
}

int cmd_simulate(const CLI::App* sub, const SimulateSettings& s, std::ostream& out) {
  const GenerativeParams params =
      GenerativeParams::from_theta(s.rho, s.r, s.alpha, s.beta, s.nu, s.kappa_fraction);
  Rng rng = split_stream(s.seed, 0);
  const ExportedSample sample = sample_exported(s.n, params, rng);
  const fs::path dir = output_dir(s.out);
  std::ostringstream csv;
  write_cohort_csv(csv, sample.cases);
  write_atomic(dir / "cohort.csv", csv.str());

  Json j = Json::object();
  j["params"] = params;
  j["theta"] = ParamTheta{s.rho, s.r, s.alpha, s.beta};
  j["n"] = sample.cases.size();
  j["draws"] = sample.draws;
  j["acceptance_rate"] = sample.acceptance_rate ? Json(*sample.acceptance_rate) : Json(nullptr);
  j["seed"] = s.seed;
  j["provenance"] = provenance(sub, s.seed);
  write_atomic(dir / "simulate.json", dump(j));
  emit(out, s.format, j, {"n", "draws", "acceptance_rate"},
       {{std::to_string(sample.cases.size()), std::to_string(sample.draws),
         fmt(sample.acceptance_rate.value_or(0.0))}});
  return kOk;
}

int cmd_fit(const CLI::App* sub, const FitSettings& s, std::ostream& out) {
  const LikelihoodModel model = likelihood_from_flags(s.likelihood, s.truncation_date);
  const auto cases = apply_truncation(load_cohort(s.cohort), model);
  FitOptions opts;
  opts.restarts = s.restarts;
  opts.seed = s.seed;
  const DisplayTheta init{s.init_doubling, s.init_median, s.init_q95, s.init_rho};
  const FitResult fit = mle_fit(cases, model, init, opts);
  Json j = fit;
  j["provenance"] = provenance(sub, s.seed);
  write_atomic(output_dir(s.out) / "fit.json", dump(j));
  emit(out, s.format, j, fit_header(), {fit_row(fit)});
  return kOk;
}

int cmd_ci(const CLI::App* sub, const CiSettings& s, std::ostream& out) {
  const LikelihoodModel model = likelihood_from_flags(s.likelihood, s.truncation_date);
  const auto cases = apply_truncation(load_cohort(s.cohort), model);
  if (!(s.level > 0.0 && s.level < 1.0)) throw UsageError("--level must lie in (0, 1)");
  FitResult fit = mle_fit(cases, model);
  std::vector<Param> params;
  if (s.param == "all") {
    params = free_params(model);
  } else {
    params.push_back(*parse_param(s.param));
    const auto all = free_params(model);
    if (std::find(all.begin(), all.end(), params.front()) == all.end()) {
      throw UsageError("--param " + s.param + " is not estimated by --likelihood " + s.likelihood);
    }
  }
  Json intervals = Json::object();
  std::vector<std::vector<std::string>> rows;
  for (Param p : params) {
    ConfidenceInterval ci;
    if (s.method == "profile") {
      ci = profile_ci(cases, fit, p, s.level);
    } else {
      if (s.resamples < 100) throw UsageError("--resamples must be at least 100");
      BootstrapOptions bo;
      bo.resamples = s.resamples;
      bo.level = s.level;
      bo.interval = s.interval == "basic" ? BootstrapInterval::basic : BootstrapInterval::percentile;
      bo.seed = s.seed;
      bo.threads = s.threads;
      ci = bootstrap_ci(cases, fit, [p](const FitResult& f) { return param_value(f.display, p); }, bo).ci;
    }
    fit.ci[to_string(p)] = ci;
    intervals[to_string(p)] = ci;
    rows.push_back({to_string(p), fixed(param_value(fit.display, p)), fixed(ci.lo), fixed(ci.hi),
                    fmt(ci.level), ci.method});
  }
  Json j = Json::object();
  j["fit"] = fit;
  j["intervals"] = intervals;
  j["provenance"] = provenance(sub, s.seed);
  write_atomic(output_dir(s.out) / "ci.json", dump(j));
  emit(out, s.format, j, {"param", "estimate", "lo", "hi", "level", "method"}, rows);
  return kOk;
}

std::vector<std::vector<std::string>> sweep_long_rows(const std::vector<SweepRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows) {
    if (r.flagged) continue;
    const std::string date = format_date(from_epoch(EpochDay{r.cutoff}));
    const auto add = [&](const char* q, double est, const std::optional<ConfidenceInterval>& band) {
      out.push_back({date, to_string(r.model), q, fmt(est), band ? fmt(band->lo) : "",
                     band ? fmt(band->hi) : ""});
    };
    add("median", r.median, r.median_band);
    add("q95", r.q95, r.q95_band);
  }
  return out;
}

int cmd_bias(const CLI::App* sub, const BiasSettings& s, std::ostream& out) {
  const auto cases = load_cohort({s.in, "", ""});
  const int from = to_epoch(parse_date_flag("from", s.from)).value;
  const int to = to_epoch(parse_date_flag("to", s.to)).value;
  if (to < from) throw UsageError("--to is before --from");
  std::vector<int> cutoffs;
  for (int d = from; d <= to; ++d) cutoffs.push_back(d);
  SweepOptions so;
  so.truncation_offset = s.offset;
  so.min_cases = s.min_cases;
  so.bootstrap_resamples = s.bootstrap;
  so.level = s.level;
  so.seed = s.seed;
  so.threads = s.threads;
  if (s.bootstrap > 0 && s.bootstrap < 100) throw UsageError("--bootstrap must be 0 or at least 100");
  const auto rows = bias_sweep(cases, cutoffs, so);

  Json j = Json::object();
  j["rows"] = rows;
  j["provenance"] = provenance(sub, s.seed);
  const fs::path dir = output_dir(s.out);
  write_atomic(dir / "sweep.json", dump(j));
  const std::vector<std::string> header{"date", "model", "quantile", "estimate", "lo", "hi"};
  write_atomic(dir / "sweep.csv", csv_text(header, sweep_long_rows(rows)));

  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows) {
    table.push_back({format_date(from_epoch(EpochDay{r.cutoff})), to_string(r.model),
                     std::to_string(r.n_cases), r.flagged ? "-" : fixed(r.median),
                     r.flagged ? "-" : fixed(r.q95), r.flagged ? "flagged" : ""});
  }
  emit(out, s.format, j, {"date", "model", "n", "median", "q95", "note"}, table);
  return kOk;
}

int cmd_gof(const CLI::App* sub, const GofSettings& s, std::ostream& out) {
  const auto cases = load_cohort(s.cohort);
  std::string source;
  const ParamTheta theta = onset_theta(cases, s.r, s.alpha, s.beta, &source);
  const GofResult gof = gof_onset_marginal(cases, theta.r, theta.alpha, theta.beta);
  Json j = gof;
  j["theta"] = Json{{"r", theta.r}, {"alpha", theta.alpha}, {"beta", theta.beta}, {"source", source}};
  j["marginal_condition_holds"] = marginal_s_condition_holds(theta.r, theta.alpha, theta.beta);
  j["provenance"] = provenance(sub, std::nullopt);
  write_atomic(output_dir(s.out) / "gof.json", dump(j));
  std::vector<std::vector<std::string>> rows;
  for (const auto& b : gof.bins) {
    rows.push_back({format_date(from_epoch(EpochDay{b.first})), format_date(from_epoch(EpochDay{b.last})),
                    fmt(b.observed), fixed(b.expected)});
  }
  if (s.format == "table") {
    out << "chi2 = " << fixed(gof.chi2) << ", dof = " << gof.dof << ", p = " << fixed(gof.p_value)
        << '\n';
  }
  emit(out, s.format, j, {"first_day", "last_day", "observed", "expected"}, rows);
  return kOk;
}

int cmd_mcmc(const CLI::App* sub, const McmcSettings& s, std::ostream& out) {
  DiscreteConfig config;
  config.mu = s.mu;
  config.growth = *parse_growth_kind(s.growth);
  config.departure = *parse_departure_kind(s.departure);
  config.strata = *parse_strata(s.strata);
  if (s.steps < 2 || s.chains < 1 || s.thin < 1) {
    throw UsageError("--steps, --chains and --thin must be positive");
  }
  const auto cases = load_cohort(s.cohort);
  std::size_t dropped = 0;
  const auto discrete = to_discrete_cases(cases, config, &dropped);
  if (discrete.empty()) throw EmptyCohortError("no cases with a known stratum");

  McmcOptions mo;
  mo.steps = s.steps;
  mo.chains = s.chains;
  mo.thin = s.thin;
  mo.seed = s.seed;
  mo.threads = s.threads;
  mo.prior_only = s.prior_only;
  const ChainStore store = rwmh_run(discrete, config, mo);

  const fs::path dir = output_dir(s.out);
  std::ostringstream draws;
  draws << "chain,draw";
  for (const auto& c : store.columns) draws << ',' << c;
  draws << '\n';
  for (std::size_t c = 0; c < store.chains.size(); ++c) {
    const auto& m = store.chains[c];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      draws << c << ',' << i;
      for (Eigen::Index k = 0; k < m.cols(); ++k) draws << ',' << fmt(m(i, k));
      draws << '\n';
    }
  }
  write_atomic(dir / "mcmc_draws.csv", draws.str());

  const auto summaries = posterior_summaries(store);
  const auto rhat = convergence_diagnostics(store);
  Json summary = Json::object();
  summary["config"] = config;
  summary["n_cases"] = discrete.size();
  summary["dropped_unknown_stratum"] = dropped;
  summary["summaries"] = summaries;
  summary["provenance"] = provenance(sub, s.seed);
  write_atomic(dir / "mcmc_summary.json", dump(summary));

  Json diag = Json::object();
  diag["rhat"] = rhat;
  diag["acceptance"] = store.acceptance;
  diag["provenance"] = provenance(sub, s.seed);
  write_atomic(dir / "mcmc_diagnostics.json", dump(diag));

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : summaries) rows.push_back({r.name, fixed(r.mean), fixed(r.lo), fixed(r.hi)});
  emit(out, s.format, summary, {"quantity", "mean", "lo", "hi"}, rows);
  return kOk;
}

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path,
                                                    std::vector<std::string>* header) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open input file " + path);
  std::string line;
  if (!std::getline(f, line)) throw UsageError(path + " is empty");
  *header = split_delimited(line, ',');
  std::vector<std::vector<std::string>> rows;
  while (std::getline(f, line)) {
    if (!line.empty()) rows.push_back(split_delimited(line, ','));
  }
  return rows;
}

int cmd_plot(const CLI::App* sub, const PlotSettings& s, std::ostream& out) {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  Json meta = Json::object();

  if (s.kind == "onset") {
    const auto cases = load_cohort({s.in, "", ""});
    std::string source;
    const ParamTheta theta = onset_theta(cases, s.r, s.alpha, s.beta, &source);
    std::map<int, double> observed;
    for (const auto& c : cases) {
      if (c.wuhan_resident()) observed[c.S_int] += 1.0;
    }
    if (observed.empty()) throw EmptyCohortError("no Wuhan residents in the cohort");
    double total = 0.0;
    for (const auto& [d, n] : observed) total += n;
    const int first = observed.begin()->first, last = observed.rbegin()->first;
    const auto expected = expected_onset_counts(first, last, total, theta.r, theta.alpha, theta.beta);
    header = {"date", "observed", "expected"};
    for (int d = first; d <= last; ++d) {
      const auto it = observed.find(d);
      rows.push_back({format_date(from_epoch(EpochDay{d})), fmt(it == observed.end() ? 0.0 : it->second),
                      fmt(expected[static_cast<std::size_t>(d - first)])});
    }
    meta["theta"] = Json{{"r", theta.r}, {"alpha", theta.alpha}, {"beta", theta.beta}, {"source", source}};
  } else if (s.kind == "sweep") {
    std::ifstream f(s.in);
    if (!f) throw UsageError("cannot open input file " + s.in);
    Json sweep;
    try {
      sweep = Json::parse(f);
    } catch (const Json::parse_error& e) {
      throw UsageError(s.in + ": " + e.what());
    }
    header = {"date", "model", "n_cases", "median", "median_lo", "median_hi", "q95", "q95_lo", "q95_hi"};
    const auto num = [](const Json& v) { return v.is_number() ? fmt(v.get<double>()) : std::string(); };
    const auto band = [&](const Json& v, const char* key) {
      return v.is_object() ? num(v[key]) : std::string();
    };
    for (const auto& r : sweep.at("rows")) {
      if (r.at("flagged").get<bool>()) continue;
      rows.push_back({r.at("cutoff").get<std::string>(), r.at("model").get<std::string>(),
                      std::to_string(r.at("n_cases").get<std::size_t>()), num(r.at("median")),
                      band(r.at("median_band"), "lo"), band(r.at("median_band"), "hi"),
                      num(r.at("q95")), band(r.at("q95_band"), "lo"), band(r.at("q95_band"), "hi")});
    }
  } else if (s.kind == "posterior-pmf") {
    std::vector<std::string> cols;
    const auto draws = read_csv_rows(s.in, &cols);
    if (draws.empty()) throw EmptyCohortError("no draws in " + s.in);
    // Columns h_<stratum>_<k>.
    std::map<std::pair<std::string, int>, std::size_t> h_cols;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i].rfind("h_", 0) != 0) continue;
      const auto sep = cols[i].rfind('_');
      h_cols[{cols[i].substr(2, sep - 2), std::stoi(cols[i].substr(sep + 1))}] = i;
    }
    if (h_cols.empty()) throw UsageError(s.in + " has no incubation pmf columns");
    header = {"stratum", "days", "mean", "lo", "hi"};
    for (const auto& [key, col] : h_cols) {
      std::vector<double> v;
      for (const auto& r : draws) v.push_back(std::stod(r.at(col)));
      std::sort(v.begin(), v.end());
      const auto q = [&](double p) {
        const double h = (static_cast<double>(v.size()) - 1.0) * p;
        const auto lo = static_cast<std::size_t>(h);
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
      };
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      rows.push_back({key.first, std::to_string(key.second), fmt(mean), fmt(q(0.5 * (1 - s.level))),
                      fmt(q(0.5 * (1 + s.level)))});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return a[0] != b[0] ? a[0] < b[0] : std::stoi(a[1]) < std::stoi(b[1]);
    });
  } else {
    const auto cases = load_cohort({s.in, "", ""});
    if (!(s.bandwidth > 0.0)) throw UsageError("--bandwidth must be positive");
    DiscreteConfig config;
    config.strata = *parse_strata(s.strata);
    const auto labels = config.stratum_labels();
    std::vector<std::vector<double>> values(2);
    for (const auto& c : cases) {
      if (config.strata == Strata::gender && c.gender != Gender::unknown) {
        values[c.gender == Gender::male ? 0 : 1].push_back(c.S_int - c.E_int);
      } else if (config.strata == Strata::age50 && c.age_group != AgeGroup::unknown) {
        values[c.age_group == AgeGroup::under50 ? 0 : 1].push_back(c.S_int - c.E_int);
      }
    }
    header = {"stratum", "type", "x", "value"};
    for (std::size_t st = 0; st < 2; ++st) {
      const auto& v = values[st];
      if (v.empty()) continue;
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      std::map<double, double> counts;
      for (double x : v) counts[x] += 1.0;
      for (const auto& [x, n] : counts) {
        rows.push_back({labels[st], "proportion", fmt(x), fmt(n / static_cast<double>(v.size()))});
      }
      const double norm = 1.0 / (static_cast<double>(v.size()) * s.bandwidth * std::sqrt(2.0 * std::numbers::pi));
      for (double x = *lo - 3.0 * s.bandwidth; x <= *hi + 3.0 * s.bandwidth + 1e-9; x += 0.25) {
        double d = 0.0;
        for (double xi : v) d += std::exp(-0.5 * (x - xi) * (x - xi) / (s.bandwidth * s.bandwidth));
        rows.push_back({labels[st], "kde", fmt(x), fmt(d * norm)});
      }
    }
    if (rows.empty()) throw EmptyCohortError("no cases with a known stratum");
    meta["sizes"] = Json{{labels[0], values[0].size()}, {labels[1], values[1].size()}};
    if (values[0].size() >= 10 && values[1].size() >= 10) {
      const auto ab = ansari_bradley(values[0], values[1]);
      const auto loc = rank_location_test(values[0], values[1]);
      meta["dispersion_test"] = Json{{"test", "ansari-bradley"}, {"z", ab.z}, {"p_value", ab.p_value}};
      meta["location_test"] = Json{{"test", "rank-sum"}, {"z", loc.z}, {"p_value", loc.p_value}};
    }
  }

  const fs::path dir = output_dir(s.out);
  const std::string stem = "plot_" + s.kind;
  write_atomic(dir / (stem + ".csv"), csv_text(header, rows));
  meta["kind"] = s.kind;
  meta["rows"] = rows.size();
  meta["provenance"] = provenance(sub, std::nullopt);
  write_atomic(dir / (stem + ".json"), dump(meta));
  emit(out, s.format, meta, header, rows);
  return kOk;
}

}  // namespace

Parser::Parser() : settings_(std::make_unique<Settings>()), app_(std::make_unique<CLI::App>()) {
  app_->name("bets");
  app_->description("Selection-adjusted inference for exported epidemic cases");
  register_all(*app_, *settings_);
}

Parser::~Parser() = default;

const std::vector<DocumentedCommand>& documented_commands() {
  static const std::vector<DocumentedCommand> table{
      {"ingest",
       {"in", "out", "delimiter", "location", "no-impute-end", "keep-late-arrivals",
        "keep-outside-exposure", "format"}},
      {"simulate", {"n", "seed", "rho", "r", "alpha", "beta", "nu", "kappa-fraction", "out", "format"}},
      {"fit",
       {"in", "location", "confirmed-by", "likelihood", "truncation-date", "init-doubling",
        "init-median", "init-q95", "init-rho", "restarts", "seed", "out", "format"}},
      {"ci",
       {"in", "location", "confirmed-by", "likelihood", "truncation-date", "method", "param", "level",
        "resamples", "interval", "seed", "threads", "out", "format"}},
      {"bias-demo",
       {"in", "from", "to", "offset", "min-cases", "bootstrap", "level", "seed", "threads", "out",
        "format"}},
      {"gof", {"in", "location", "confirmed-by", "r", "alpha", "beta", "out", "format"}},
      {"mcmc",
       {"in", "location", "confirmed-by", "steps", "chains", "mu", "growth", "departure", "strata",
        "seed", "thin", "threads", "prior-only", "out", "format"}},
      {"plot-data", {"kind", "in", "r", "alpha", "beta", "strata", "bandwidth", "level", "out", "format"}},
  };
  return table;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Parser parser;
  CLI::App& app = parser.app();
  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const CLI::App* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* target = &app;
    for (const CLI::App* sub : app.get_subcommands()) target = sub;
    err << target->help();
    return kUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const Settings& s = parser.settings();
  const std::string name = sub->get_name();
  try {
    if (name == "ingest") return cmd_ingest(sub, s.ingest, out);
    if (name == "simulate") return cmd_simulate(sub, s.simulate, out);
    if (name == "fit") return cmd_fit(sub, s.fit, out);
    if (name == "ci") return cmd_ci(sub, s.ci, out);
    if (name == "bias-demo") return cmd_bias(sub, s.bias, out);
    if (name == "gof") return cmd_gof(sub, s.gof, out);
    if (name == "mcmc") return cmd_mcmc(sub, s.mcmc, out);
    if (name == "plot-data") return cmd_plot(sub, s.plot, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TableParseError& e) {
    err << "error: " << e.what();
    if (e.row() > 0) err << " (row " << e.row() << ")";
    err << '\n';
    return kUsage;
  } catch (const EmptyCohortError& e) {
    err << "error: " << e.what() << '\n';
    return kEmptyCohort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kModuleError;
  }
  err << "error: unknown command " << name << '\n';
  return kUsage;
}

}  // namespace bets::cli
