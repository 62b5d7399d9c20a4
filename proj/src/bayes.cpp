#include "bets/bayes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include "bets/parallel.hpp"
#include "bets/rng.hpp"
#include "bets/special.hpp"

namespace bets {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kTailCutoffs[] = {2, 4, 7, 10, 14, 21};
constexpr int kBlockSize = 5;

double log_sum_exp(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
// log(sigmoid(x) * (1 - sigmoid(x))) without overflow.
double log_sigmoid_jacobian(double x) {
  const double a = std::abs(x);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

double log_prior_h_from_log(const Eigen::VectorXd& log_h, double mu, const Eigen::VectorXd& h0) {
  double lp = ((mu * h0.array() - 1.0) * log_h.array()).sum();
  for (Eigen::Index k = 1; k + 1 < log_h.size(); ++k) {
    lp += std::min(0.0, 2.0 * log_h(k) - log_h(k - 1) - log_h(k + 1));
  }
  return lp;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Cases collapsed to distinct (B, E, S, stratum) with counts.
struct GroupedCases {
  std::vector<DiscreteCase> reps;
  std::vector<double> counts;

  GroupedCases(std::span<const DiscreteCase> cases, const DiscreteConfig& config) {
    std::map<std::array<int, 4>, std::size_t> index;
    for (const auto& c : cases) {
      if (c.stratum < 0 || c.stratum >= config.n_strata()) {
        throw std::invalid_argument("case " + c.case_id + " has an invalid stratum");
      }
      if (c.E > config.L || c.B > c.E || c.B < 0) {
        throw std::invalid_argument("case " + c.case_id + " is outside 0 <= B* <= E* <= L");
      }
      const std::array<int, 4> key{c.B, c.E, c.S, c.stratum};
      const auto [it, inserted] = index.emplace(key, reps.size());
      if (inserted) {
        reps.push_back(c);
        counts.push_back(1.0);
      } else {
        counts[it->second] += 1.0;
      }
    }
  }
};

double grouped_log_lik(const GroupedCases& cases, const NonparamState& state,
                       const DiscreteConfig& config, const std::vector<Eigen::VectorXd>& h,
                       DiscreteDiagnostics* diag) {
  const Eigen::VectorXd g = discrete_growth(state, config);
  const Eigen::MatrixXd dep = departure_matrix(state, config);
  const Eigen::VectorXd pb = begin_pmf(config);
  const double log_pd = std::log(discrete_selection_probability(state, config));
  const int n = config.max_incubation;

  double total = 0.0;
  for (std::size_t i = 0; i < cases.reps.size(); ++i) {
    const DiscreteCase& c = cases.reps[i];
    const Eigen::VectorXd& hs = h[static_cast<std::size_t>(c.stratum)];
    double conv = 0.0;
    for (int t = std::max(c.B, c.S - (n - 1)); t <= std::min(c.E, c.S); ++t) {
      conv += g(t) * hs(c.S - t);
    }
    const double num = pb(c.B) * dep(c.B, c.E) * conv;
    if (!(num > 0.0)) {
      if (diag) diag->zero_case = c.case_id;
      return kNegInf;
    }
    total += cases.counts[i] * (std::log(num) - log_pd);
  }
  return total;
}

// Unconstrained coordinates for the sampler.
class StateCodec {
 public:
  explicit StateCodec(const DiscreteConfig& config) : config_(config) {
    n_ = config.max_incubation;
    const int strata = config.n_strata();
    r1_ = strata * n_;
    r2_ = config.growth == GrowthKind::two_stage ? r1_ + 1 : -1;
    kappa_ = (r2_ >= 0 ? r2_ : r1_) + 1;
    departure_ = kappa_ + 1;
    size_ = departure_ + (config.departure == DepartureKind::uniform ? 2 : 4);
  }

  int size() const { return size_; }
  int n() const { return n_; }
  int r1_index() const { return r1_; }
  int r2_index() const { return r2_; }
  int kappa_index() const { return kappa_; }
  int departure_index() const { return departure_; }
  int departure_count() const { return size_ - departure_; }

  Eigen::VectorXd encode(const NonparamState& s) const {
    Eigen::VectorXd x(size_);
    for (int st = 0; st < config_.n_strata(); ++st) {
      Eigen::VectorXd lh = s.h[static_cast<std::size_t>(st)].array().max(1e-300).log();
      x.segment(st * n_, n_) = lh.array() - lh.mean();
    }
    x(r1_) = std::log(s.r1);
    if (r2_ >= 0) x(r2_) = s.r2;
    x(kappa_) = logit(s.kappa);
    if (config_.departure == DepartureKind::uniform) {
      x(departure_) = logit(s.lambda_W * config_.L);
      x(departure_ + 1) = logit(s.lambda_V * config_.L);
    } else {
      x(departure_) = logit(s.eta_W1);
      x(departure_ + 1) = logit(s.eta_W2);
      x(departure_ + 2) = logit(s.eta_V1);
      x(departure_ + 3) = logit(s.eta_V2);
    }
    return x;
  }

  // Decodes x; log_h receives log h*(k) per stratum.
  NonparamState decode(const Eigen::VectorXd& x, std::vector<Eigen::VectorXd>* log_h) const {
    NonparamState s;
    s.h.resize(static_cast<std::size_t>(config_.n_strata()));
    if (log_h) log_h->resize(s.h.size());
    for (int st = 0; st < config_.n_strata(); ++st) {
      const Eigen::VectorXd z = x.segment(st * n_, n_);
      const Eigen::VectorXd lh = z.array() - log_sum_exp(z);
      s.h[static_cast<std::size_t>(st)] = lh.array().exp();
      if (log_h) (*log_h)[static_cast<std::size_t>(st)] = lh;
    }
    s.r1 = std::exp(x(r1_));
    s.r2 = r2_ >= 0 ? x(r2_) : 0.0;
    s.kappa = sigmoid(x(kappa_));
    if (config_.departure == DepartureKind::uniform) {
      s.lambda_W = sigmoid(x(departure_)) / config_.L;
      s.lambda_V = sigmoid(x(departure_ + 1)) / config_.L;
    } else {
      s.eta_W1 = sigmoid(x(departure_));
      s.eta_W2 = sigmoid(x(departure_ + 1));
      s.eta_V1 = sigmoid(x(departure_ + 2));
      s.eta_V2 = sigmoid(x(departure_ + 3));
    }
    return s;
  }

  // log|d state / d x| for the scalar coordinates plus, per stratum, the
  // softmax volume term sum_k log h(k) and a N(0, 1) density on mean(z)
  // that makes the redundant direction proper.
  double log_jacobian(const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& log_h) const {
    double lj = 0.0;
    for (int st = 0; st < config_.n_strata(); ++st) {
      lj += log_h[static_cast<std::size_t>(st)].sum();
      const double m = x.segment(st * n_, n_).mean();
      lj -= 0.5 * m * m;
    }
    lj += x(r1_);
    lj += log_sigmoid_jacobian(x(kappa_));
    for (int i = departure_; i < size_; ++i) lj += log_sigmoid_jacobian(x(i));
    if (config_.departure == DepartureKind::uniform) lj -= 2.0 * std::log(config_.L);
    return lj;
  }

 private:
  DiscreteConfig config_;
  int n_, r1_, r2_, kappa_, departure_, size_;
};

std::vector<std::string> store_columns(const DiscreteConfig& config) {
  std::vector<std::string> cols{"r1"};
  if (config.growth == GrowthKind::two_stage) cols.push_back("r2");
  cols.push_back("kappa");
  if (config.departure == DepartureKind::uniform) {
    cols.insert(cols.end(), {"lambda_W", "lambda_V"});
  } else {
    cols.insert(cols.end(), {"eta_W1", "eta_W2", "eta_V1", "eta_V2"});
  }
  for (const auto& label : config.stratum_labels()) {
    for (int k = 0; k < config.max_incubation; ++k) {
      cols.push_back("h_" + label + "_" + std::to_string(k));
    }
  }
  cols.push_back("log_post");
  return cols;
}

NonparamState initial_draw(const DiscreteConfig& config, const Eigen::VectorXd& h0, Rng& rng) {
  NonparamState s;
  const int n = config.max_incubation;
  for (int st = 0; st < config.n_strata(); ++st) {
    Eigen::VectorXd d(n);
    for (int k = 0; k < n; ++k) {
      d(k) = std::gamma_distribution<double>(config.mu * h0(k), 1.0)(rng);
    }
    const double total = d.sum();
    d = total > 0.0 ? Eigen::VectorXd(d / total) : h0;
    s.h.push_back(0.9 * d.array() + 0.1 / n);
  }
  s.r1 = std::exponential_distribution<double>(1.0)(rng);
  s.r1 = std::clamp(s.r1, 1e-3, 5.0);
  s.r2 = std::normal_distribution<double>(0.0, 2.0)(rng);
  const auto open_unit = [&] { return 0.02 + 0.96 * uniform01(rng); };
  s.kappa = open_unit();
  s.lambda_W = open_unit() / config.L;
  s.lambda_V = open_unit() / config.L;
  s.eta_W1 = open_unit();
  s.eta_W2 = open_unit();
  s.eta_V1 = open_unit();
  s.eta_V2 = open_unit();
  return s;
}

struct Move {
  std::string name;
  double scale;
  std::size_t window_proposed = 0, window_accepted = 0;
  std::size_t proposed = 0, accepted = 0;
};

void adapt_scale(Move& m) {
  if (m.window_proposed == 0) return;
  const double rate = static_cast<double>(m.window_accepted) / static_cast<double>(m.window_proposed);
  if (rate < 0.2) m.scale *= rate < 0.05 ? 0.5 : 0.8;
  else if (rate > 0.4) m.scale *= rate > 0.7 ? 2.0 : 1.25;
  m.window_proposed = m.window_accepted = 0;
}

}  // namespace

std::string to_string(GrowthKind k) { return k == GrowthKind::single ? "single" : "two-stage"; }
std::string to_string(DepartureKind k) {
  return k == DepartureKind::uniform ? "uniform" : "geometric";
}
std::string to_string(Strata s) {
  switch (s) {
    case Strata::none: return "none";
    case Strata::gender: return "gender";
    case Strata::age50: return "age50";
  }
  return "none";
}

std::optional<GrowthKind> parse_growth_kind(const std::string& text) {
  if (text == "single") return GrowthKind::single;
  if (text == "two-stage") return GrowthKind::two_stage;
  return std::nullopt;
}

std::optional<DepartureKind> parse_departure_kind(const std::string& text) {
  if (text == "uniform") return DepartureKind::uniform;
  if (text == "geometric") return DepartureKind::geometric;
  return std::nullopt;
}

std::optional<Strata> parse_strata(const std::string& text) {
  for (auto s : {Strata::none, Strata::gender, Strata::age50}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

void DiscreteConfig::validate() const {
  if (L < 1 || L1 < 0 || L1 > L) throw std::invalid_argument("discrete config requires 0 <= L1 <= L");
  if (L_chunyun < 0 || L_chunyun > L) {
    throw std::invalid_argument("discrete config requires 0 <= L_chunyun <= L");
  }
  if (max_incubation < 1) throw std::invalid_argument("max_incubation must be at least 1");
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("pi must lie in (0, 1)");
}

std::vector<std::string> DiscreteConfig::stratum_labels() const {
  switch (strata) {
    case Strata::none: return {"all"};
    case Strata::gender: return {"male", "female"};
    case Strata::age50: return {"under50", "over50"};
  }
  return {"all"};
}

std::vector<DiscreteCase> to_discrete_cases(std::span<const CaseRecord> cases,
                                            const DiscreteConfig& config, std::size_t* dropped) {
  std::vector<DiscreteCase> out;
  std::size_t skipped = 0;
  for (const auto& c : cases) {
    if (c.E_int > config.L) {
      throw std::invalid_argument("case " + c.case_id + " leaves after the horizon");
    }
    int stratum = 0;
    if (config.strata == Strata::gender) {
      if (c.gender == Gender::unknown) {
        ++skipped;
        continue;
      }
      stratum = c.gender == Gender::male ? 0 : 1;
    } else if (config.strata == Strata::age50) {
      if (c.age_group == AgeGroup::unknown) {
        ++skipped;
        continue;
      }
      stratum = c.age_group == AgeGroup::under50 ? 0 : 1;
    }
    out.push_back({c.case_id, c.B_int, c.E_int, c.S_int, stratum});
  }
  if (dropped) *dropped = skipped;
  return out;
}

Eigen::VectorXd discretized_base_pmf(int n) {
  Eigen::VectorXd h0(n);
  for (int k = 0; k < n; ++k) h0(k) = gamma_cdf_diff(9.0, 1.5, k, k + 1.0);
  return h0 / h0.sum();
}

double log_prior_h(const Eigen::VectorXd& h, double mu, const Eigen::VectorXd& h0) {
  if (h.size() != h0.size()) throw std::invalid_argument("log_prior_h: h and h0 differ in length");
  const Eigen::VectorXd log_h = h.array().max(1e-300).log();
  return log_prior_h_from_log(log_h, mu, h0);
}

Eigen::VectorXd discrete_growth(const NonparamState& state, const DiscreteConfig& config) {
  Eigen::VectorXd log_shape(config.L + 1);
  for (int t = 0; t <= config.L; ++t) {
    if (config.growth == GrowthKind::two_stage && t > config.L1) {
      log_shape(t) = state.r1 * config.L1 + state.r2 * (t - config.L1);
    } else {
      log_shape(t) = state.r1 * t;
    }
  }
  return state.kappa * (log_shape.array() - log_sum_exp(log_shape)).exp();
}

Eigen::MatrixXd departure_matrix(const NonparamState& state, const DiscreteConfig& config) {
  const int L = config.L;
  Eigen::MatrixXd dep = Eigen::MatrixXd::Zero(L + 1, L + 1);
  for (int b = 0; b <= L; ++b) {
    if (config.departure == DepartureKind::uniform) {
      const double lambda = b == 0 ? state.lambda_W : state.lambda_V;
      for (int e = b; e <= L; ++e) dep(b, e) = lambda;
    } else {
      double survive = 1.0;
      for (int e = b; e <= L; ++e) {
        const bool early = e < config.L_chunyun;
        const double eta = b == 0 ? (early ? state.eta_W1 : state.eta_W2)
                                  : (early ? state.eta_V1 : state.eta_V2);
        dep(b, e) = survive * eta;
        survive *= 1.0 - eta;
      }
    }
  }
  return dep;
}

Eigen::VectorXd begin_pmf(const DiscreteConfig& config) {
  Eigen::VectorXd pb = Eigen::VectorXd::Constant(config.L + 1, config.pi / config.L);
  pb(0) = 1.0 - config.pi;
  return pb;
}

double discrete_selection_probability(const NonparamState& state, const DiscreteConfig& config) {
  const Eigen::VectorXd g = discrete_growth(state, config);
  const Eigen::MatrixXd dep = departure_matrix(state, config);
  const Eigen::VectorXd pb = begin_pmf(config);
  Eigen::VectorXd G(config.L + 2);  // G(x + 1) = sum_{t <= x} g(t)
  G(0) = 0.0;
  for (int t = 0; t <= config.L; ++t) G(t + 1) = G(t) + g(t);
  double total = 0.0;
  for (int b = 0; b <= config.L; ++b) {
    double inner = 0.0;
    for (int e = b; e <= config.L; ++e) inner += dep(b, e) * (G(e + 1) - G(b));
    total += pb(b) * inner;
  }
  return total;
}

double log_lik_discrete(std::span<const DiscreteCase> cases, const NonparamState& state,
                        const DiscreteConfig& config, DiscreteDiagnostics* diag) {
  config.validate();
  if (static_cast<int>(state.h.size()) != config.n_strata()) {
    throw std::invalid_argument("state has " + std::to_string(state.h.size()) +
                                " incubation pmfs, config expects " +
                                std::to_string(config.n_strata()));
  }
  return grouped_log_lik(GroupedCases(cases, config), state, config, state.h, diag);
}

double log_prior_rest(const NonparamState& state, const DiscreteConfig& config) {
  const auto in_unit = [](double p) { return p > 0.0 && p < 1.0; };
  if (!(state.r1 >= 0.0) || !in_unit(state.kappa)) return kNegInf;
  double lp = -state.r1;
  if (config.growth == GrowthKind::two_stage) {
    if (!std::isfinite(state.r2)) return kNegInf;
    lp += -0.125 * state.r2 * state.r2 - std::log(2.0 * std::sqrt(2.0 * std::numbers::pi));
  }
  if (config.departure == DepartureKind::uniform) {
    for (double lambda : {state.lambda_W, state.lambda_V}) {
      if (!(lambda > 0.0 && lambda < 1.0 / config.L)) return kNegInf;
      lp += std::log(static_cast<double>(config.L));
    }
  } else {
    for (double eta : {state.eta_W1, state.eta_W2, state.eta_V1, state.eta_V2}) {
      if (!in_unit(eta)) return kNegInf;
    }
  }
  return lp;
}

Eigen::Index ChainStore::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("no column named " + name);
  return static_cast<Eigen::Index>(it - columns.begin());
}

Eigen::Index ChainStore::h_column(int stratum, int k) const {
  return column("h_" + config.stratum_labels().at(static_cast<std::size_t>(stratum)) + "_" +
                std::to_string(k));
}

NonparamState ChainStore::state_at(std::size_t chain, Eigen::Index row) const {
  const Eigen::MatrixXd& m = chains.at(chain);
  NonparamState s;
  s.r1 = m(row, column("r1"));
  if (config.growth == GrowthKind::two_stage) s.r2 = m(row, column("r2"));
  s.kappa = m(row, column("kappa"));
  if (config.departure == DepartureKind::uniform) {
    s.lambda_W = m(row, column("lambda_W"));
    s.lambda_V = m(row, column("lambda_V"));
  } else {
    s.eta_W1 = m(row, column("eta_W1"));
    s.eta_W2 = m(row, column("eta_W2"));
    s.eta_V1 = m(row, column("eta_V1"));
    s.eta_V2 = m(row, column("eta_V2"));
  }
  for (int st = 0; st < config.n_strata(); ++st) {
    const Eigen::Index first = h_column(st, 0);
    s.h.push_back(m.row(row).segment(first, config.max_incubation).transpose());
  }
  return s;
}

ChainStore rwmh_run(std::span<const DiscreteCase> cases, const DiscreteConfig& config,
                    const McmcOptions& options) {
  config.validate();
  if (cases.empty() && !options.prior_only) throw std::invalid_argument("rwmh_run: no cases");
  if (options.steps < 1 || options.chains < 1 || options.thin < 1) {
    throw std::invalid_argument("rwmh_run: steps, chains and thin must be positive");
  }
  const GroupedCases grouped(cases, config);
  const StateCodec codec(config);
  const Eigen::VectorXd h0 = discretized_base_pmf(config.max_incubation);
  const int n = config.max_incubation;
  const int strata = config.n_strata();
  const int burn_in = static_cast<int>(options.steps * options.burn_in_fraction);

  const auto log_target = [&](const Eigen::VectorXd& x) {
    std::vector<Eigen::VectorXd> log_h;
    const NonparamState s = codec.decode(x, &log_h);
    double lp = log_prior_rest(s, config) + codec.log_jacobian(x, log_h);
    for (int st = 0; st < strata; ++st) {
      // Dirichlet exponents minus one plus the softmax volume term.
      lp += log_prior_h_from_log(log_h[static_cast<std::size_t>(st)], config.mu, h0);
    }
    if (!std::isfinite(lp)) return kNegInf;
    if (!options.prior_only) lp += grouped_log_lik(grouped, s, config, s.h, nullptr);
    return std::isnan(lp) ? kNegInf : lp;
  };

  ChainStore store;
  store.config = config;
  store.columns = store_columns(config);
  store.n_cases = cases.size();
  store.chains.resize(static_cast<std::size_t>(options.chains));
  store.acceptance.resize(static_cast<std::size_t>(options.chains));

  parallel_for(
      static_cast<std::size_t>(options.chains),
      [&](std::size_t chain) {
        Rng rng = split_stream(options.seed, chain);
        std::normal_distribution<double> normal(0.0, 1.0);

        Eigen::VectorXd x;
        double current = kNegInf;
        if (options.initial_state) {
          x = codec.encode(*options.initial_state);
          current = log_target(x);
        } else {
          for (int attempt = 0; attempt < 1000 && !std::isfinite(current); ++attempt) {
            x = codec.encode(initial_draw(config, h0, rng));
            current = log_target(x);
          }
        }
        if (!std::isfinite(current)) {
          throw std::runtime_error("rwmh_run: no initial state with finite posterior density");
        }

        std::vector<Move> moves;
        for (const auto& label : config.stratum_labels()) moves.push_back({"h_" + label, options.scale_h});
        moves.push_back({"growth", options.scale_growth});
        moves.push_back({"kappa", options.scale_kappa});
        moves.push_back({"departure", options.scale_departure});

        const auto attempt = [&](Move& move, const Eigen::VectorXd& proposal, bool record) {
          const double value = log_target(proposal);
          const bool accept = std::log(uniform01(rng)) < value - current;
          ++move.window_proposed;
          if (record) ++move.proposed;
          if (accept) {
            x = proposal;
            current = value;
            ++move.window_accepted;
            if (record) ++move.accepted;
          }
        };

        std::vector<int> coords(static_cast<std::size_t>(n));
        const int block = std::min(kBlockSize, n);
        const int kept = (options.steps - burn_in) / options.thin;
        Eigen::MatrixXd draws(kept, static_cast<Eigen::Index>(store.columns.size()));
        int row = 0;

        for (int it = 0; it < options.steps; ++it) {
          const bool sampling = it >= burn_in;
          for (int st = 0; st < strata; ++st) {
            std::iota(coords.begin(), coords.end(), st * n);
            Eigen::VectorXd prop = x;
            for (int j = 0; j < block; ++j) {
              std::uniform_int_distribution<int> pick(j, n - 1);
              std::swap(coords[static_cast<std::size_t>(j)],
                        coords[static_cast<std::size_t>(pick(rng))]);
              prop(coords[static_cast<std::size_t>(j)]) += moves[static_cast<std::size_t>(st)].scale * normal(rng);
            }
            attempt(moves[static_cast<std::size_t>(st)], prop, sampling);
          }
          {
            Move& m = moves[static_cast<std::size_t>(strata)];
            Eigen::VectorXd prop = x;
            prop(codec.r1_index()) += m.scale * normal(rng);
            if (codec.r2_index() >= 0) prop(codec.r2_index()) += m.scale * normal(rng);
            attempt(m, prop, sampling);
          }
          {
            Move& m = moves[static_cast<std::size_t>(strata) + 1];
            Eigen::VectorXd prop = x;
            prop(codec.kappa_index()) += m.scale * normal(rng);
            attempt(m, prop, sampling);
          }
          {
            Move& m = moves[static_cast<std::size_t>(strata) + 2];
            Eigen::VectorXd prop = x;
            for (int i = 0; i < codec.departure_count(); ++i) {
              prop(codec.departure_index() + i) += m.scale * normal(rng);
            }
            attempt(m, prop, sampling);
          }

          if (!sampling && options.adapt && (it + 1) % options.adapt_window == 0) {
            for (auto& m : moves) adapt_scale(m);
          }
          if (sampling && (it - burn_in + 1) % options.thin == 0 && row < kept) {
            const NonparamState s = codec.decode(x, nullptr);
            Eigen::Index col = 0;
            draws(row, col++) = s.r1;
            if (config.growth == GrowthKind::two_stage) draws(row, col++) = s.r2;
            draws(row, col++) = s.kappa;
            if (config.departure == DepartureKind::uniform) {
              draws(row, col++) = s.lambda_W;
              draws(row, col++) = s.lambda_V;
            } else {
              for (double eta : {s.eta_W1, s.eta_W2, s.eta_V1, s.eta_V2}) draws(row, col++) = eta;
            }
            for (const auto& h : s.h) {
              draws.row(row).segment(col, n) = h.transpose();
              col += n;
            }
            draws(row, col) = current;
            ++row;
          }
        }

        store.chains[chain] = std::move(draws);
        auto& stats = store.acceptance[chain];
        for (const auto& m : moves) stats.push_back({m.name, m.proposed, m.accepted, m.scale});
      },
      options.threads);

  std::size_t proposed = 0, accepted = 0;
  for (const auto& chain : store.acceptance) {
    for (const auto& m : chain) {
      proposed += m.proposed;
      accepted += m.accepted;
    }
  }
  if (proposed > 0 && static_cast<double>(accepted) < 0.01 * static_cast<double>(proposed)) {
    throw McmcError("acceptance rate below 1% after adaptation (" + std::to_string(accepted) +
                        " of " + std::to_string(proposed) + " proposals)",
                    store.acceptance);
  }
  return store;
}

double psrf(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("psrf needs at least 2 chains");
  const Eigen::Index n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw std::invalid_argument("psrf needs chains of equal length");
  }
  if (n < 100) throw std::invalid_argument("psrf needs at least 100 draws per chain");
  const double m = static_cast<double>(chains.size());
  const double nn = static_cast<double>(n);
  Eigen::VectorXd means(static_cast<Eigen::Index>(chains.size()));
  double W = 0.0;
  for (std::size_t j = 0; j < chains.size(); ++j) {
    means(static_cast<Eigen::Index>(j)) = chains[j].mean();
    W += (chains[j].array() - chains[j].mean()).square().sum() / (nn - 1.0);
  }
  W /= m;
  if (!(W > 0.0)) throw std::domain_error("psrf: zero within-chain variance");
  const double B = nn * (means.array() - means.mean()).square().sum() / (m - 1.0);
  return std::sqrt(((nn - 1.0) / nn * W + B / nn) / W);
}

double mean_incubation(const Eigen::VectorXd& h) {
  return (h.array() * Eigen::ArrayXd::LinSpaced(h.size(), 0.0, static_cast<double>(h.size() - 1)))
      .sum();
}

double tail_probability(const Eigen::VectorXd& h, int c) {
  if (c <= 0) return h.sum();
  if (c >= h.size()) return 0.0;
  return h.tail(h.size() - c).sum();
}

std::vector<Eigen::VectorXd> functional_series(const ChainStore& store, const std::string& name) {
  std::string base = name;
  int stratum = 0;
  if (const auto open = name.find('['); open != std::string::npos && name.back() == ']') {
    base = name.substr(0, open);
    const std::string inner = name.substr(open + 1, name.size() - open - 2);
    const auto labels = store.config.stratum_labels();
    const auto it = std::find(labels.begin(), labels.end(), inner);
    if (it != labels.end()) {
      stratum = static_cast<int>(it - labels.begin());
    } else {
      try {
        stratum = std::stoi(inner);
      } catch (const std::exception&) {
        throw std::invalid_argument("unknown stratum in functional " + name);
      }
    }
    if (stratum < 0 || stratum >= store.config.n_strata()) {
      throw std::invalid_argument("unknown stratum in functional " + name);
    }
  }

  const int n = store.config.max_incubation;
  std::vector<Eigen::VectorXd> out;
  for (const auto& draws : store.chains) {
    Eigen::VectorXd series(draws.rows());
    const auto h_of = [&](Eigen::Index row) -> Eigen::VectorXd {
      return draws.row(row).segment(store.h_column(stratum, 0), n).transpose();
    };
    for (Eigen::Index i = 0; i < draws.rows(); ++i) {
      if (base == "r1" || base == "r2" || base == "kappa") {
        series(i) = draws(i, store.column(base));
      } else if (base == "doubling_time") {
        series(i) = std::numbers::ln2 / draws(i, store.column("r1"));
      } else if (base == "mean_incubation") {
        series(i) = mean_incubation(h_of(i));
      } else if (base.rfind("p_ge_", 0) == 0) {
        series(i) = tail_probability(h_of(i), std::stoi(base.substr(5)));
      } else {
        throw std::invalid_argument("unknown functional " + name);
      }
    }
    out.push_back(std::move(series));
  }
  return out;
}

std::vector<PosteriorSummary> posterior_summaries(const ChainStore& store, double level) {
  const auto summarise = [&](const std::string& label, const std::vector<Eigen::VectorXd>& series) {
    std::vector<double> pooled;
    for (const auto& s : series) pooled.insert(pooled.end(), s.data(), s.data() + s.size());
    if (pooled.empty()) throw std::invalid_argument("posterior_summaries: no draws");
    PosteriorSummary out{label, 0.0, 0.0, 0.0};
    out.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size());
    std::sort(pooled.begin(), pooled.end());
    out.lo = quantile_sorted(pooled, 0.5 * (1.0 - level));
    out.hi = quantile_sorted(pooled, 0.5 * (1.0 + level));
    return out;
  };
  const auto difference = [](std::vector<Eigen::VectorXd> a, const std::vector<Eigen::VectorXd>& b) {
    for (std::size_t j = 0; j < a.size(); ++j) a[j] -= b[j];
    return a;
  };

  std::vector<PosteriorSummary> rows;
  rows.push_back(summarise("doubling_time", functional_series(store, "doubling_time")));
  if (store.config.growth == GrowthKind::two_stage) {
    rows.push_back(summarise("r2", functional_series(store, "r2")));
  }
  std::vector<std::string> functionals{"mean_incubation"};
  for (int c : kTailCutoffs) functionals.push_back("p_ge_" + std::to_string(c));
  const auto labels = store.config.stratum_labels();
  for (const auto& f : functionals) {
    if (labels.size() == 1) {
      rows.push_back(summarise(f, functional_series(store, f)));
      continue;
    }
    const auto first = functional_series(store, f + "[0]");
    const auto second = functional_series(store, f + "[1]");
    rows.push_back(summarise(f + "[" + labels[0] + "]", first));
    rows.push_back(summarise(f + "[" + labels[1] + "]", second));
    rows.push_back(summarise(f + "[difference]", difference(first, second)));
  }
  return rows;
}

std::vector<ConvergenceReport> convergence_diagnostics(const ChainStore& store) {
  std::vector<std::string> names{"r1"};
  const auto labels = store.config.stratum_labels();
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const std::string suffix = labels.size() == 1 ? "" : "[" + labels[s] + "]";
    names.push_back("mean_incubation" + suffix);
    names.push_back("p_ge_14" + suffix);
  }
  std::vector<ConvergenceReport> out;
  for (const auto& name : names) {
    double rhat = std::numeric_limits<double>::quiet_NaN();
    try {
      rhat = psrf(functional_series(store, name));
    } catch (const std::domain_error&) {
      // constant chains
    } catch (const std::invalid_argument&) {
      // too few chains or draws
    }
    out.push_back({name, rhat});
  }
  return out;
}

}  // namespace bets
