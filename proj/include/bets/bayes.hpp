#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bets/timeline.hpp"

namespace bets {

enum class GrowthKind { single, two_stage };
enum class DepartureKind { uniform, geometric };
enum class Strata { none, gender, age50 };

std::string to_string(GrowthKind k);
std::string to_string(DepartureKind k);
std::string to_string(Strata s);
std::optional<GrowthKind> parse_growth_kind(const std::string& text);
std::optional<DepartureKind> parse_departure_kind(const std::string& text);
std::optional<Strata> parse_strata(const std::string& text);

struct DiscreteConfig {
  int L = kHorizon;
  int L1 = kFirstStageEnd;
  int L_chunyun = kChunyunStart;
  int max_incubation = 30;
  GrowthKind growth = GrowthKind::single;
  DepartureKind departure = DepartureKind::uniform;
  double mu = 1.0;
  Strata strata = Strata::none;
  /// P(B* > 0). Only its product with the departure ratio is identified,
  /// so it is held fixed rather than sampled.
  double pi = 0.5;

  /// Throws std::invalid_argument unless 0 <= L1 <= L, max_incubation >= 1, mu > 0.
  void validate() const;
  int n_strata() const { return strata == Strata::none ? 1 : 2; }
  /// "all", or the two stratum names ("male"/"female", "under50"/"over50").
  std::vector<std::string> stratum_labels() const;
};

struct NonparamState {
  /// Incubation pmf over 0..max_incubation-1, one per stratum.
  std::vector<Eigen::VectorXd> h;
  double r1 = 0.3;
  double r2 = 0.0;
  /// Infection mass on days 0..L as a fraction of its largest admissible
  /// value, so sum_t g*(t) = kappa <= 1 by construction.
  double kappa = 0.5;
  double lambda_W = 0.5 / kHorizon;
  double lambda_V = 0.5 / kHorizon;
  /// Departure hazards before / from the start of the travel season.
  double eta_W1 = 0.1, eta_W2 = 0.1, eta_V1 = 0.1, eta_V2 = 0.1;
};

/// Case reduced to integer days plus its stratum index.
struct DiscreteCase {
  std::string case_id;
  int B = 0;
  int E = 0;
  int S = 0;
  int stratum = 0;
};

/// Converts cohort records; cases whose stratum is unknown are dropped and
/// counted in `dropped`. Throws std::invalid_argument for E_int > L.
std::vector<DiscreteCase> to_discrete_cases(std::span<const CaseRecord> cases,
                                            const DiscreteConfig& config,
                                            std::size_t* dropped = nullptr);

/// h0(k) proportional to H_{9,1.5}(k+1) - H_{9,1.5}(k), normalised over
/// 0..n-1.
Eigen::VectorXd discretized_base_pmf(int n = 30);

/// Dirichlet(mu h0) log density plus the log-concavity tilt, constants
/// dropped. Entries of h below 1e-300 are floored.
double log_prior_h(const Eigen::VectorXd& h, double mu, const Eigen::VectorXd& h0);

/// g*(t) for t = 0..L.
Eigen::VectorXd discrete_growth(const NonparamState& state, const DiscreteConfig& config);

/// P(E* = e | B* = b) for b, e in 0..L (zero below the diagonal).
Eigen::MatrixXd departure_matrix(const NonparamState& state, const DiscreteConfig& config);

/// P(B* = b) for b = 0..L.
Eigen::VectorXd begin_pmf(const DiscreteConfig& config);

/// Probability of the selection set (up to the symptomatic fraction).
double discrete_selection_probability(const NonparamState& state, const DiscreteConfig& config);

struct DiscreteDiagnostics {
  /// First case with a zero numerator, if any.
  std::optional<std::string> zero_case;
};

/// Unconditional log-likelihood of the discretised model. Returns -infinity
/// (and names the case in `diag`) when some case has zero probability.
double log_lik_discrete(std::span<const DiscreteCase> cases, const NonparamState& state,
                        const DiscreteConfig& config, DiscreteDiagnostics* diag = nullptr);

/// Priors on growth, kappa and departure parameters; -infinity off support.
double log_prior_rest(const NonparamState& state, const DiscreteConfig& config);

struct McmcOptions {
  int steps = 80000;
  int chains = 8;
  int thin = 10;
  double burn_in_fraction = 0.5;
  std::uint64_t seed = 1;
  /// Sample from the prior only (likelihood switched off).
  bool prior_only = false;
  bool adapt = true;
  int adapt_window = 100;
  /// Initial random-walk scales for the h, growth, kappa and departure moves.
  double scale_h = 0.3;
  double scale_growth = 0.05;
  double scale_kappa = 1.0;
  double scale_departure = 0.3;
  /// Start every chain from this state instead of an overdispersed draw.
  std::optional<NonparamState> initial_state;
  unsigned threads = 0;
};

struct MoveStats {
  std::string move;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  double final_scale = 0.0;
  double rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

/// Thinned post-burn-in draws; one matrix (draws x columns) per chain.
struct ChainStore {
  DiscreteConfig config;
  std::vector<std::string> columns;
  std::vector<Eigen::MatrixXd> chains;
  /// Acceptance after burn-in, per chain and move type.
  std::vector<std::vector<MoveStats>> acceptance;
  std::size_t n_cases = 0;

  /// Throws std::out_of_range for an unknown column name.
  Eigen::Index column(const std::string& name) const;
  /// Column index of h*(k) for stratum s.
  Eigen::Index h_column(int stratum, int k) const;
  NonparamState state_at(std::size_t chain, Eigen::Index row) const;
};

class McmcError : public std::runtime_error {
 public:
  McmcError(const std::string& what, std::vector<std::vector<MoveStats>> acceptance)
      : std::runtime_error(what), acceptance_(std::move(acceptance)) {}
  const std::vector<std::vector<MoveStats>>& acceptance() const { return acceptance_; }

 private:
  std::vector<std::vector<MoveStats>> acceptance_;
};

/// Random-walk Metropolis-Hastings over unconstrained coordinates. Throws
/// McmcError when post-adaptation acceptance over all chains is below 1%.
ChainStore rwmh_run(std::span<const DiscreteCase> cases, const DiscreteConfig& config,
                    const McmcOptions& options = {});

/// Gelman-Rubin potential scale reduction factor. Requires >= 2 chains of
/// equal length >= 100; throws std::domain_error on zero within-chain variance.
double psrf(const std::vector<Eigen::VectorXd>& chains);

double mean_incubation(const Eigen::VectorXd& h);
/// P(incubation >= c) = sum_{k >= c} h(k).
double tail_probability(const Eigen::VectorXd& h, int c);

/// Per-chain series of a named functional: "r1", "r2", "doubling_time",
/// "kappa", "mean_incubation[s]" or "p_ge_<c>[s]" (stratum s, default 0).
std::vector<Eigen::VectorXd> functional_series(const ChainStore& store, const std::string& name);

struct PosteriorSummary {
  std::string name;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Posterior mean and central 95% interval of doubling time, r2, mean
/// incubation and tail probabilities; stratified runs add between-stratum
/// differences (first stratum minus second).
std::vector<PosteriorSummary> posterior_summaries(const ChainStore& store, double level = 0.95);

struct ConvergenceReport {
  std::string functional;
  double rhat = 0.0;
};

/// R-hat of r1, mean incubation and P(>= 14) for each stratum.
std::vector<ConvergenceReport> convergence_diagnostics(const ChainStore& store);

}  // namespace bets
