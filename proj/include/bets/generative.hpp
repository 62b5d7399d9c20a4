#pragma once

#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bets/rng.hpp"
#include "bets/timeline.hpp"

namespace bets {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct SingleGrowth {
  double r = 0.0;
};

/// exp(r1 t) up to `switch_day`, then exp(r1 switch_day + r2 (t - switch_day)),
/// continuous at the switch.
struct TwoStageGrowth {
  double r1 = 0.0;
  double r2 = 0.0;
  double switch_day = kFirstStageEnd;
};

/// Infection intensity g(t) = kappa * shape(t) on [0, L]; zero after L.
class GrowthCurve {
 public:
  GrowthCurve(double kappa, std::variant<SingleGrowth, TwoStageGrowth> shape, double L = kHorizon);

  double density(double t) const;
  /// Integral of g over [0, t] (t clamped to [0, L]).
  double cumulative(double t) const;
  /// Smallest t in [0, L] with cumulative(t) = mass.
  double inverse_cumulative(double mass) const;

  double kappa() const { return kappa_; }
  double horizon() const { return L_; }
  const std::variant<SingleGrowth, TwoStageGrowth>& shape() const { return shape_; }

 private:
  double kappa_;
  std::variant<SingleGrowth, TwoStageGrowth> shape_;
  double L_;
};

struct GammaIncubation {
  double alpha = 1.0;
  double beta = 1.0;
};

/// Probability mass over whole days 0..size-1.
struct DiscreteIncubation {
  Eigen::VectorXd pmf;
};

using IncubationDist = std::variant<GammaIncubation, DiscreteIncubation>;

/// Checks shape/rate positivity or that the pmf is nonnegative and sums to
/// one within 1e-12. Throws std::invalid_argument.
void validate(const IncubationDist& dist);

struct GenerativeParams {
  double pi = 0.5;
  double lambda_W = 1.0 / kHorizon;
  double lambda_V = 1.0 / kHorizon;
  double kappa = 1e-8;
  std::variant<SingleGrowth, TwoStageGrowth> growth = SingleGrowth{0.3};
  double nu = 1.0;
  IncubationDist incubation = GammaIncubation{1.86, 0.33};
  double L = kHorizon;

  GrowthCurve growth_curve() const { return GrowthCurve(kappa, growth, L); }

  /// Throws std::invalid_argument when a probability leaves [0, 1], a
  /// departure density exceeds 1/L or the infection mass over [0, L] is > 1.
  void validate() const;

  /// Parameters whose exported-case density matches (rho, r, alpha, beta):
  /// pi = 1/2, departure densities chosen so lambda_V / lambda_W = rho, and
  /// kappa set to `kappa_fraction` of its largest admissible value.
  static GenerativeParams from_theta(double rho, double r, double alpha, double beta,
                                     double nu = 1.0, double kappa_fraction = 0.9);
};

/// One member of the exposed population; any component may be infinite.
struct FullTuple {
  double B = 0.0;
  double E = kInf;
  double T = kInf;
  double S = kInf;
};

struct DiscreteTuple {
  int B = 0;
  int E = EpochDay::kInfinite;
  int T = EpochDay::kInfinite;
  int S = EpochDay::kInfinite;
};

FullTuple sample_one(const GenerativeParams& params, const GrowthCurve& growth, Rng& rng);

std::vector<FullTuple> sample_population(std::size_t n, const GenerativeParams& params, Rng& rng);

/// B <= T <= E <= L and T <= S < infinity.
bool in_selection(const FullTuple& t, double L = kHorizon);

/// Componentwise ceiling; infinity is preserved.
DiscreteTuple discretize(const FullTuple& t);

struct ExportedSample {
  std::vector<CaseRecord> cases;
  std::vector<FullTuple> tuples;
  std::optional<double> acceptance_rate;
  std::size_t draws = 0;
};

/// Rejection-samples m exported cases. Throws std::runtime_error with
/// "selection probability too small" after 1e9 draws.
ExportedSample sample_exported(std::size_t m, const GenerativeParams& params, Rng& rng);

}  // namespace bets
