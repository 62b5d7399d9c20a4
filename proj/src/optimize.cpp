#include "bets/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace bets {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& opts) {
  const Eigen::Index n = x0.size();
  NelderMeadResult out;
  int evals = 0;
  const auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  if (n == 0) {
    out.x = x0;
    out.value = eval(x0);
    out.evals = evals;
    out.converged = std::isfinite(out.value);
    return out;
  }

  Eigen::MatrixXd simplex(n, n + 1);
  Eigen::VectorXd values(n + 1);
  simplex.col(0) = x0;
  for (Eigen::Index i = 0; i < n; ++i) {
    simplex.col(i + 1) = x0;
    simplex(i, i + 1) += opts.initial_step;
  }
  for (Eigen::Index j = 0; j <= n; ++j) values(j) = eval(simplex.col(j));

  std::vector<Eigen::Index> order(n + 1);
  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;

  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
    const Eigen::Index best = order.front(), worst = order.back(), second = order[n - 1];

    double diameter = 0.0;
    for (Eigen::Index j = 0; j <= n; ++j) {
      diameter = std::max(diameter, (simplex.col(j) - simplex.col(best)).norm());
    }
    if (diameter < opts.diameter_tol && std::isfinite(values(best))) {
      out.converged = true;
      break;
    }
    if (evals >= opts.max_evals) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j <= n; ++j) {
      if (j != worst) centroid += simplex.col(j);
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + kReflect * (centroid - simplex.col(worst));
    const double f_reflected = eval(reflected);

    if (f_reflected < values(best)) {
      const Eigen::VectorXd expanded = centroid + kExpand * (reflected - centroid);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex.col(worst) = expanded;
        values(worst) = f_expanded;
      } else {
        simplex.col(worst) = reflected;
        values(worst) = f_reflected;
      }
      continue;
    }
    if (f_reflected < values(second)) {
      simplex.col(worst) = reflected;
      values(worst) = f_reflected;
      continue;
    }

    // Outside contraction toward the reflected point, or inside toward the worst.
    const bool outside = f_reflected < values(worst);
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + kContract * (reflected - centroid))
                : Eigen::VectorXd(centroid + kContract * (simplex.col(worst) - centroid));
    const double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : values(worst))) {
      simplex.col(worst) = contracted;
      values(worst) = f_contracted;
      continue;
    }

    for (Eigen::Index j = 0; j <= n; ++j) {
      if (j == best) continue;
      simplex.col(j) = simplex.col(best) + kShrink * (simplex.col(j) - simplex.col(best));
      values(j) = eval(simplex.col(j));
    }
  }

  Eigen::Index best = 0;
  values.minCoeff(&best);
  out.x = simplex.col(best);
  out.value = values(best);
  out.evals = evals;
  return out;
}

}  // namespace bets
