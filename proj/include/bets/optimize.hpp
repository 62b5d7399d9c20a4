#pragma once

#include <functional>

#include <Eigen/Dense>

namespace bets {

struct NelderMeadOptions {
  int max_evals = 50000;
  /// Stop once every vertex lies within this distance of the best one.
  double diameter_tol = 1e-8;
  double initial_step = 0.5;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evals = 0;
  bool converged = false;
};

/// Minimises f by the Nelder-Mead simplex method. Non-finite values of f
/// count as +infinity, so the objective may reject points outside its domain.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& opts = {});

}  // namespace bets
