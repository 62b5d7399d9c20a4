#pragma once

#include <array>
#include <cmath>
#include <functional>

namespace bets {

struct QuadratureOptions {
  double rel_tol = 1e-12;
  double abs_tol = 1e-300;
  int max_depth = 40;
};

/// Adaptive 15-point Gauss-Kronrod quadrature on [a, b] with recursive
/// bisection. Returns 0 when b <= a.
double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadratureOptions& opts = {});

}  // namespace bets
