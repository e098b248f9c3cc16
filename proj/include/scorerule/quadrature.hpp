#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "scorerule/errors.hpp"

namespace scorerule {

/// Adaptive Gauss-Kronrod integration over (a,b); supports infinite endpoints.
/// Throws DivergentIntegral when the error estimate exceeds abs_tol.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double abs_tol = 1e-9) {
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0;
  const double value =
      gauss_kronrod<double, 15>::integrate(f, a, b, 15, 1e-12, &err);
  if (!std::isfinite(value) || err > abs_tol * std::max(1.0, std::abs(value)) + abs_tol) {
    throw DivergentIntegral("integral error estimate " + std::to_string(err) +
                            " exceeds tolerance " + std::to_string(abs_tol));
  }
  return value;
}

/// Same routine under the error contract of the Bregman expectation terms.
inline double integrate_expectation(const std::function<double(double)>& f, double a,
                                    double b, double abs_tol = 1e-8) {
  try {
    return integrate(f, a, b, abs_tol);
  } catch (const DivergentIntegral& e) {
    throw QuadratureFailure(e.what());
  }
}

}  // namespace scorerule
