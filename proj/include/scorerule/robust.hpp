#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "scorerule/models.hpp"
#include "scorerule/rules.hpp"

namespace scorerule {

/// Influence-function values on an observation grid (scalar observations).
/// `unbounded_flag` means the running sup still grew by more than 1% across
/// the last two grid expansions, so the sup is reported as not stabilized.
struct InfluenceProfile {
  VectorXd grid;
  MatrixXd values;      // grid.size() x p
  double sup_norm = 0.0;
  double attained_at = 0.0;
  bool unbounded_flag = false;
};

/// Population K(theta) = E_theta[ds/dtheta^T]: Gauss-Kronrod quadrature for
/// scalar observation spaces, fixed-seed Monte Carlo otherwise.
MatrixXd population_K(const ScoringRule& rule, const ParametricModel& model,
                      const VectorXd& theta);
/// Population J(theta) = E_theta[s s^T] by fixed-seed Monte Carlo.
MatrixXd population_J(const ScoringRule& rule, const ParametricModel& model,
                      const VectorXd& theta, int draws = 100000);

/// IF(x) = K(theta)^-1 s(x, theta) per grid point.
InfluenceProfile influence_function(const ScoringRule& rule, const ParametricModel& model,
                                    const VectorXd& theta, const VectorXd& x_grid);

/// IF on the expanding default grid: decade segments out to widen*1e6 with
/// 4001 points each and the mode decade refined 10x.  Sets unbounded_flag
/// from the 1%-growth rule.
InfluenceProfile influence_sup_probe(const ScoringRule& rule, const ParametricModel& model,
                                     const VectorXd& theta, double widen = 1.0);

struct BoundednessVerdict {
  bool bounded = false;
  double sup = 0.0;
  double attained_at = 0.0;
};

/// Location-model B-robustness probe: is alpha(f(u)) f'(u) bounded in u?
/// Evaluated on the expanding grid unless an explicit grid is given.
BoundednessVerdict check_bregman_location(const std::function<double(double)>& gauge,
                                          const CenterDensity& center,
                                          const std::vector<double>& u_grid = {});

/// Scale-model B-robustness probe: is alpha(theta f(theta x)) *
/// {f(theta x) + theta x f'(theta x)} bounded in x > 0, for each theta?
std::vector<BoundednessVerdict> check_bregman_scale(
    const std::function<double(double)>& gauge, const CenterDensity& center,
    const std::vector<double>& theta_grid, const std::vector<double>& x_grid = {});

/// Probe for the sufficient scale-model condition: f(u) and u f'(u) both
/// bounded on the positive half line.
BoundednessVerdict check_scale_center_bounds(const CenterDensity& center);

/// Density bound 1 + 2K for a density whose derivative is bounded by K.
double density_bound_from_derivative(double deriv_bound);

/// Numeric sup of f and |f'| for a bundled center density, to probe the
/// density bound empirically.
struct DensityBoundProbe {
  double sup_f = 0.0;
  double sup_abs_df = 0.0;
  double bound = 0.0;  // 1 + 2 sup|f'|
};
DensityBoundProbe density_bound_probe(const CenterDensity& center);

}  // namespace scorerule
