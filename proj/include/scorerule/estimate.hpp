#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "scorerule/models.hpp"
#include "scorerule/rules.hpp"

namespace scorerule {

struct FitOptions {
  double grad_tol = 1e-8;     // infinity norm of the mean-score gradient
  int max_iterations = 500;   // per start
  int multistarts = 5;        // default start plus perturbations
  double perturb_scale = 0.2;
  std::uint64_t perturb_seed = 0x5EEDB0F5ULL;  // fixed: fits are deterministic
};

/// Result of minimizing the empirical score (sum over observations).
struct FitResult {
  VectorXd theta_hat;
  double score_at_min = 0.0;   // total empirical score at the minimizer
  bool converged = false;
  int iterations = 0;          // across all starts
  double grad_norm_at_min = 0.0;  // infinity norm of the mean gradient, free coords
  std::vector<bool> fixed_mask;   // empty for unconstrained fits
};

/// Per-coordinate change of variables that maps the parameter domain onto an
/// unconstrained internal space: identity, log for half-lines and a scaled
/// logistic for bounded intervals.
class ParamTransform {
 public:
  explicit ParamTransform(const ParamDomain& domain);
  VectorXd to_internal(const VectorXd& natural) const;
  VectorXd to_natural(const VectorXd& internal) const;
  /// Diagonal of d(natural)/d(internal).
  VectorXd dnatural(const VectorXd& internal) const;

 private:
  std::vector<Interval> coords_;
};

/// Minimizes sum_i S(x_i, theta) by BFGS with backtracking line search in the
/// transformed space, multistarted, then polished by Newton steps.
FitResult fit(const ScoringRule& rule, const ParametricModel& model, const MatrixXd& data,
              const std::optional<VectorXd>& init = std::nullopt,
              const FitOptions& options = {});

/// Constrained fit with the coordinates in `psi_indices` frozen at
/// `psi_values`; minimizes over the nuisance block only.
FitResult fit_profile(const ScoringRule& rule, const ParametricModel& model,
                      const MatrixXd& data, const std::vector<int>& psi_indices,
                      const VectorXd& psi_values,
                      const std::optional<VectorXd>& init = std::nullopt,
                      const FitOptions& options = {});

/// Moment-style starting point (median/MAD, OLS, mean off-diagonal
/// correlation, depending on the model).
VectorXd default_init(const ScoringRule& rule, const ParametricModel& model,
                      const MatrixXd& data);

}  // namespace scorerule
