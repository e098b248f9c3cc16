#pragma once

#include <Eigen/Dense>

#include "scorerule/infer.hpp"

namespace scorerule {

/// Huber location-scale M-estimate: psi_c for location with scale from
/// Proposal 2, plus the sandwich-variance Wald statistic.  c = 1.345 gives
/// 95% efficiency at the normal model.
struct HuberLocationScaleFit {
  double mu = 0.0;
  double sigma = 1.0;
  bool converged = false;
  int iterations = 0;
  MatrixXd V;  // sandwich covariance of (mu, sigma), sums convention
};

HuberLocationScaleFit huber_location_scale(const VectorXd& x, double c = 1.345);

/// Wald statistic (mu,sigma) against theta0 with a chi-squared(2) null.
TestReport huber_wald_location_scale(const HuberLocationScaleFit& fit, const VectorXd& theta0);

/// Huber regression M-estimate by IRLS with MAD residual scale; data rows
/// are (y, x_1..x_p).  Sandwich covariance treats the scale as fixed.
struct HuberRegressionFit {
  VectorXd beta;
  double scale = 1.0;
  bool converged = false;
  int iterations = 0;
  MatrixXd V;
};

HuberRegressionFit huber_regression(const MatrixXd& data, double c = 1.345);

TestReport huber_wald_regression(const HuberRegressionFit& fit, const VectorXd& beta0);

}  // namespace scorerule
