#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scorerule/estimate.hpp"
#include "scorerule/models.hpp"
#include "scorerule/rules.hpp"

namespace scorerule {

/// Sums-over-observations estimates of the Godambe sandwich components:
/// J = sum s s^T, K = sum d s / d theta^T, V = K^-1 J K^-T, G = V^-1.
struct SandwichEstimate {
  MatrixXd J;
  MatrixXd K;
  MatrixXd V;
  MatrixXd G;
  int p() const { return static_cast<int>(J.rows()); }
};

enum class StatisticName {
  Wald,
  Score,
  Ratio,
  RatioAdj,
  RatioM1,
  RatioInv,
  ProfileWald,
  ProfileScore,
  ProfileRatio,
  ProfileRatioM1,
  ProfileRatioInv,
};

std::string to_string(StatisticName name);

/// Reference null law: chi-squared or a weighted sum of chi-squared(1)s.
struct NullLaw {
  enum class Kind { ChiSq, MixtureChiSq } kind = Kind::ChiSq;
  int df = 1;
  VectorXd weights;  // mixture only

  double p_value(double stat) const;
  double quantile(double prob) const;
};

struct TestReport {
  StatisticName statistic_name = StatisticName::Wald;
  double value = 0.0;
  NullLaw null_law;
  double p_value = 1.0;
  bool zero_score_flag = false;  // ratio_inv evaluated where s(theta0) ~ 0

  bool covered(double level) const { return p_value > 1.0 - level; }
};

struct InferOptions {
  /// Where J-hat and K-hat entering the ratio adjustments are evaluated.
  enum class MatrixAt { ThetaHat, Theta0 } matrix_at = MatrixAt::ThetaHat;
};

SandwichEstimate estimate_sandwich(const ScoringRule& rule, const ParametricModel& model,
                                   const MatrixXd& data, const VectorXd& theta_hat);

TestReport wald_stat(const FitResult& fit, const SandwichEstimate& sandwich,
                     const VectorXd& theta0);

TestReport score_stat(const ScoringRule& rule, const ParametricModel& model,
                      const MatrixXd& data, const VectorXd& theta0,
                      const SandwichEstimate& sandwich_at_theta0);

/// Clamped ratio value 2{S(theta0) - S(theta_hat)}; negative beyond the
/// rounding allowance signals a non-converged fit and throws.
double ratio_statistic_value(const ScoringRule& rule, const ParametricModel& model,
                             const MatrixXd& data, const VectorXd& theta0,
                             const FitResult& fit);

/// Scoring-rule ratio statistic 2{S(theta0) - S(theta_hat)} with the
/// eigenvalue-weighted mixture null.  Passing `sandwich` (at theta_hat)
/// avoids recomputing it.
TestReport ratio_stat(const ScoringRule& rule, const ParametricModel& model,
                      const MatrixXd& data, const VectorXd& theta0, const FitResult& fit,
                      const SandwichEstimate* sandwich = nullptr);

/// Scalar-parameter calibration: W / (J/K) with a chi-squared(1) null.
TestReport ratio_adj_scalar(const TestReport& ratio_report, const SandwichEstimate& sandwich);

/// First-moment calibration: W / mean(mu_j) with a chi-squared(p) null.
TestReport ratio_m1(const TestReport& ratio_report, const SandwichEstimate& sandwich);

/// Quadratic-form rescaling A(theta0) * W with a chi-squared(p) null.
TestReport ratio_inv(const ScoringRule& rule, const ParametricModel& model,
                     const MatrixXd& data, const VectorXd& theta0, const FitResult& fit,
                     const SandwichEstimate& sandwich);

/// Profile statistics for the block psi at psi0: Wald, score, ratio and the
/// two ratio calibrations, with their reference null laws.
std::vector<TestReport> profile_stats(const ScoringRule& rule, const ParametricModel& model,
                                      const MatrixXd& data, const std::vector<int>& psi_indices,
                                      const VectorXd& psi0);

/// Eigenvalues of J K^-1 (real parts; complex parts beyond tolerance are an
/// error, as is any nonpositive eigenvalue downstream).
VectorXd sandwich_eigenvalues(const MatrixXd& J, const MatrixXd& K);

/// prob-quantile of sum_j w_j Z_j^2 by fixed-seed Monte Carlo.
double mixture_chisq_quantile(const VectorXd& weights, double prob);
/// P(sum_j w_j Z_j^2 > x) by the same fixed-seed Monte Carlo.
double mixture_chisq_survival(const VectorXd& weights, double x);

}  // namespace scorerule
