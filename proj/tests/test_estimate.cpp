#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scorerule/estimate.hpp"
#include "scorerule/infer.hpp"
#include "test_support.hpp"

using namespace scorerule;

namespace {

VectorXd vec1(double a) {
  VectorXd v(1);
  v[0] = a;
  return v;
}

VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("fit: log score on the normal location model is the sample mean") {
  NormalLocationModel model;
  LogScore rule;
  const MatrixXd data = model.sample(vec1(0.7), 200, 8);
  const FitResult fr = fit(rule, model, data);
  CHECK(fr.converged);
  CHECK(std::abs(fr.theta_hat[0] - data.col(0).mean()) <= 1e-10);
}

TEST_CASE("fit: log score on location-scale hits the closed-form MLE") {
  LocationScaleModel model;
  LogScore rule;
  const MatrixXd data = model.sample(vec2(-0.5, 1.7), 150, 21);
  const FitResult fr = fit(rule, model, data);
  const double mean = data.col(0).mean();
  const double sd = std::sqrt((data.col(0).array() - mean).square().sum() / data.rows());
  CHECK(std::abs(fr.theta_hat[0] - mean) <= 1e-8);
  CHECK(std::abs(fr.theta_hat[1] - sd) <= 1e-8);
}

TEST_CASE("fit: log score on regression equals ordinary least squares") {
  LinearRegressionModel model(3);
  LogScore rule;
  VectorXd beta(3);
  beta << 1.0, 2.0, 3.0;
  const MatrixXd data = model.sample(beta, 40, 33);
  const FitResult fr = fit(rule, model, data);
  const MatrixXd design = data.rightCols(3);
  const VectorXd ols = (design.transpose() * design)
                           .ldlt()
                           .solve(design.transpose() * data.col(0));
  CHECK((fr.theta_hat - ols).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("fit: tsallis estimate is consistent at the model") {
  LocationScaleModel model;
  TsallisScore rule(2.0);
  const MatrixXd data = model.sample(vec2(0.0, 1.0), 10000, 3);
  const FitResult fr = fit(rule, model, data);
  const SandwichEstimate sw = estimate_sandwich(rule, model, data, fr.theta_hat);
  for (int j = 0; j < 2; ++j) {
    const double se = std::sqrt(sw.V(j, j));
    CHECK(std::abs(fr.theta_hat[j] - (j == 0 ? 0.0 : 1.0)) <= 4.0 * se);
  }
}

TEST_CASE("fit: first Bartlett identity holds at the minimizer") {
  LocationScaleModel model;
  const MatrixXd data = model.sample(vec2(0.2, 1.1), 60, 13);
  for (const auto& rule :
       std::vector<std::shared_ptr<const ScoringRule>>{std::make_shared<LogScore>(),
                                                       std::make_shared<TsallisScore>(1.5)}) {
    const FitResult fr = fit(*rule, model, data);
    REQUIRE(fr.converged);
    const VectorXd total = empirical_gradient(*rule, model, data, fr.theta_hat);
    CHECK(total.lpNorm<Eigen::Infinity>() <= 1e-6 * data.rows());
    CHECK(fr.grad_norm_at_min <= 1e-8);
  }
}

TEST_CASE("fit: location-scale equivariance under affine data maps") {
  LocationScaleModel model;
  const MatrixXd data = model.sample(vec2(0.1, 0.9), 80, 17);
  const double a = 2.5, b = -3.0;
  const MatrixXd moved = (data.array() * a + b).matrix();
  for (const auto& rule :
       std::vector<std::shared_ptr<const ScoringRule>>{std::make_shared<LogScore>(),
                                                       std::make_shared<TsallisScore>(1.5)}) {
    const FitResult base = fit(*rule, model, data);
    const FitResult shifted = fit(*rule, model, moved);
    CHECK(std::abs(shifted.theta_hat[0] - (a * base.theta_hat[0] + b)) <= 1e-6);
    CHECK(std::abs(shifted.theta_hat[1] - a * base.theta_hat[1]) <= 1e-6);
  }
}

TEST_CASE("fit: deterministic across calls") {
  EquiCorrelatedNormal model(8);
  TsallisScore rule(1.5);
  const MatrixXd data = model.sample(vec1(0.45), 30, 29);
  const FitResult a = fit(rule, model, data);
  const FitResult b = fit(rule, model, data);
  CHECK(a.theta_hat[0] == b.theta_hat[0]);
  CHECK(a.score_at_min == b.score_at_min);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("fit: input validation") {
  LocationScaleModel model;
  LogScore rule;
  const MatrixXd tiny = model.sample(vec2(0.0, 1.0), 1, 2);
  CHECK_THROWS_AS(fit(rule, model, tiny), ScoreRuleError);  // n < p
  const MatrixXd data = model.sample(vec2(0.0, 1.0), 20, 2);
  CHECK_THROWS_AS(fit(rule, model, data, vec2(0.0, -1.0)), ThetaOutOfDomain);
}

TEST_CASE("fit_profile: freezing at the unconstrained optimum changes nothing") {
  LocationScaleModel model;
  TsallisScore rule(1.5);
  const MatrixXd data = model.sample(vec2(0.3, 1.4), 100, 41);
  const FitResult full = fit(rule, model, data);
  const FitResult prof = fit_profile(rule, model, data, {0}, full.theta_hat.head(1));
  CHECK(std::abs(prof.theta_hat[1] - full.theta_hat[1]) <= 1e-7);
  CHECK(prof.fixed_mask.size() == 2);
  CHECK(prof.fixed_mask[0]);
  CHECK_FALSE(prof.fixed_mask[1]);
}

TEST_CASE("fit_profile: degenerate partitions are rejected") {
  NormalLocationModel scalar_model;
  LogScore rule;
  const MatrixXd data = scalar_model.sample(vec1(0.0), 20, 6);
  CHECK_THROWS_AS(fit_profile(rule, scalar_model, data, {0}, vec1(0.0)), EmptyNuisance);
  CHECK_THROWS_AS(fit_profile(rule, scalar_model, data, {}, VectorXd()), EmptyNuisance);

  LocationScaleModel ls;
  const MatrixXd d2 = ls.sample(vec2(0.0, 1.0), 20, 6);
  CHECK_THROWS_AS(fit_profile(rule, ls, d2, {0, 1}, vec2(0.0, 1.0)), EmptyNuisance);
}

TEST_CASE("fit_profile: frozen location, scale matches a dense grid search") {
  LocationScaleModel model;
  TsallisScore rule(1.5);
  const MatrixXd data = model.sample(vec2(0.0, 1.0), 60, 53);
  const FitResult prof = fit_profile(rule, model, data, {0}, vec1(0.0));

  // two-stage grid oracle on sigma in (0.1, 5)
  const auto objective = [&](double sigma) {
    return empirical_value(rule, model, data, vec2(0.0, sigma));
  };
  double best_sigma = 0.1, best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 4900; ++k) {
    const double sigma = 0.1 + k * 0.001;
    const double val = objective(sigma);
    if (val < best_val) {
      best_val = val;
      best_sigma = sigma;
    }
  }
  for (int k = -1000; k <= 1000; ++k) {
    const double sigma = best_sigma + k * 1e-6;
    const double val = objective(sigma);
    if (val < best_val) {
      best_val = val;
      best_sigma = sigma;
    }
  }
  CHECK(std::abs(prof.theta_hat[1] - best_sigma) <= 1e-5);
}

TEST_CASE("default_init: moment starts per model") {
  LocationScaleModel ls;
  LogScore rule;

  MatrixXd constant(5, 1);
  constant.setConstant(2.0);
  CHECK_THROWS_AS(default_init(rule, ls, constant), DegenerateData);

  const MatrixXd data = ls.sample(vec2(0.0, 1.0), 10000, 3);
  const VectorXd init = default_init(rule, ls, data);
  CHECK(std::abs(init[0]) <= 0.05);
  CHECK(std::abs(init[1] - 1.0) <= 0.05);

  EquiCorrelatedNormal ec(10);
  for (int trial = 0; trial < 20; ++trial) {
    const double rho = -0.1 + 1.05 * double(trial) / 20.0;
    if (rho <= -1.0 / 9.0 || rho >= 1.0) continue;
    const MatrixXd sample = ec.sample(vec1(rho), 30, 100 + trial);
    const VectorXd r0 = default_init(rule, ec, sample);
    CHECK(r0[0] > -1.0 / 9.0);
    CHECK(r0[0] < 1.0);
  }
}
