#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "scorerule/estimate.hpp"
#include "scorerule/numdiff.hpp"
#include "scorerule/quadrature.hpp"
#include "scorerule/rules.hpp"
#include "test_support.hpp"

using namespace scorerule;
using scorerule::testing::rel_close;

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

double phi(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

TEST_CASE("log score: standard normal value and gradient") {
  NormalLocationModel model;
  LogScore rule;
  // -log phi(0) = log(sqrt(2 pi)), cross-checked against the model's own
  // log-density path
  const double value = rule.value(model, vec1(0.0), vec1(0.0));
  CHECK(value == doctest::Approx(0.9189385332046727).epsilon(1e-12));
  CHECK(value == doctest::Approx(-model.log_density(vec1(0.0), vec1(0.0))));

  // s = grad of -log phi(x - theta) wrt theta is -(x - theta)
  const VectorXd g = rule.gradient(model, vec1(1.0), vec1(0.0));
  CHECK(g[0] == doctest::Approx(-1.0).epsilon(1e-12));
  const VectorXd g_fd = central_gradient(
      [&](const VectorXd& t) { return rule.value(model, vec1(1.0), t); }, vec1(0.0));
  CHECK(g[0] == doctest::Approx(g_fd[0]).epsilon(1e-7));
}

TEST_CASE("log score: unit density scores zero, zero density throws") {
  testing::UniformUnitModel model;
  LogScore rule;
  CHECK(rule.value(model, vec1(0.25), vec1(0.0)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(rule.value(model, vec1(1.5), vec1(0.0)), NonPositiveDensity);
}

TEST_CASE("brier score: displayed arithmetic") {
  CHECK(brier_score(1, vec2(0.3, 0.7)) == doctest::Approx(0.18).epsilon(1e-12));

  VectorXd point_mass = VectorXd::Zero(3);
  point_mass[2] = 1.0;
  CHECK(brier_score(2, point_mass) == doctest::Approx(0.0));

  const VectorXd uniform4 = VectorXd::Constant(4, 0.25);
  CHECK(brier_score(0, uniform4) == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS(brier_score(0, vec2(0.6, 0.6)), InvalidSimplexPoint);
  CHECK_THROWS_AS(brier_score(0, vec2(-0.2, 1.2)), InvalidSimplexPoint);
  CHECK_THROWS_AS(brier_score(5, uniform4), InvalidSimplexPoint);
}

TEST_CASE("brier score: propriety on a 4-category space") {
  // expected score under p is minimized at q = p over a forecast grid
  VectorXd p(4);
  p << 0.4, 0.3, 0.2, 0.1;
  const auto expected_score = [&](const VectorXd& q) {
    double s = 0.0;
    for (int x = 0; x < 4; ++x) s += p[x] * brier_score(x, q);
    return s;
  };
  const double at_truth = expected_score(p);
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    VectorXd q(4);
    double total = 0.0;
    for (int j = 0; j < 4; ++j) total += (q[j] = rng.next_open01());
    q /= total;
    CHECK(expected_score(q) >= at_truth - 1e-12);
  }
}

TEST_CASE("tsallis score: gamma must exceed 1") {
  CHECK_THROWS_AS(TsallisScore(1.0), ScoreRuleError);
  CHECK_THROWS_AS(TsallisScore(0.5), ScoreRuleError);
}

TEST_CASE("tsallis score: N(0,1) at gamma=2 against the quadrature oracle") {
  NormalLocationModel model;
  TsallisScore rule(2.0);
  // oracle: integral of phi^2 by adaptive quadrature
  const double int_phi2 = integrate([&](double y) { return phi(y) * phi(y); },
                                    -std::numeric_limits<double>::infinity(),
                                    std::numeric_limits<double>::infinity(), 1e-12);
  const double expected = (2.0 - 1.0) * int_phi2 - 2.0 * phi(0.0);
  const double value = rule.value(model, vec1(0.0), vec1(0.0));
  CHECK(value == doctest::Approx(expected).epsilon(1e-10));
  CHECK(value == doctest::Approx(-0.5157897690289873).epsilon(1e-9));
}

TEST_CASE("tsallis score: location-scale display") {
  // S(x, theta) = -gamma p(x;theta)^(gamma-1)
  //               + (gamma-1)/sigma^(gamma-1) * integral p0^gamma
  LocationScaleModel model;
  Rng rng(5);
  for (double gamma : {2.0, 1.5, 1.25}) {
    TsallisScore rule(gamma);
    const double c0 = integrate([&](double y) { return std::pow(phi(y), gamma); }, -40.0,
                                40.0, 1e-12);
    for (int trial = 0; trial < 5; ++trial) {
      const double mu = 2.0 * rng.next_normal();
      const double sigma = 0.5 + rng.next_open01();
      const double x = mu + 3.0 * rng.next_normal();
      const VectorXd theta = vec2(mu, sigma);
      const double p = model.density(vec1(x), theta);
      const double display =
          -gamma * std::pow(p, gamma - 1.0) +
          (gamma - 1.0) / std::pow(sigma, gamma - 1.0) * c0;
      CHECK(rule.value(model, vec1(x), theta) == doctest::Approx(display).epsilon(1e-9));
    }
  }
}

TEST_CASE("tsallis score: constant density on the unit interval") {
  testing::UniformUnitModel model;
  for (double gamma : {1.5, 2.0, 3.0}) {
    TsallisScore rule(gamma);
    CHECK(rule.value(model, vec1(0.3), vec1(0.0)) == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("tsallis score: quadrature fallback matches the closed form") {
  auto base = std::make_shared<NormalLocationModel>();
  testing::NoClosedFormModel quad_model(base);
  TsallisScore rule(1.5);
  const VectorXd theta = vec1(0.7);
  const VectorXd x = vec1(1.3);
  CHECK(rule.value(quad_model, x, theta) ==
        doctest::Approx(rule.value(*base, x, theta)).epsilon(1e-8));
  CHECK(rule.gradient(quad_model, x, theta)[0] ==
        doctest::Approx(rule.gradient(*base, x, theta)[0]).epsilon(1e-7));
}

TEST_CASE("bregman score: 1/t gauge recovers the efficient score function") {
  BregmanScore rule([](double t) { return 1.0 / t; }, "1/t");
  LogScore log_rule;

  NormalLocationModel location;
  const VectorXd g1 = rule.gradient(location, vec1(0.8), vec1(0.2));
  const VectorXd g2 = log_rule.gradient(location, vec1(0.8), vec1(0.2));
  CHECK(g1[0] == doctest::Approx(g2[0]).epsilon(1e-9));

  // with a scale parameter the expectation term integrates d/dtheta of 1 = 0
  LocationScaleModel ls;
  const VectorXd theta = vec2(0.3, 1.4);
  const VectorXd gb = rule.gradient(ls, vec1(1.1), theta);
  const VectorXd gl = log_rule.gradient(ls, vec1(1.1), theta);
  CHECK(gb[0] == doctest::Approx(gl[0]).epsilon(1e-6));
  CHECK(gb[1] == doctest::Approx(gl[1]).epsilon(1e-6));
}

TEST_CASE("bregman score: power gauge reproduces the tsallis gradient") {
  const double gamma = 1.5;
  BregmanScore rule(
      [gamma](double t) { return gamma * (gamma - 1.0) * std::pow(t, gamma - 2.0); },
      "power");
  TsallisScore tsallis(gamma);
  LocationScaleModel model;
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const VectorXd theta = vec2(rng.next_normal(), 0.5 + rng.next_open01());
    const VectorXd x = vec1(theta[0] + 2.0 * rng.next_normal());
    const VectorXd gb = rule.gradient(model, x, theta);
    const VectorXd gt = tsallis.gradient(model, x, theta);
    for (int j = 0; j < 2; ++j) {
      CHECK(rel_close(gb[j], gt[j], 1e-6));
    }
  }
}

TEST_CASE("bregman score: brier gauge on a location model") {
  // alpha == 2: lambda(0,0) = 2 * dp/dtheta = -2 f'(0) = 0 by symmetry
  BregmanScore rule([](double) { return 2.0; }, "alpha=2");
  NormalLocationModel model;
  const VectorXd g = rule.gradient(model, vec1(0.0), vec1(0.0));
  CHECK(g[0] == doctest::Approx(0.0).epsilon(1e-12));

  // score value: -2 p(x) + 2 + integral p^2 (psi' anchored at 1)
  LocationScaleModel ls;
  const VectorXd theta = vec2(0.4, 1.3);
  const double p = ls.density(vec1(1.0), theta);
  const double int_p2 = 1.0 / (2.0 * theta[1] * std::sqrt(std::numbers::pi));
  CHECK(rule.value(ls, vec1(1.0), theta) ==
        doctest::Approx(-2.0 * p + 2.0 + int_p2).epsilon(1e-7));
}

TEST_CASE("bregman score: negative gauge rejected") {
  BregmanScore rule([](double) { return -1.0; }, "negative");
  NormalLocationModel model;
  CHECK_THROWS_AS(rule.gradient(model, vec1(0.1), vec1(0.0)), GaugeNegative);
}

TEST_CASE("hyvarinen score: normal closed forms") {
  LocationScaleModel model;
  HyvarinenScore rule;
  // x = mu: 2 (-1/sigma^2) + 0
  CHECK(rule.value(model, vec1(0.0), vec2(0.0, 1.0)) == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(rule.value(model, vec1(3.0), vec2(3.0, 2.0)) == doctest::Approx(-0.5).epsilon(1e-9));
  // N(0,1), x=1: -2 + 1
  CHECK(rule.value(model, vec1(1.0), vec2(0.0, 1.0)) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("hyvarinen score: invariant to scaling the density by a constant") {
  auto base = std::make_shared<LocationScaleModel>();
  testing::ScaledDensityModel scaled(base, 7.0);
  HyvarinenScore rule;
  const VectorXd theta = vec2(0.3, 1.7);
  for (double x : {-2.0, 0.0, 0.4, 3.5}) {
    // identical bitwise: the analytic x-derivative path never sees the factor
    CHECK(rule.value(*base, vec1(x), theta) == rule.value(scaled, vec1(x), theta));
  }
}

TEST_CASE("hyvarinen score: finite-difference x-derivative fallback") {
  auto base = std::make_shared<LocationScaleModel>();
  testing::NoClosedFormModel fd_model(base);  // hides analytic x-derivatives too
  HyvarinenScore rule;
  const VectorXd theta = vec2(-0.2, 0.9);
  for (double x : {-1.0, 0.5, 2.0}) {
    CHECK(rel_close(rule.value(fd_model, vec1(x), theta), rule.value(*base, vec1(x), theta),
                    1e-5));
  }
}

TEST_CASE("hyvarinen score: non-smooth density rejected") {
  testing::UniformUnitModel model;
  HyvarinenScore rule;
  CHECK_THROWS_AS(rule.value(model, vec1(1e-8), vec1(0.0)), NonSmoothDensity);
}

TEST_CASE("composite score: a single component is the component") {
  auto sub = std::make_shared<NormalLocationModel>();
  auto log_rule = std::make_shared<LogScore>();
  std::vector<CompositeScore::Component> comps(1);
  comps[0].extract = [](const VectorXd& x) { return x; };
  comps[0].submodel = sub;
  comps[0].rule = log_rule;
  CompositeScore composite(std::move(comps));
  const VectorXd x = vec1(0.7);
  const VectorXd theta = vec1(0.1);
  CHECK(composite.value(*sub, x, theta) == log_rule->value(*sub, x, theta));
  CHECK(composite.gradient(*sub, x, theta)[0] == log_rule->gradient(*sub, x, theta)[0]);
  CHECK_THROWS_AS(CompositeScore({}), ScoreRuleError);
}

TEST_CASE("composite score: pairwise log score matches the sufficient-statistic form") {
  const int q = 5;
  const int n = 7;
  EquiCorrelatedNormal model(q);
  CompositeScore pairwise = make_pairwise_log_score(q);
  const VectorXd theta = vec1(0.4);
  const MatrixXd data = model.sample(theta, n, 99);

  // empirical composite value = -pairwise loglik + (theta-free) 2pi constant
  const double scorer = empirical_value(pairwise, model, data, theta);
  const double display = pairwise_loglik(data, theta[0]);
  const double log2pi_const = n * (q * (q - 1) / 2) * std::log(2.0 * std::numbers::pi);
  CHECK(scorer == doctest::Approx(-display + log2pi_const).epsilon(1e-10));

  // gradient agrees with the differentiated display
  const double g_display = central_d1([&](double r) { return pairwise_loglik(data, r); },
                                      theta[0]);
  const double g_composite = empirical_gradient(pairwise, model, data, theta)[0];
  CHECK(rel_close(g_composite, -g_display, 1e-8));
}

TEST_CASE("composite score: independent coordinates reproduce the joint log score") {
  auto joint = std::make_shared<testing::IndependentPairModel>();
  auto log_rule = std::make_shared<LogScore>();
  std::vector<CompositeScore::Component> comps(2);
  for (int j = 0; j < 2; ++j) {
    comps[j].extract = [j](const VectorXd& x) { return vec1(x[j]); };
    comps[j].submodel = std::make_shared<testing::PairMarginModel>(j);
    comps[j].rule = log_rule;
  }
  CompositeScore composite(std::move(comps));
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const VectorXd x = vec2(rng.next_normal(), rng.next_normal());
    const VectorXd theta = vec2(rng.next_normal(), rng.next_normal());
    CHECK(composite.value(*joint, x, theta) ==
          doctest::Approx(log_rule->value(*joint, x, theta)).epsilon(1e-12));
    const VectorXd gc = composite.gradient(*joint, x, theta);
    const VectorXd gj = log_rule->gradient(*joint, x, theta);
    CHECK(gc[0] == doctest::Approx(gj[0]).epsilon(1e-12));
    CHECK(gc[1] == doctest::Approx(gj[1]).epsilon(1e-12));
  }
}

TEST_CASE("gradient consistency: analytic vs central differences") {
  LocationScaleModel ls;
  EquiCorrelatedNormal ec(4);
  LinearRegressionModel reg(2);
  Rng rng(21);

  const auto check_rule = [&](const ScoringRule& rule, const ParametricModel& model,
                              const VectorXd& theta) {
    const MatrixXd data = model.sample(theta, 1, rng.next_u64());
    const VectorXd x = data.row(0).transpose();
    const VectorXd g = rule.gradient(model, x, theta);
    const VectorXd g_fd = central_gradient(
        [&](const VectorXd& t) { return rule.value(model, x, t); }, theta);
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      CHECK(std::abs(g[j] - g_fd[j]) <=
            1e-5 * std::max(1.0, g_fd.lpNorm<Eigen::Infinity>()));
    }
  };

  LogScore log_rule;
  TsallisScore ts(1.5);
  for (int trial = 0; trial < 25; ++trial) {
    const VectorXd theta_ls = vec2(2.0 * rng.next_normal(), 0.4 + rng.next_open01());
    check_rule(log_rule, ls, theta_ls);
    check_rule(ts, ls, theta_ls);

    const VectorXd rho = vec1(-0.2 + 1.1 * rng.next_open01());
    check_rule(log_rule, ec, rho);
    check_rule(ts, ec, rho);

    VectorXd beta = vec2(rng.next_normal(), rng.next_normal());
    check_rule(log_rule, reg, beta);
    check_rule(ts, reg, beta);
  }
}

TEST_CASE("propriety (sampled): expected score minimized at the truth") {
  LocationScaleModel model;
  const VectorXd theta0 = vec2(0.3, 1.2);
  const int draws = 100000;
  const MatrixXd data = model.sample(theta0, draws, 4242);

  std::vector<std::shared_ptr<const ScoringRule>> rules = {
      std::make_shared<LogScore>(), std::make_shared<TsallisScore>(1.5),
      std::make_shared<BregmanScore>([](double) { return 2.0; }, "alpha=2"),
      std::make_shared<HyvarinenScore>()};
  for (const auto& rule : rules) {
    CAPTURE(rule->name());
    for (int coord = 0; coord < 2; ++coord) {
      const double step = 0.1;
      double best = std::numeric_limits<double>::infinity();
      int best_k = 0;
      for (int k = -3; k <= 3; ++k) {
        VectorXd theta = theta0;
        theta[coord] += step * k;
        double mean = 0.0;
        const double shared = rule->theta_value(model, theta);
        for (int i = 0; i < draws; ++i) {
          mean += rule->x_value(model, data.row(i).transpose(), theta);
        }
        mean = mean / draws + shared;
        if (mean < best) {
          best = mean;
          best_k = k;
        }
      }
      CHECK(std::abs(best_k) <= 1);  // within one grid step of theta0
    }
  }
}

TEST_CASE("estimating-function unbiasedness (sampled)") {
  LocationScaleModel model;
  const VectorXd theta0 = vec2(-0.4, 0.8);
  const int draws = 100000;
  const MatrixXd data = model.sample(theta0, draws, 777);

  std::vector<std::shared_ptr<const ScoringRule>> rules = {
      std::make_shared<LogScore>(), std::make_shared<TsallisScore>(2.0),
      std::make_shared<TsallisScore>(1.25)};
  for (const auto& rule : rules) {
    CAPTURE(rule->name());
    const MatrixXd grads = per_observation_gradients(*rule, model, data, theta0);
    for (int j = 0; j < 2; ++j) {
      const double mean = grads.col(j).mean();
      const double sd = std::sqrt((grads.col(j).array() - mean).square().sum() / draws);
      CHECK(std::abs(mean) <= 4.0 * sd / std::sqrt(double(draws)));
    }
  }
}
