#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "scorerule/models.hpp"
#include "scorerule/numdiff.hpp"
#include "scorerule/quadrature.hpp"
#include "test_support.hpp"

using namespace scorerule;
using scorerule::testing::rel_close;

namespace {

VectorXd vec1(double a) {
  VectorXd v(1);
  v[0] = a;
  return v;
}

/// Generic multivariate-normal density oracle via a dense covariance solve.
double mvn_density_oracle(const VectorXd& x, const MatrixXd& cov) {
  const Eigen::LLT<MatrixXd> llt(cov);
  const VectorXd half = llt.matrixL().solve(x);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  }
  const double k = double(x.size());
  return std::exp(-0.5 * half.squaredNorm() -
                  0.5 * (k * std::log(2.0 * std::numbers::pi) + log_det));
}

MatrixXd equicorr_cov(int q, double rho) {
  return MatrixXd::Constant(q, q, rho) + (1.0 - rho) * MatrixXd::Identity(q, q);
}

}  // namespace

TEST_CASE("equicorr density: closed form against the generic MVN oracle") {
  VectorXd x0 = VectorXd::Zero(2);
  CHECK(equicorr_density(x0, 0.0, 2) ==
        doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-12));

  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const int q = (trial % 2 == 0) ? 10 : 4;
    const double lo = -1.0 / (q - 1.0);
    const double rho = lo + (1.0 - lo) * rng.next_open01() * 0.98 + 0.005;
    VectorXd x(q);
    for (int j = 0; j < q; ++j) x[j] = 1.5 * rng.next_normal();
    const double ours = equicorr_density(x, rho, q);
    const double oracle = mvn_density_oracle(x, equicorr_cov(q, rho));
    CHECK(rel_close(ours, oracle, 1e-10));
  }

  VectorXd z10 = VectorXd::Zero(10);
  CHECK(rel_close(equicorr_density(z10, 0.5, 10),
                  mvn_density_oracle(z10, equicorr_cov(10, 0.5)), 1e-10));
}

TEST_CASE("equicorr density: domain boundary") {
  VectorXd x = VectorXd::Zero(3);
  CHECK(std::isfinite(equicorr_density(x, 1.0 - 1e-12, 3)));
  CHECK_THROWS_AS(equicorr_density(x, 1.0, 3), RhoOutOfDomain);
  CHECK_THROWS_AS(equicorr_density(x, -0.5, 3), RhoOutOfDomain);  // lo = -1/2
  CHECK_THROWS_AS(equicorr_density(x, 1.2, 3), RhoOutOfDomain);
}

TEST_CASE("equicorr density: integrates to one for q=2,3") {
  for (int q : {2, 3}) {
    for (double rho : {-0.3, 0.25, 0.6}) {
      if (rho <= -1.0 / (q - 1.0)) continue;
      EquiCorrelatedNormal model(q);
      const double lim = 8.5;
      double total;
      if (q == 2) {
        total = integrate(
            [&](double x1) {
              return integrate(
                  [&](double x2) {
                    VectorXd x(2);
                    x << x1, x2;
                    return equicorr_density(x, rho, 2);
                  },
                  -lim, lim, 1e-9);
            },
            -lim, lim, 1e-7);
      } else {
        total = integrate(
            [&](double x1) {
              return integrate(
                  [&](double x2) {
                    return integrate(
                        [&](double x3) {
                          VectorXd x(3);
                          x << x1, x2, x3;
                          return equicorr_density(x, rho, 3);
                        },
                        -lim, lim, 1e-8);
                  },
                  -lim, lim, 1e-7);
            },
            -lim, lim, 1e-5);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
}

TEST_CASE("scalar models: densities integrate to one") {
  Rng rng(9);
  const auto check_normalized = [&](const ParametricModel& model, const VectorXd& theta) {
    const Interval sup = model.obs_support();
    VectorXd x(1);
    const double total = integrate(
        [&](double y) {
          x[0] = y;
          return model.density(x, theta);
        },
        sup.lo, sup.hi, 1e-8);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  };
  for (int trial = 0; trial < 3; ++trial) {
    VectorXd theta(2);
    theta << 2.0 * rng.next_normal(), 0.4 + 2.0 * rng.next_open01();
    check_normalized(LocationScaleModel(normal_center()), theta);
    check_normalized(LocationScaleModel(logistic_center()), theta);
    check_normalized(LocationScaleModel(cauchy_center()), theta);
    check_normalized(NormalLocationModel(1.0 + rng.next_open01()), theta.head(1));
  }
}

TEST_CASE("model theta-gradients match finite differences") {
  Rng rng(31);
  const auto check_grad = [&](const ParametricModel& model, const VectorXd& theta) {
    const MatrixXd data = model.sample(theta, 3, rng.next_u64());
    for (int i = 0; i < 3; ++i) {
      const VectorXd x = data.row(i).transpose();
      const VectorXd g = model.grad_log_density(x, theta);
      const VectorXd g_fd = central_gradient(
          [&](const VectorXd& t) { return model.log_density(x, t); }, theta);
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        CHECK(std::abs(g[j] - g_fd[j]) <= 1e-5 * std::max(1.0, std::abs(g_fd[j])));
      }
    }
  };
  VectorXd theta2(2);
  theta2 << 0.7, 1.8;
  check_grad(LocationScaleModel(normal_center()), theta2);
  check_grad(LocationScaleModel(logistic_center()), theta2);
  check_grad(LocationScaleModel(cauchy_center()), theta2);
  check_grad(NormalLocationModel(), vec1(0.4));
  check_grad(EquiCorrelatedNormal(6), vec1(0.35));
  check_grad(EquiCorrelatedNormal(6), vec1(-0.15));
  check_grad(BivariateNormalCorr(), vec1(0.55));
  VectorXd beta(3);
  beta << 1.0, 2.0, 3.0;
  check_grad(LinearRegressionModel(3), beta);
}

TEST_CASE("tsallis integrals: closed forms against quadrature") {
  Rng rng(77);
  VectorXd x(1);
  for (double gamma : {1.25, 1.5, 2.0}) {
    LocationScaleModel ls;
    VectorXd theta(2);
    theta << rng.next_normal(), 0.6 + rng.next_open01();
    const double quad = integrate(
        [&](double y) {
          x[0] = y;
          return std::pow(ls.density(x, theta), gamma);
        },
        -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
        1e-11);
    const auto closed = ls.tsallis_integral(theta, gamma);
    REQUIRE(closed.has_value());
    CHECK(rel_close(closed->value, quad, 1e-9));
    // gradient of the integral against finite differences
    const VectorXd g_fd = central_gradient(
        [&](const VectorXd& t) { return ls.tsallis_integral(t, gamma)->value; }, theta);
    CHECK(rel_close(closed->grad[1], g_fd[1], 1e-7));
    CHECK(std::abs(closed->grad[0]) < 1e-14);
  }

  // bivariate margin closed form via 2-d quadrature
  BivariateNormalCorr pair;
  const double gamma = 1.5;
  const double rho = 0.45;
  const double quad2 = integrate(
      [&](double x1) {
        return integrate(
            [&](double x2) {
              VectorXd xx(2);
              xx << x1, x2;
              return std::pow(pair.density(xx, vec1(rho)), gamma);
            },
            -9.0, 9.0, 1e-10);
      },
      -9.0, 9.0, 1e-8);
  const auto closed2 = pair.tsallis_integral(vec1(rho), gamma);
  REQUIRE(closed2.has_value());
  CHECK(rel_close(closed2->value, quad2, 1e-6));

  // equicorr closed form consistency with the q=2 bivariate one
  EquiCorrelatedNormal ec2(2);
  CHECK(rel_close(ec2.tsallis_integral(vec1(rho), gamma)->value, closed2->value, 1e-12));
}

TEST_CASE("pairwise loglik: displayed formula") {
  // n=1, q=2, x=(1,-1): SS_W=2, SS_B=0
  MatrixXd data(1, 2);
  data << 1.0, -1.0;
  for (double rho : {-0.6, 0.0, 0.3, 0.8}) {
    const double expected = -0.5 * std::log(1.0 - rho * rho) - (1.0 + rho) / (1.0 - rho * rho);
    CHECK(pairwise_loglik(data, rho) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(pairwise_loglik(data, 1.0), RhoOutOfDomain);

  // rho = 0: the log term vanishes
  EquiCorrelatedNormal model(6);
  const MatrixXd sample6 = model.sample(vec1(0.4), 9, 5);
  double ss_w = 0.0, ss_b = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double m = sample6.row(i).mean();
    ss_w += (sample6.row(i).array() - m).square().sum();
    ss_b += 36.0 * m * m;
  }
  const double q = 6.0;
  CHECK(pairwise_loglik(sample6, 0.0) ==
        doctest::Approx(-(q - 1.0) / 2.0 * ss_w - (q - 1.0) / 2.0 * ss_b / q).epsilon(1e-12));

  // gradient against finite differences
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    const double rho = -0.15 + rng.next_open01();
    const double g = central_d1([&](double r) { return pairwise_loglik(sample6, r); }, rho);
    const double h = 1e-6;
    const double g2 =
        (pairwise_loglik(sample6, rho + h) - pairwise_loglik(sample6, rho - h)) / (2.0 * h);
    CHECK(rel_close(g, g2, 1e-7));
  }
}

TEST_CASE("samplers: determinism under a fixed seed") {
  LocationScaleModel ls;
  VectorXd theta(2);
  theta << 0.5, 2.0;
  const MatrixXd a = ls.sample(theta, 100, 42);
  const MatrixXd b = ls.sample(theta, 100, 42);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  const MatrixXd c = ls.sample(theta, 100, 43);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("samplers: law of large numbers for the normal model") {
  NormalLocationModel model;
  const int n = 1000000;
  const MatrixXd data = model.sample(vec1(0.0), n, 7);
  const double mean = data.col(0).mean();
  const double var = (data.col(0).array() - mean).square().sum() / n;
  CHECK(std::abs(mean) <= 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) <= 0.01);
}

TEST_CASE("samplers: equicorr correlation structure") {
  EquiCorrelatedNormal model(5);
  const double rho = 0.37;
  const int n = 200000;
  const MatrixXd data = model.sample(vec1(rho), n, 99);
  const VectorXd mean = data.colwise().mean();
  const MatrixXd centered = data.rowwise() - mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / double(n);
  for (int r = 0; r < 5; ++r) {
    CHECK(cov(r, r) == doctest::Approx(1.0).epsilon(0.02));
    for (int s = r + 1; s < 5; ++s) {
      CHECK(cov(r, s) == doctest::Approx(rho).epsilon(0.03));
    }
  }
}

TEST_CASE("samplers: location-scale affine equivariance") {
  LocationScaleModel model(logistic_center());
  VectorXd std_theta(2), shifted(2);
  std_theta << 0.0, 1.0;
  shifted << -1.3, 2.5;
  const MatrixXd base = model.sample(std_theta, 50, 4);
  const MatrixXd moved = model.sample(shifted, 50, 4);
  CHECK((moved - (base.array() * 2.5 - 1.3).matrix()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("samplers: theta outside the domain is rejected") {
  LocationScaleModel model;
  VectorXd bad(2);
  bad << 0.0, -1.0;
  CHECK_THROWS_AS(model.sample(bad, 10, 1), ThetaOutOfDomain);
}

TEST_CASE("regression sampler: design layout and response law") {
  LinearRegressionModel model(3);
  VectorXd beta(3);
  beta << 1.0, 2.0, 3.0;
  const int n = 40;
  const MatrixXd data = model.sample(beta, n, 11);
  REQUIRE(data.cols() == 4);
  for (int i = 0; i < n; ++i) {
    CHECK(data(i, 1) == 1.0);
    CHECK(data(i, 3) == double(i + 1));
  }
  // the z column differs across seeds (redrawn per replication)
  const MatrixXd other = model.sample(beta, n, 12);
  CHECK((data.col(2) - other.col(2)).cwiseAbs().maxCoeff() > 0.0);
  // residuals have unit-ish variance
  const VectorXd resid = data.col(0) - data.rightCols(3) * beta;
  CHECK(std::abs(resid.mean()) <= 4.0 / std::sqrt(double(n)));
}

TEST_CASE("contamination mixture: indicator frequency and design reuse") {
  auto core = std::make_shared<LocationScaleModel>();
  auto contaminant = std::make_shared<LocationScaleModel>();
  ContaminationMixture mix;
  mix.core = core;
  mix.core_theta = VectorXd(2);
  mix.core_theta << 0.0, 1.0;
  mix.contaminant = contaminant;
  mix.contaminant_theta = VectorXd(2);
  mix.contaminant_theta << 0.0, 10.0;
  mix.eps = 0.05;

  const int n = 1000000;
  std::vector<std::uint8_t> indicators;
  const MatrixXd data = mix.sample(n, 3, &indicators);
  double frac = 0.0;
  for (auto b : indicators) frac += b;
  frac /= n;
  CHECK(std::abs(frac - 0.05) <= 4.0 * std::sqrt(0.05 * 0.95 / n));
  CHECK(data.rows() == n);

  // determinism
  const MatrixXd again = mix.sample(1000, 3);
  const MatrixXd again2 = mix.sample(1000, 3);
  CHECK((again - again2).cwiseAbs().maxCoeff() == 0.0);

  // regression mixture: contaminated rows keep the core design
  auto reg_core = std::make_shared<LinearRegressionModel>(3, 1.0);
  auto reg_cont = std::make_shared<LinearRegressionModel>(3, 10.0);
  VectorXd beta(3);
  beta << 1.0, 2.0, 3.0;
  ContaminationMixture reg_mix{reg_core, beta, reg_cont, beta, 0.3};
  std::vector<std::uint8_t> reg_ind;
  const MatrixXd reg_data = reg_mix.sample(30, 5, &reg_ind);
  const MatrixXd clean = reg_core->sample(beta, 30, Rng::derive_seed(5, 0));
  CHECK((reg_data.rightCols(3) - clean.rightCols(3)).cwiseAbs().maxCoeff() == 0.0);
  bool any_contaminated = false;
  for (int i = 0; i < 30; ++i) {
    if (reg_ind[i]) {
      any_contaminated = true;
      CHECK(reg_data(i, 0) != clean(i, 0));
    } else {
      CHECK(reg_data(i, 0) == clean(i, 0));
    }
  }
  CHECK(any_contaminated);
}
