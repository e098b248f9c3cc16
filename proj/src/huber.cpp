#include "scorerule/huber.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace scorerule {

namespace {

double huber_psi(double u, double c) { return std::clamp(u, -c, c); }
double huber_psi_prime(double u, double c) { return std::abs(u) <= c ? 1.0 : 0.0; }

/// E[psi_c(Z)^2] under the standard normal, the Proposal-2 consistency
/// constant.
double proposal2_beta(double c) {
  const boost::math::normal_distribution<double> n01(0.0, 1.0);
  const double phi_c = boost::math::pdf(n01, c);
  const double big_phi_c = boost::math::cdf(n01, c);
  return (2.0 * big_phi_c - 1.0) - 2.0 * c * phi_c + 2.0 * c * c * (1.0 - big_phi_c);
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (v[mid - 1] + hi);
}

double mad_scale(const std::vector<double>& v, double center) {
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - center);
  return 1.4826 * median_of(std::move(dev));
}

}  // namespace

HuberLocationScaleFit huber_location_scale(const VectorXd& x, double c) {
  const int n = static_cast<int>(x.size());
  std::vector<double> v(x.data(), x.data() + n);
  HuberLocationScaleFit fit;
  fit.mu = median_of(v);
  fit.sigma = mad_scale(v, fit.mu);
  if (fit.sigma <= 0.0) throw DegenerateData("huber: zero MAD");
  const double beta_c = proposal2_beta(c);

  for (int iter = 0; iter < 200; ++iter) {
    // location step: weighted mean with w = psi(u)/u
    double sw = 0.0, swx = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = (x[i] - fit.mu) / fit.sigma;
      const double w = (u == 0.0) ? 1.0 : huber_psi(u, c) / u;
      sw += w;
      swx += w * x[i];
    }
    const double mu_new = swx / sw;
    // scale step from Proposal 2: sigma^2 <- sigma^2 * mean(psi^2)/beta_c
    double spsi2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double u = (x[i] - mu_new) / fit.sigma;
      const double psi = huber_psi(u, c);
      spsi2 += psi * psi;
    }
    const double sigma_new = fit.sigma * std::sqrt(spsi2 / (n * beta_c));
    const double delta =
        std::abs(mu_new - fit.mu) + std::abs(sigma_new - fit.sigma);
    fit.mu = mu_new;
    fit.sigma = sigma_new;
    fit.iterations = iter + 1;
    if (delta < 1e-10 * (1.0 + fit.sigma)) {
      fit.converged = true;
      break;
    }
  }
  if (!(fit.sigma > 0.0) || !std::isfinite(fit.mu)) {
    throw NoConvergence("huber location-scale");
  }

  // Sandwich variance from the estimating function
  //   Psi(x; mu, sigma) = ( psi_c(u), psi_c(u)^2 - beta_c ),  u = (x-mu)/sigma.
  MatrixXd j = MatrixXd::Zero(2, 2);
  MatrixXd k = MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const double u = (x[i] - fit.mu) / fit.sigma;
    const double psi = huber_psi(u, c);
    const double dpsi = huber_psi_prime(u, c);
    Eigen::Vector2d big_psi(psi, psi * psi - beta_c);
    j += big_psi * big_psi.transpose();
    MatrixXd dk(2, 2);
    dk(0, 0) = -dpsi / fit.sigma;
    dk(0, 1) = -dpsi * u / fit.sigma;
    dk(1, 0) = -2.0 * psi * dpsi / fit.sigma;
    dk(1, 1) = -2.0 * psi * dpsi * u / fit.sigma;
    k += dk;
  }
  const MatrixXd kinv = k.fullPivLu().inverse();
  fit.V = kinv * j * kinv.transpose();
  return fit;
}

TestReport huber_wald_location_scale(const HuberLocationScaleFit& fit,
                                     const VectorXd& theta0) {
  TestReport rep;
  rep.statistic_name = StatisticName::Wald;
  Eigen::Vector2d d(fit.mu - theta0[0], fit.sigma - theta0[1]);
  rep.value = d.dot(fit.V.fullPivLu().solve(d));
  rep.null_law = NullLaw{NullLaw::Kind::ChiSq, 2, {}};
  rep.p_value = rep.null_law.p_value(rep.value);
  return rep;
}

HuberRegressionFit huber_regression(const MatrixXd& data, double c) {
  const int n = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols()) - 1;
  const MatrixXd design = data.rightCols(p);
  const VectorXd y = data.col(0);

  HuberRegressionFit fit;
  const auto qr = design.colPivHouseholderQr();
  if (qr.rank() < p) throw DegenerateData("huber regression: rank-deficient design");
  fit.beta = qr.solve(y);

  for (int iter = 0; iter < 200; ++iter) {
    const VectorXd r = y - design * fit.beta;
    std::vector<double> rv(r.data(), r.data() + n);
    fit.scale = mad_scale(rv, 0.0);
    if (fit.scale <= 0.0) throw DegenerateData("huber regression: zero residual MAD");
    VectorXd w(n);
    for (int i = 0; i < n; ++i) {
      const double u = r[i] / fit.scale;
      w[i] = (u == 0.0) ? 1.0 : huber_psi(u, c) / u;
    }
    const MatrixXd xw = design.array().colwise() * w.array();
    const VectorXd beta_new = (xw.transpose() * design)
                                  .fullPivLu()
                                  .solve(xw.transpose() * y);
    const double delta = (beta_new - fit.beta).lpNorm<Eigen::Infinity>();
    fit.beta = beta_new;
    fit.iterations = iter + 1;
    if (delta < 1e-10 * (1.0 + fit.beta.lpNorm<Eigen::Infinity>())) {
      fit.converged = true;
      break;
    }
  }

  // Sandwich with Psi_i(beta) = psi_c(r_i/s) x_i at fixed s.
  MatrixXd j = MatrixXd::Zero(p, p);
  MatrixXd k = MatrixXd::Zero(p, p);
  const VectorXd r = y - design * fit.beta;
  for (int i = 0; i < n; ++i) {
    const double u = r[i] / fit.scale;
    const double psi = huber_psi(u, c);
    const VectorXd xi = design.row(i).transpose();
    j += psi * psi * xi * xi.transpose();
    k += huber_psi_prime(u, c) / fit.scale * xi * xi.transpose();
  }
  const MatrixXd kinv = k.fullPivLu().inverse();
  fit.V = kinv * j * kinv.transpose();
  return fit;
}

TestReport huber_wald_regression(const HuberRegressionFit& fit, const VectorXd& beta0) {
  TestReport rep;
  rep.statistic_name = StatisticName::Wald;
  const VectorXd d = fit.beta - beta0;
  rep.value = d.dot(fit.V.fullPivLu().solve(d));
  rep.null_law = NullLaw{NullLaw::Kind::ChiSq, static_cast<int>(fit.beta.size()), {}};
  rep.p_value = rep.null_law.p_value(rep.value);
  return rep;
}

}  // namespace scorerule
