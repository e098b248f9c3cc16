#include "scorerule/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "scorerule/numdiff.hpp"

namespace scorerule {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (v[mid - 1] + hi);
}

}  // namespace

// ---------------------------------------------------------------------------
// center densities

const CenterDensity& normal_center() {
  static const CenterDensity c = [] {
    CenterDensity d;
    d.name = "normal";
    d.f = [](double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); };
    d.df = [f = d.f](double u) { return -u * f(u); };
    d.d2f = [f = d.f](double u) { return (u * u - 1.0) * f(u); };
    d.log_f = [](double u) { return -0.5 * u * u - 0.5 * kLog2Pi; };
    d.quantile = [](double p) {
      static const boost::math::normal_distribution<double> n01(0.0, 1.0);
      return boost::math::quantile(n01, p);
    };
    d.tsallis_int = [](double gamma) {
      return std::pow(gamma, -0.5) * std::pow(2.0 * std::numbers::pi, -(gamma - 1.0) / 2.0);
    };
    return d;
  }();
  return c;
}

const CenterDensity& logistic_center() {
  static const CenterDensity c = [] {
    CenterDensity d;
    d.name = "logistic";
    d.f = [](double u) {
      const double t = std::tanh(0.5 * u);
      return 0.25 * (1.0 - t * t);
    };
    d.df = [f = d.f](double u) { return -f(u) * std::tanh(0.5 * u); };
    d.d2f = [f = d.f](double u) {
      const double t = std::tanh(0.5 * u);
      return 0.5 * f(u) * (3.0 * t * t - 1.0);
    };
    d.log_f = [](double u) {
      const double a = std::abs(u);
      return -a - 2.0 * std::log1p(std::exp(-a));
    };
    d.quantile = [](double p) { return std::log(p / (1.0 - p)); };
    return d;
  }();
  return c;
}

const CenterDensity& cauchy_center() {
  static const CenterDensity c = [] {
    CenterDensity d;
    d.name = "cauchy";
    d.f = [](double u) { return 1.0 / (std::numbers::pi * (1.0 + u * u)); };
    d.df = [](double u) {
      const double s = 1.0 + u * u;
      return -2.0 * u / (std::numbers::pi * s * s);
    };
    d.d2f = [](double u) {
      const double s = 1.0 + u * u;
      return (6.0 * u * u - 2.0) / (std::numbers::pi * s * s * s);
    };
    d.log_f = [](double u) { return -std::log(std::numbers::pi) - std::log1p(u * u); };
    d.quantile = [](double p) { return std::tan(std::numbers::pi * (p - 0.5)); };
    return d;
  }();
  return c;
}

const CenterDensity& exponential_center() {
  static const CenterDensity c = [] {
    CenterDensity d;
    d.name = "exponential";
    d.f = [](double u) { return u > 0.0 ? std::exp(-u) : 0.0; };
    d.df = [](double u) { return u > 0.0 ? -std::exp(-u) : 0.0; };
    d.d2f = [](double u) { return u > 0.0 ? std::exp(-u) : 0.0; };
    d.log_f = [](double u) {
      return u > 0.0 ? -u : -std::numeric_limits<double>::infinity();
    };
    d.quantile = [](double p) { return -std::log1p(-p); };
    d.support = Interval{0.0, std::numeric_limits<double>::infinity()};
    return d;
  }();
  return c;
}

CenterDensity gamma_center(double shape) {
  CenterDensity d;
  d.name = "gamma";
  const double lg = boost::math::lgamma(shape);
  d.log_f = [shape, lg](double u) {
    if (u <= 0.0) return -std::numeric_limits<double>::infinity();
    return (shape - 1.0) * std::log(u) - u - lg;
  };
  d.f = [log_f = d.log_f](double u) { return u > 0.0 ? std::exp(log_f(u)) : 0.0; };
  d.df = [f = d.f, shape](double u) {
    return u > 0.0 ? f(u) * ((shape - 1.0) / u - 1.0) : 0.0;
  };
  d.d2f = [f = d.f, shape](double u) {
    if (u <= 0.0) return 0.0;
    const double a = (shape - 1.0) / u - 1.0;
    return f(u) * (a * a - (shape - 1.0) / (u * u));
  };
  d.quantile = [shape](double p) {
    const boost::math::gamma_distribution<double> g(shape, 1.0);
    return boost::math::quantile(g, p);
  };
  d.support = Interval{0.0, std::numeric_limits<double>::infinity()};
  return d;
}

// ---------------------------------------------------------------------------
// ParametricModel defaults

double ParametricModel::density(const VectorXd& x, const VectorXd& theta) const {
  return std::exp(log_density(x, theta));
}

VectorXd ParametricModel::grad_log_density(const VectorXd& x, const VectorXd& theta) const {
  return central_gradient([&](const VectorXd& t) { return log_density(x, t); }, theta);
}

VectorXd ParametricModel::grad_density(const VectorXd& x, const VectorXd& theta) const {
  return density(x, theta) * grad_log_density(x, theta);
}

MatrixXd ParametricModel::sample(const VectorXd& theta, int n, std::uint64_t seed) const {
  check_theta(theta);
  Rng rng(seed);
  MatrixXd out(n, obs_dim());
  for (int i = 0; i < n; ++i) sample_row(out.row(i), theta, i, n, rng);
  return out;
}

void ParametricModel::resample_response(RowRef row,
                                        const VectorXd& theta, Rng& rng) const {
  sample_row(row, theta, 0, 1, rng);
}

VectorXd ParametricModel::dlog_density_dx(const VectorXd& x, const VectorXd& theta) const {
  VectorXd g(x.size());
  VectorXd xt = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    g[j] = central_d1(
        [&](double v) {
          xt[j] = v;
          const double r = log_density(xt, theta);
          xt[j] = x[j];
          return r;
        },
        x[j]);
  }
  return g;
}

double ParametricModel::laplacian_log_density(const VectorXd& x, const VectorXd& theta) const {
  double lap = 0.0;
  VectorXd xt = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    lap += central_d2(
        [&](double v) {
          xt[j] = v;
          const double r = log_density(xt, theta);
          xt[j] = x[j];
          return r;
        },
        x[j]);
  }
  return lap;
}

// ---------------------------------------------------------------------------
// NormalLocationModel

double NormalLocationModel::log_density(const VectorXd& x, const VectorXd& theta) const {
  const double u = (x[0] - theta[0]) / sigma_;
  return -0.5 * u * u - std::log(sigma_) - 0.5 * kLog2Pi;
}

VectorXd NormalLocationModel::grad_log_density(const VectorXd& x, const VectorXd& theta) const {
  VectorXd g(1);
  g[0] = (x[0] - theta[0]) / (sigma_ * sigma_);
  return g;
}

void NormalLocationModel::sample_row(RowRef row, const VectorXd& theta,
                                     int, int, Rng& rng) const {
  row[0] = theta[0] + sigma_ * rng.next_normal();
}

std::optional<ValueGrad> NormalLocationModel::tsallis_integral(const VectorXd&,
                                                               double gamma) const {
  ValueGrad vg;
  vg.value = std::pow(sigma_, 1.0 - gamma) * normal_center().tsallis_int(gamma);
  vg.grad = VectorXd::Zero(1);
  return vg;
}

VectorXd NormalLocationModel::dlog_density_dx(const VectorXd& x, const VectorXd& theta) const {
  VectorXd g(1);
  g[0] = -(x[0] - theta[0]) / (sigma_ * sigma_);
  return g;
}

double NormalLocationModel::laplacian_log_density(const VectorXd&, const VectorXd&) const {
  return -1.0 / (sigma_ * sigma_);
}

VectorXd NormalLocationModel::init_estimate(const MatrixXd& data) const {
  std::vector<double> v(data.col(0).data(), data.col(0).data() + data.rows());
  VectorXd init(1);
  init[0] = median_of(std::move(v));
  return init;
}

// ---------------------------------------------------------------------------
// LocationScaleModel

double LocationScaleModel::log_density(const VectorXd& x, const VectorXd& theta) const {
  const double u = (x[0] - theta[0]) / theta[1];
  return center_.log_f(u) - std::log(theta[1]);
}

VectorXd LocationScaleModel::grad_log_density(const VectorXd& x, const VectorXd& theta) const {
  const double sigma = theta[1];
  const double u = (x[0] - theta[0]) / sigma;
  const double dlf = center_.df(u) / center_.f(u);
  VectorXd g(2);
  g[0] = -dlf / sigma;
  g[1] = -dlf * u / sigma - 1.0 / sigma;
  return g;
}

void LocationScaleModel::sample_row(RowRef row, const VectorXd& theta,
                                    int, int, Rng& rng) const {
  row[0] = theta[0] + theta[1] * center_.quantile(rng.next_open01());
}

std::optional<ValueGrad> LocationScaleModel::tsallis_integral(const VectorXd& theta,
                                                              double gamma) const {
  if (!center_.tsallis_int) return std::nullopt;
  const double sigma = theta[1];
  const double c0 = center_.tsallis_int(gamma);
  ValueGrad vg;
  vg.value = std::pow(sigma, 1.0 - gamma) * c0;
  vg.grad = VectorXd::Zero(2);
  vg.grad[1] = (1.0 - gamma) * std::pow(sigma, -gamma) * c0;
  return vg;
}

VectorXd LocationScaleModel::dlog_density_dx(const VectorXd& x, const VectorXd& theta) const {
  if (!center_.d2f) return ParametricModel::dlog_density_dx(x, theta);
  const double sigma = theta[1];
  const double u = (x[0] - theta[0]) / sigma;
  VectorXd g(1);
  g[0] = center_.df(u) / center_.f(u) / sigma;
  return g;
}

double LocationScaleModel::laplacian_log_density(const VectorXd& x, const VectorXd& theta) const {
  if (!center_.d2f) return ParametricModel::laplacian_log_density(x, theta);
  const double sigma = theta[1];
  const double u = (x[0] - theta[0]) / sigma;
  const double f = center_.f(u);
  const double df = center_.df(u);
  return (center_.d2f(u) * f - df * df) / (f * f) / (sigma * sigma);
}

VectorXd LocationScaleModel::init_estimate(const MatrixXd& data) const {
  std::vector<double> v(data.col(0).data(), data.col(0).data() + data.rows());
  const double med = median_of(v);
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
  const double mad = median_of(std::move(dev));
  if (mad <= 0.0) throw DegenerateData("zero median absolute deviation");
  VectorXd init(2);
  init[0] = med;
  init[1] = 1.4826 * mad;
  return init;
}

// ---------------------------------------------------------------------------
// EquiCorrelatedNormal

EquiCorrelatedNormal::EquiCorrelatedNormal(int q) : q_(q) {
  if (q < 2) throw ScoreRuleError("equicorr-normal requires q >= 2");
}

double EquiCorrelatedNormal::log_density(const VectorXd& x, const VectorXd& theta) const {
  const double rho = theta[0];
  if (!domain().contains(theta)) throw RhoOutOfDomain(std::to_string(rho));
  const double a = 1.0 + rho * (q_ - 1.0);
  const double b = 1.0 - rho;
  const double t1 = x.squaredNorm();
  const double t2 = x.sum();
  const double n = t1 - rho * t2 * t2 / a;
  return -n / (2.0 * b) - 0.5 * (q_ * kLog2Pi + (q_ - 1.0) * std::log(b) + std::log(a));
}

VectorXd EquiCorrelatedNormal::grad_log_density(const VectorXd& x, const VectorXd& theta) const {
  const double rho = theta[0];
  const double a = 1.0 + rho * (q_ - 1.0);
  const double b = 1.0 - rho;
  const double t1 = x.squaredNorm();
  const double t2 = x.sum();
  const double n = t1 - rho * t2 * t2 / a;
  VectorXd g(1);
  g[0] = t2 * t2 / (2.0 * a * a * b) - n / (2.0 * b * b) + (q_ - 1.0) / (2.0 * b) -
         (q_ - 1.0) / (2.0 * a);
  return g;
}

void EquiCorrelatedNormal::sample_row(RowRef row, const VectorXd& theta,
                                      int, int, Rng& rng) const {
  const double rho = theta[0];
  const double a = 1.0 + rho * (q_ - 1.0);  // eigenvalue along the ones vector
  const double b = 1.0 - rho;               // eigenvalue on its complement
  double zbar = 0.0;
  for (int r = 0; r < q_; ++r) {
    row[r] = rng.next_normal();
    zbar += row[r];
  }
  zbar /= q_;
  const double sa = std::sqrt(a);
  const double sb = std::sqrt(b);
  for (int r = 0; r < q_; ++r) row[r] = sb * (row[r] - zbar) + sa * zbar;
}

std::optional<ValueGrad> EquiCorrelatedNormal::tsallis_integral(const VectorXd& theta,
                                                                double gamma) const {
  const double rho = theta[0];
  const double a = 1.0 + rho * (q_ - 1.0);
  const double b = 1.0 - rho;
  const double logc = -0.5 * q_ * std::log(gamma) - 0.5 * q_ * (gamma - 1.0) * kLog2Pi -
                      0.5 * (gamma - 1.0) * (q_ - 1.0) * std::log(b) -
                      0.5 * (gamma - 1.0) * std::log(a);
  ValueGrad vg;
  vg.value = std::exp(logc);
  vg.grad = VectorXd(1);
  vg.grad[0] = vg.value * 0.5 * (gamma - 1.0) * (q_ - 1.0) * (1.0 / b - 1.0 / a);
  return vg;
}

VectorXd EquiCorrelatedNormal::init_estimate(const MatrixXd& data) const {
  const Eigen::Index n = data.rows();
  const VectorXd mean = data.colwise().mean();
  MatrixXd centered = data.rowwise() - mean.transpose();
  VectorXd sd = (centered.array().square().colwise().sum() / double(n)).sqrt();
  if ((sd.array() <= 0.0).any()) throw DegenerateData("constant column in data");
  double acc = 0.0;
  int cnt = 0;
  for (int r = 0; r < q_; ++r) {
    for (int s = r + 1; s < q_; ++s) {
      const double cov = centered.col(r).dot(centered.col(s)) / double(n);
      acc += cov / (sd[r] * sd[s]);
      ++cnt;
    }
  }
  const double lo = -1.0 / (q_ - 1.0);
  const double margin = 1e-3;
  VectorXd init(1);
  init[0] = std::clamp(acc / cnt, lo + margin, 1.0 - margin);
  return init;
}

// ---------------------------------------------------------------------------
// BivariateNormalCorr

double BivariateNormalCorr::log_density(const VectorXd& x, const VectorXd& theta) const {
  const double rho = theta[0];
  if (!(rho > -1.0 && rho < 1.0)) throw RhoOutOfDomain(std::to_string(rho));
  const double d = 1.0 - rho * rho;
  const double q = x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1];
  return -kLog2Pi - 0.5 * std::log(d) - q / (2.0 * d);
}

VectorXd BivariateNormalCorr::grad_log_density(const VectorXd& x, const VectorXd& theta) const {
  const double rho = theta[0];
  const double d = 1.0 - rho * rho;
  const double q = x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1];
  VectorXd g(1);
  g[0] = rho / d + x[0] * x[1] / d - rho * q / (d * d);
  return g;
}

void BivariateNormalCorr::sample_row(RowRef row, const VectorXd& theta,
                                     int, int, Rng& rng) const {
  const double rho = theta[0];
  const double z1 = rng.next_normal();
  const double z2 = rng.next_normal();
  row[0] = z1;
  row[1] = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
}

std::optional<ValueGrad> BivariateNormalCorr::tsallis_integral(const VectorXd& theta,
                                                               double gamma) const {
  const double rho = theta[0];
  const double d = 1.0 - rho * rho;
  const double logc =
      -std::log(gamma) - (gamma - 1.0) * kLog2Pi - 0.5 * (gamma - 1.0) * std::log(d);
  ValueGrad vg;
  vg.value = std::exp(logc);
  vg.grad = VectorXd(1);
  vg.grad[0] = vg.value * (gamma - 1.0) * rho / d;
  return vg;
}

VectorXd BivariateNormalCorr::init_estimate(const MatrixXd& data) const {
  const Eigen::Index n = data.rows();
  const VectorXd mean = data.colwise().mean();
  MatrixXd centered = data.rowwise() - mean.transpose();
  const double s0 = centered.col(0).squaredNorm() / double(n);
  const double s1 = centered.col(1).squaredNorm() / double(n);
  if (s0 <= 0.0 || s1 <= 0.0) throw DegenerateData("constant column in data");
  const double r = centered.col(0).dot(centered.col(1)) / double(n) / std::sqrt(s0 * s1);
  VectorXd init(1);
  init[0] = std::clamp(r, -1.0 + 1e-3, 1.0 - 1e-3);
  return init;
}

// ---------------------------------------------------------------------------
// LinearRegressionModel

LinearRegressionModel::LinearRegressionModel(int p, double sigma) : p_(p), sigma_(sigma) {
  if (p < 1) throw ScoreRuleError("linear-regression requires p >= 1");
}

double LinearRegressionModel::log_density(const VectorXd& x, const VectorXd& theta) const {
  const double r = (x[0] - x.tail(p_).dot(theta)) / sigma_;
  return -0.5 * r * r - std::log(sigma_) - 0.5 * kLog2Pi;
}

VectorXd LinearRegressionModel::grad_log_density(const VectorXd& x, const VectorXd& theta) const {
  const double r = x[0] - x.tail(p_).dot(theta);
  return (r / (sigma_ * sigma_)) * x.tail(p_);
}

void LinearRegressionModel::sample_row(RowRef row, const VectorXd& theta,
                                       int i, int n, Rng& rng) const {
  (void)n;
  row[1] = 1.0;
  if (p_ >= 2) row[2] = rng.next_normal();
  if (p_ >= 3) row[3] = static_cast<double>(i + 1);
  for (int j = 4; j <= p_; ++j) row[j] = rng.next_normal();
  double mean = 0.0;
  for (int j = 0; j < p_; ++j) mean += row[j + 1] * theta[j];
  row[0] = mean + sigma_ * rng.next_normal();
}

void LinearRegressionModel::resample_response(RowRef row,
                                              const VectorXd& theta, Rng& rng) const {
  double mean = 0.0;
  for (int j = 0; j < p_; ++j) mean += row[j + 1] * theta[j];
  row[0] = mean + sigma_ * rng.next_normal();
}

std::optional<ValueGrad> LinearRegressionModel::tsallis_integral(const VectorXd&,
                                                                 double gamma) const {
  ValueGrad vg;
  vg.value = std::pow(sigma_, 1.0 - gamma) * normal_center().tsallis_int(gamma);
  vg.grad = VectorXd::Zero(p_);
  return vg;
}

VectorXd LinearRegressionModel::init_estimate(const MatrixXd& data) const {
  const MatrixXd design = data.rightCols(p_);
  const VectorXd y = data.col(0);
  const auto qr = design.colPivHouseholderQr();
  if (qr.rank() < p_) throw DegenerateData("rank-deficient design matrix");
  return qr.solve(y);
}

// ---------------------------------------------------------------------------
// mixtures and free functions

MatrixXd ContaminationMixture::sample(int n, std::uint64_t seed,
                                      std::vector<std::uint8_t>* indicators) const {
  MatrixXd data = core->sample(core_theta, n, Rng::derive_seed(seed, 0));
  Rng rng(Rng::derive_seed(seed, 1));
  if (indicators) indicators->assign(n, 0);
  for (int i = 0; i < n; ++i) {
    if (rng.next_bernoulli(eps)) {
      contaminant->resample_response(data.row(i), contaminant_theta, rng);
      if (indicators) (*indicators)[i] = 1;
    }
  }
  return data;
}

MatrixXd sample(const ParametricModel& model, const VectorXd& theta, int n,
                std::uint64_t seed) {
  return model.sample(theta, n, seed);
}

double equicorr_density(const VectorXd& x, double rho, int q) {
  EquiCorrelatedNormal model(q);
  VectorXd theta(1);
  theta[0] = rho;
  return std::exp(model.log_density(x, theta));
}

double pairwise_loglik(const MatrixXd& data, double rho) {
  if (!(rho > -1.0 && rho < 1.0)) throw RhoOutOfDomain(std::to_string(rho));
  const Eigen::Index n = data.rows();
  const Eigen::Index q = data.cols();
  if (q < 2) throw ScoreRuleError("pairwise_loglik requires q >= 2");
  double ss_w = 0.0;
  double ss_b = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rowmean = data.row(i).mean();
    ss_w += (data.row(i).array() - rowmean).square().sum();
    ss_b += double(q) * double(q) * rowmean * rowmean;
  }
  const double d = 1.0 - rho * rho;
  return -(double(n) * q * (q - 1.0) / 4.0) * std::log(d) -
         (q - 1.0 + rho) / (2.0 * d) * ss_w -
         (q - 1.0) * (1.0 - rho) / (2.0 * d) * ss_b / double(q);
}

}  // namespace scorerule
