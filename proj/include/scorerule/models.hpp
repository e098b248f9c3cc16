#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scorerule/errors.hpp"
#include "scorerule/rng.hpp"

namespace scorerule {

using Eigen::MatrixXd;
using Eigen::VectorXd;
/// Writable view of one observation row (rows of column-major matrices have
/// an inner stride).
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// Open interval for one parameter coordinate.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double x) const { return x > lo && x < hi; }
};

struct ParamDomain {
  std::vector<Interval> coords;
  bool contains(const VectorXd& theta) const {
    if (static_cast<std::size_t>(theta.size()) != coords.size()) return false;
    for (Eigen::Index j = 0; j < theta.size(); ++j)
      if (!coords[j].contains(theta[j])) return false;
    return true;
  }
};

/// Value of a model-dependent integral together with its theta-gradient.
struct ValueGrad {
  double value = 0.0;
  VectorXd grad;
};

/// A univariate center density f with derivatives, used by location-scale
/// models and by the robustness probes.
struct CenterDensity {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
  std::function<double(double)> d2f;      // may be empty
  std::function<double(double)> log_f;
  std::function<double(double)> quantile; // inverse CDF, for sampling
  std::function<double(double)> tsallis_int;  // gamma -> integral f^gamma; may be empty
  Interval support{-std::numeric_limits<double>::infinity(),
                   std::numeric_limits<double>::infinity()};
};

const CenterDensity& normal_center();
const CenterDensity& logistic_center();
const CenterDensity& cauchy_center();
const CenterDensity& exponential_center();          // support (0, inf)
CenterDensity gamma_center(double shape);           // support (0, inf)

/// A parametric family: per-observation density, theta-gradients, sampler
/// and parameter domain.  An observation is one row of the data matrix;
/// models that condition on covariates carry them inside the row.
class ParametricModel {
 public:
  virtual ~ParametricModel() = default;

  virtual std::string name() const = 0;
  virtual int param_dim() const = 0;
  virtual int obs_dim() const = 0;
  virtual ParamDomain domain() const = 0;

  virtual double log_density(const VectorXd& x, const VectorXd& theta) const = 0;
  virtual double density(const VectorXd& x, const VectorXd& theta) const;

  /// d log p / d theta; default is central finite differences.
  virtual VectorXd grad_log_density(const VectorXd& x, const VectorXd& theta) const;
  /// d p / d theta = p * d log p / d theta.
  VectorXd grad_density(const VectorXd& x, const VectorXd& theta) const;

  /// n iid observations; deterministic given seed.
  virtual MatrixXd sample(const VectorXd& theta, int n, std::uint64_t seed) const;
  /// Draws one observation into `row` using `rng`; `i`/`n` let fixed-design
  /// models place an observation at its position in the sample.
  virtual void sample_row(RowRef row, const VectorXd& theta,
                          int i, int n, Rng& rng) const = 0;
  /// Redraws the stochastic part of an existing row (the response given any
  /// covariates carried in the row).  Used by contamination mixtures so the
  /// contaminated rows keep the design of the core sample.
  virtual void resample_response(RowRef row, const VectorXd& theta,
                                 Rng& rng) const;

  /// Closed form for integral p_theta^gamma over the sample space, with
  /// theta-gradient, when the family has one.
  virtual std::optional<ValueGrad> tsallis_integral(const VectorXd& theta,
                                                    double gamma) const {
    (void)theta;
    (void)gamma;
    return std::nullopt;
  }

  /// True when the normalization integral of a separable Bregman score does
  /// not depend on theta (pure location families), so E_theta lambda == 0.
  virtual bool bregman_integral_theta_free() const { return false; }

  /// Observation-space support, for quadrature; scalar-observation models.
  virtual Interval obs_support() const {
    return {-std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
  }

  /// d log p / dx_j and sum_j d^2 log p / dx_j^2; defaults use nested
  /// central differences with step cbrt(eps)*(1+|x_j|).
  virtual VectorXd dlog_density_dx(const VectorXd& x, const VectorXd& theta) const;
  virtual double laplacian_log_density(const VectorXd& x, const VectorXd& theta) const;
  virtual bool has_analytic_x_derivatives() const { return false; }

  /// Moment-style starting value for optimization; DegenerateData when the
  /// data cannot identify one.
  virtual VectorXd init_estimate(const MatrixXd& data) const = 0;

  void check_theta(const VectorXd& theta) const {
    if (!domain().contains(theta)) throw ThetaOutOfDomain(name());
  }
};

/// Normal location family with known scale; theta = (mu).
class NormalLocationModel : public ParametricModel {
 public:
  explicit NormalLocationModel(double sigma = 1.0) : sigma_(sigma) {}
  std::string name() const override { return "normal-location"; }
  int param_dim() const override { return 1; }
  int obs_dim() const override { return 1; }
  ParamDomain domain() const override { return {{Interval{}}}; }
  double log_density(const VectorXd& x, const VectorXd& theta) const override;
  VectorXd grad_log_density(const VectorXd& x, const VectorXd& theta) const override;
  void sample_row(RowRef row, const VectorXd& theta, int i, int n,
                  Rng& rng) const override;
  std::optional<ValueGrad> tsallis_integral(const VectorXd& theta,
                                            double gamma) const override;
  bool bregman_integral_theta_free() const override { return true; }
  VectorXd dlog_density_dx(const VectorXd& x, const VectorXd& theta) const override;
  double laplacian_log_density(const VectorXd& x, const VectorXd& theta) const override;
  bool has_analytic_x_derivatives() const override { return true; }
  VectorXd init_estimate(const MatrixXd& data) const override;
  double sigma() const { return sigma_; }

 private:
  double sigma_;
};

/// Location-scale family p(x; mu, sigma) = f((x-mu)/sigma)/sigma.
class LocationScaleModel : public ParametricModel {
 public:
  explicit LocationScaleModel(const CenterDensity& center = normal_center())
      : center_(center) {}
  std::string name() const override { return "location-scale(" + center_.name + ")"; }
  int param_dim() const override { return 2; }
  int obs_dim() const override { return 1; }
  ParamDomain domain() const override {
    return {{Interval{}, Interval{0.0, std::numeric_limits<double>::infinity()}}};
  }
  double log_density(const VectorXd& x, const VectorXd& theta) const override;
  VectorXd grad_log_density(const VectorXd& x, const VectorXd& theta) const override;
  void sample_row(RowRef row, const VectorXd& theta, int i, int n,
                  Rng& rng) const override;
  std::optional<ValueGrad> tsallis_integral(const VectorXd& theta,
                                            double gamma) const override;
  VectorXd dlog_density_dx(const VectorXd& x, const VectorXd& theta) const override;
  double laplacian_log_density(const VectorXd& x, const VectorXd& theta) const override;
  bool has_analytic_x_derivatives() const override {
    return static_cast<bool>(center_.d2f);
  }
  VectorXd init_estimate(const MatrixXd& data) const override;
  const CenterDensity& center() const { return center_; }

 private:
  CenterDensity center_;
};

/// q-variate normal with standard margins and a common correlation rho;
/// theta = (rho), rho in (-1/(q-1), 1).
class EquiCorrelatedNormal : public ParametricModel {
 public:
  explicit EquiCorrelatedNormal(int q);
  std::string name() const override { return "equicorr-normal"; }
  int param_dim() const override { return 1; }
  int obs_dim() const override { return q_; }
  ParamDomain domain() const override {
    return {{Interval{-1.0 / (q_ - 1.0), 1.0}}};
  }
  double log_density(const VectorXd& x, const VectorXd& theta) const override;
  VectorXd grad_log_density(const VectorXd& x, const VectorXd& theta) const override;
  void sample_row(RowRef row, const VectorXd& theta, int i, int n,
                  Rng& rng) const override;
  std::optional<ValueGrad> tsallis_integral(const VectorXd& theta,
                                            double gamma) const override;
  VectorXd init_estimate(const MatrixXd& data) const override;
  int q() const { return q_; }

 private:
  int q_;
};

/// Bivariate normal with standard margins and correlation rho; the pair
/// margin of EquiCorrelatedNormal, used by the pairwise composite score.
class BivariateNormalCorr : public ParametricModel {
 public:
  std::string name() const override { return "bivariate-normal-corr"; }
  int param_dim() const override { return 1; }
  int obs_dim() const override { return 2; }
  ParamDomain domain() const override { return {{Interval{-1.0, 1.0}}}; }
  double log_density(const VectorXd& x, const VectorXd& theta) const override;
  VectorXd grad_log_density(const VectorXd& x, const VectorXd& theta) const override;
  void sample_row(RowRef row, const VectorXd& theta, int i, int n,
                  Rng& rng) const override;
  std::optional<ValueGrad> tsallis_integral(const VectorXd& theta,
                                            double gamma) const override;
  VectorXd init_estimate(const MatrixXd& data) const override;
};

/// Gaussian linear model y = x^T beta + sigma*eps with sigma known.
/// An observation row is (y, x_1, ..., x_p).  The bundled design generator
/// draws column 1 as the intercept, column 2 iid standard normal per sample
/// and column 3 as the integers 1..n (trend), matching the simulation setup.
class LinearRegressionModel : public ParametricModel {
 public:
  explicit LinearRegressionModel(int p, double sigma = 1.0);
  std::string name() const override { return "linear-regression"; }
  int param_dim() const override { return p_; }
  int obs_dim() const override { return p_ + 1; }
  ParamDomain domain() const override {
    return {std::vector<Interval>(static_cast<std::size_t>(p_), Interval{})};
  }
  double log_density(const VectorXd& x, const VectorXd& theta) const override;
  VectorXd grad_log_density(const VectorXd& x, const VectorXd& theta) const override;
  void sample_row(RowRef row, const VectorXd& theta, int i, int n,
                  Rng& rng) const override;
  void resample_response(RowRef row, const VectorXd& theta,
                         Rng& rng) const override;
  std::optional<ValueGrad> tsallis_integral(const VectorXd& theta,
                                            double gamma) const override;
  VectorXd init_estimate(const MatrixXd& data) const override;
  double sigma() const { return sigma_; }

 private:
  int p_;
  double sigma_;
};

/// eps-mixture data generator: each observation comes from the contaminant
/// with probability eps, independently across observations.  For models with
/// covariates the core sample supplies the design and the contaminant only
/// redraws the response.
struct ContaminationMixture {
  std::shared_ptr<const ParametricModel> core;
  VectorXd core_theta;
  std::shared_ptr<const ParametricModel> contaminant;
  VectorXd contaminant_theta;
  double eps = 0.0;

  MatrixXd sample(int n, std::uint64_t seed,
                  std::vector<std::uint8_t>* indicators = nullptr) const;
};

/// iid sample from a plain model; reproducible under seed.
MatrixXd sample(const ParametricModel& model, const VectorXd& theta, int n,
                std::uint64_t seed);

/// Closed-form equi-correlated normal density (q-dimensional, unit margins).
double equicorr_density(const VectorXd& x, double rho, int q);

/// Pairwise Gaussian log-likelihood for n x q data at correlation rho, in the
/// sufficient-statistic form; equals the sum of bivariate-pair log densities
/// up to an additive constant that does not involve rho.
double pairwise_loglik(const MatrixXd& data, double rho);

}  // namespace scorerule
