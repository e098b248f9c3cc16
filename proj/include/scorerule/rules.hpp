#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scorerule/errors.hpp"
#include "scorerule/models.hpp"

namespace scorerule {

/// One evaluation of a scoring rule: S(x, theta), its theta-gradient and,
/// when requested, the Jacobian of the gradient.
struct ScoreEval {
  double value = 0.0;
  VectorXd gradient;
  std::optional<MatrixXd> hessian;
};

/// A proper scoring rule S(x, P_theta) for a supplied parametric model.
///
/// Evaluations split into an observation part and a theta-only part (the
/// model-dependent integral term); the split lets empirical sums share the
/// integral across observations.
class ScoringRule {
 public:
  virtual ~ScoringRule() = default;
  virtual std::string name() const = 0;

  virtual double x_value(const ParametricModel& model, const VectorXd& x,
                         const VectorXd& theta) const = 0;
  virtual double theta_value(const ParametricModel& model, const VectorXd& theta) const {
    (void)model;
    (void)theta;
    return 0.0;
  }

  /// Defaults are central finite differences on the value parts.
  virtual VectorXd x_gradient(const ParametricModel& model, const VectorXd& x,
                              const VectorXd& theta) const;
  virtual VectorXd theta_gradient(const ParametricModel& model, const VectorXd& theta) const;

  double value(const ParametricModel& model, const VectorXd& x, const VectorXd& theta) const {
    return x_value(model, x, theta) + theta_value(model, theta);
  }
  VectorXd gradient(const ParametricModel& model, const VectorXd& x,
                    const VectorXd& theta) const {
    return x_gradient(model, x, theta) + theta_gradient(model, theta);
  }
  ScoreEval evaluate(const ParametricModel& model, const VectorXd& x,
                     const VectorXd& theta) const;
  /// evaluate() plus the gradient Jacobian by central differences.
  ScoreEval evaluate_with_hessian(const ParametricModel& model, const VectorXd& x,
                                  const VectorXd& theta) const;
};

/// Log score -log p_theta(x); empirical minimization reproduces maximum
/// likelihood.
class LogScore : public ScoringRule {
 public:
  std::string name() const override { return "log"; }
  double x_value(const ParametricModel& model, const VectorXd& x,
                 const VectorXd& theta) const override;
  VectorXd x_gradient(const ParametricModel& model, const VectorXd& x,
                      const VectorXd& theta) const override;
};

/// Tsallis score (gamma-1) * integral p^gamma - gamma * p(x)^(gamma-1),
/// gamma > 1.
class TsallisScore : public ScoringRule {
 public:
  explicit TsallisScore(double gamma);
  std::string name() const override { return "tsallis"; }
  double gamma() const { return gamma_; }
  double x_value(const ParametricModel& model, const VectorXd& x,
                 const VectorXd& theta) const override;
  double theta_value(const ParametricModel& model, const VectorXd& theta) const override;
  VectorXd x_gradient(const ParametricModel& model, const VectorXd& x,
                      const VectorXd& theta) const override;
  VectorXd theta_gradient(const ParametricModel& model, const VectorXd& theta) const override;

 private:
  ValueGrad integral(const ParametricModel& model, const VectorXd& theta) const;
  double gamma_;
};

/// Separable Bregman score defined by its gauge alpha = psi''.  The gauge
/// alone determines the estimating function; the score value reconstructs
/// psi by quadrature when needed.
class BregmanScore : public ScoringRule {
 public:
  BregmanScore(std::function<double(double)> gauge, std::string gauge_name);
  std::string name() const override { return "bregman(" + gauge_name_ + ")"; }
  double x_value(const ParametricModel& model, const VectorXd& x,
                 const VectorXd& theta) const override;
  double theta_value(const ParametricModel& model, const VectorXd& theta) const override;
  VectorXd x_gradient(const ParametricModel& model, const VectorXd& x,
                      const VectorXd& theta) const override;
  VectorXd theta_gradient(const ParametricModel& model, const VectorXd& theta) const override;
  double gauge(double t) const;

 private:
  std::function<double(double)> gauge_;
  std::string gauge_name_;
};

/// Hyvarinen score 2*laplacian(log q)(x) + |grad_x log q(x)|^2; free of the
/// density normalization.
class HyvarinenScore : public ScoringRule {
 public:
  std::string name() const override { return "hyvarinen"; }
  double x_value(const ParametricModel& model, const VectorXd& x,
                 const VectorXd& theta) const override;
};

/// Composite score: a sum of proper scores over marginal/conditional
/// components, each with its own sub-model sharing the parent parameter.
class CompositeScore : public ScoringRule {
 public:
  struct Component {
    std::function<VectorXd(const VectorXd&)> extract;
    std::shared_ptr<const ParametricModel> submodel;
    std::shared_ptr<const ScoringRule> rule;
  };

  explicit CompositeScore(std::vector<Component> components);
  std::string name() const override { return name_; }
  double x_value(const ParametricModel& model, const VectorXd& x,
                 const VectorXd& theta) const override;
  double theta_value(const ParametricModel& model, const VectorXd& theta) const override;
  VectorXd x_gradient(const ParametricModel& model, const VectorXd& x,
                      const VectorXd& theta) const override;
  VectorXd theta_gradient(const ParametricModel& model, const VectorXd& theta) const override;
  const std::vector<Component>& components() const { return components_; }

 private:
  std::vector<Component> components_;
  std::string name_ = "composite";
};

/// Adds a theta-free constant to a rule; statistics must be invariant to it.
class OffsetRule : public ScoringRule {
 public:
  OffsetRule(std::shared_ptr<const ScoringRule> inner, double offset)
      : inner_(std::move(inner)), offset_(offset) {}
  std::string name() const override { return inner_->name() + "+const"; }
  double x_value(const ParametricModel& m, const VectorXd& x,
                 const VectorXd& t) const override {
    return inner_->x_value(m, x, t);
  }
  double theta_value(const ParametricModel& m, const VectorXd& t) const override {
    return inner_->theta_value(m, t) + offset_;
  }
  VectorXd x_gradient(const ParametricModel& m, const VectorXd& x,
                      const VectorXd& t) const override {
    return inner_->x_gradient(m, x, t);
  }
  VectorXd theta_gradient(const ParametricModel& m, const VectorXd& t) const override {
    return inner_->theta_gradient(m, t);
  }

 private:
  std::shared_ptr<const ScoringRule> inner_;
  double offset_;
};

/// Brier (quadratic) score over a finite sample space: the squared Euclidean
/// distance between the forecast vector and the outcome indicator.
double brier_score(int x, const VectorXd& q);

/// Pairwise negative log-likelihood as a composite score over all q(q-1)/2
/// coordinate pairs of an equi-correlated normal vector.
CompositeScore make_pairwise_log_score(int q);

/// Rule factory for the CLI and experiment specs.  `gamma` is required for
/// tsallis and rejected elsewhere; `model` supplies structure for pairwise.
std::shared_ptr<const ScoringRule> make_rule(const std::string& kind,
                                             std::optional<double> gamma,
                                             const ParametricModel& model);

// Empirical sums over a data matrix (one observation per row).
double empirical_value(const ScoringRule& rule, const ParametricModel& model,
                       const MatrixXd& data, const VectorXd& theta);
VectorXd empirical_gradient(const ScoringRule& rule, const ParametricModel& model,
                            const MatrixXd& data, const VectorXd& theta);
/// n x p matrix of per-observation score gradients s(x_i, theta).
MatrixXd per_observation_gradients(const ScoringRule& rule, const ParametricModel& model,
                                   const MatrixXd& data, const VectorXd& theta);

}  // namespace scorerule
