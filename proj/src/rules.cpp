#include "scorerule/rules.hpp"

#include <cmath>

#include "scorerule/numdiff.hpp"
#include "scorerule/quadrature.hpp"

namespace scorerule {

// ---------------------------------------------------------------------------
// ScoringRule defaults

VectorXd ScoringRule::x_gradient(const ParametricModel& model, const VectorXd& x,
                                 const VectorXd& theta) const {
  return central_gradient([&](const VectorXd& t) { return x_value(model, x, t); }, theta);
}

VectorXd ScoringRule::theta_gradient(const ParametricModel& model,
                                     const VectorXd& theta) const {
  return central_gradient([&](const VectorXd& t) { return theta_value(model, t); }, theta);
}

ScoreEval ScoringRule::evaluate(const ParametricModel& model, const VectorXd& x,
                                const VectorXd& theta) const {
  ScoreEval ev;
  ev.value = value(model, x, theta);
  ev.gradient = gradient(model, x, theta);
  return ev;
}

ScoreEval ScoringRule::evaluate_with_hessian(const ParametricModel& model, const VectorXd& x,
                                             const VectorXd& theta) const {
  ScoreEval ev = evaluate(model, x, theta);
  ev.hessian = central_jacobian(
      [&](const VectorXd& t) { return gradient(model, x, t); }, theta);
  return ev;
}

// ---------------------------------------------------------------------------
// LogScore

double LogScore::x_value(const ParametricModel& model, const VectorXd& x,
                         const VectorXd& theta) const {
  const double lp = model.log_density(x, theta);
  if (!std::isfinite(lp)) throw NonPositiveDensity(model.name());
  return -lp;
}

VectorXd LogScore::x_gradient(const ParametricModel& model, const VectorXd& x,
                              const VectorXd& theta) const {
  return -model.grad_log_density(x, theta);
}

// ---------------------------------------------------------------------------
// TsallisScore

TsallisScore::TsallisScore(double gamma) : gamma_(gamma) {
  if (!(gamma > 1.0)) throw ScoreRuleError("tsallis requires gamma > 1");
}

ValueGrad TsallisScore::integral(const ParametricModel& model, const VectorXd& theta) const {
  if (auto closed = model.tsallis_integral(theta, gamma_)) return *closed;
  if (model.obs_dim() != 1) {
    throw DivergentIntegral("no closed-form tsallis integral for multivariate model " +
                            model.name());
  }
  const Interval sup = model.obs_support();
  VectorXd x(1);
  ValueGrad vg;
  vg.value = integrate(
      [&](double y) {
        x[0] = y;
        return std::exp(gamma_ * model.log_density(x, theta));
      },
      sup.lo, sup.hi, 1e-9);
  vg.grad = VectorXd(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    vg.grad[j] = gamma_ * integrate(
                              [&](double y) {
                                x[0] = y;
                                return std::exp(gamma_ * model.log_density(x, theta)) *
                                       model.grad_log_density(x, theta)[j];
                              },
                              sup.lo, sup.hi, 1e-9);
  }
  return vg;
}

double TsallisScore::x_value(const ParametricModel& model, const VectorXd& x,
                             const VectorXd& theta) const {
  return -gamma_ * std::exp((gamma_ - 1.0) * model.log_density(x, theta));
}

double TsallisScore::theta_value(const ParametricModel& model, const VectorXd& theta) const {
  return (gamma_ - 1.0) * integral(model, theta).value;
}

VectorXd TsallisScore::x_gradient(const ParametricModel& model, const VectorXd& x,
                                  const VectorXd& theta) const {
  // -gamma(gamma-1) p^(gamma-2) grad p, written through p^(gamma-1) grad log p
  // so the redescending tail underflows to zero instead of dividing by zero.
  const double pw = std::exp((gamma_ - 1.0) * model.log_density(x, theta));
  if (pw == 0.0) return VectorXd::Zero(theta.size());
  return (-gamma_ * (gamma_ - 1.0) * pw) * model.grad_log_density(x, theta);
}

VectorXd TsallisScore::theta_gradient(const ParametricModel& model,
                                      const VectorXd& theta) const {
  return (gamma_ - 1.0) * integral(model, theta).grad;
}

// ---------------------------------------------------------------------------
// BregmanScore

BregmanScore::BregmanScore(std::function<double(double)> gauge, std::string gauge_name)
    : gauge_(std::move(gauge)), gauge_name_(std::move(gauge_name)) {}

double BregmanScore::gauge(double t) const {
  const double a = gauge_(t);
  if (a < 0.0) throw GaugeNegative("alpha(" + std::to_string(t) + ") < 0");
  return a;
}

double BregmanScore::x_value(const ParametricModel& model, const VectorXd& x,
                             const VectorXd& theta) const {
  // psi'(t) anchored at psi'(1) = 0; the anchor shifts the score by a
  // theta-free constant only.
  const double p = model.density(x, theta);
  if (!(p > 0.0)) throw NonPositiveDensity(model.name());
  const double lo = std::min(p, 1.0);
  const double hi = std::max(p, 1.0);
  double psi_prime = integrate_expectation([this](double s) { return gauge(s); }, lo, hi);
  if (p < 1.0) psi_prime = -psi_prime;
  return -psi_prime;
}

double BregmanScore::theta_value(const ParametricModel& model, const VectorXd& theta) const {
  if (model.obs_dim() != 1) {
    throw QuadratureFailure("bregman score value needs a scalar observation space");
  }
  // integral over y of g(q(y)) with g(u) = integral_0^u s alpha(s) ds, the
  // normalized form of psi(u) - u psi'(u).
  const Interval sup = model.obs_support();
  VectorXd x(1);
  return integrate_expectation(
      [&](double y) {
        x[0] = y;
        const double q = model.density(x, theta);
        if (q <= 0.0) return 0.0;
        return integrate_expectation([this](double s) { return s * gauge(s); }, 0.0, q);
      },
      sup.lo, sup.hi);
}

VectorXd BregmanScore::x_gradient(const ParametricModel& model, const VectorXd& x,
                                  const VectorXd& theta) const {
  const double p = model.density(x, theta);
  if (!(p > 0.0)) throw NonPositiveDensity(model.name());
  return -gauge(p) * model.grad_density(x, theta);
}

VectorXd BregmanScore::theta_gradient(const ParametricModel& model,
                                      const VectorXd& theta) const {
  if (model.bregman_integral_theta_free()) return VectorXd::Zero(theta.size());
  if (model.obs_dim() != 1) {
    throw QuadratureFailure("bregman expectation term needs a scalar observation space");
  }
  const Interval sup = model.obs_support();
  VectorXd g(theta.size());
  VectorXd x(1);
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    g[j] = integrate_expectation(
        [&](double y) {
          x[0] = y;
          const double q = model.density(x, theta);
          if (q <= 0.0) return 0.0;
          return gauge(q) * model.grad_density(x, theta)[j] * q;
        },
        sup.lo, sup.hi);
  }
  return g;
}

// ---------------------------------------------------------------------------
// HyvarinenScore

double HyvarinenScore::x_value(const ParametricModel& model, const VectorXd& x,
                               const VectorXd& theta) const {
  const double lap = model.laplacian_log_density(x, theta);
  const VectorXd grad = model.dlog_density_dx(x, theta);
  if (!std::isfinite(lap) || !grad.allFinite()) {
    throw NonSmoothDensity(model.name());
  }
  return 2.0 * lap + grad.squaredNorm();
}

// ---------------------------------------------------------------------------
// CompositeScore

CompositeScore::CompositeScore(std::vector<Component> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ScoreRuleError("composite score needs >= 1 component");
}

double CompositeScore::x_value(const ParametricModel&, const VectorXd& x,
                               const VectorXd& theta) const {
  double v = 0.0;
  for (const auto& c : components_) v += c.rule->x_value(*c.submodel, c.extract(x), theta);
  return v;
}

double CompositeScore::theta_value(const ParametricModel&, const VectorXd& theta) const {
  double v = 0.0;
  for (const auto& c : components_) v += c.rule->theta_value(*c.submodel, theta);
  return v;
}

VectorXd CompositeScore::x_gradient(const ParametricModel&, const VectorXd& x,
                                    const VectorXd& theta) const {
  VectorXd g = VectorXd::Zero(theta.size());
  for (const auto& c : components_) g += c.rule->x_gradient(*c.submodel, c.extract(x), theta);
  return g;
}

VectorXd CompositeScore::theta_gradient(const ParametricModel&, const VectorXd& theta) const {
  VectorXd g = VectorXd::Zero(theta.size());
  for (const auto& c : components_) g += c.rule->theta_gradient(*c.submodel, theta);
  return g;
}

// ---------------------------------------------------------------------------
// free functions

double brier_score(int x, const VectorXd& q) {
  const double tol = 1e-10;
  if (x < 0 || x >= q.size()) throw InvalidSimplexPoint("category index out of range");
  if (std::abs(q.sum() - 1.0) > tol || (q.array() < -tol).any()) {
    throw InvalidSimplexPoint("probabilities must be nonnegative and sum to 1");
  }
  double v = (1.0 - q[x]) * (1.0 - q[x]);
  for (Eigen::Index y = 0; y < q.size(); ++y) {
    if (y != x) v += q[y] * q[y];
  }
  return v;
}

CompositeScore make_pairwise_log_score(int q) {
  auto submodel = std::make_shared<BivariateNormalCorr>();
  auto log_rule = std::make_shared<LogScore>();
  std::vector<CompositeScore::Component> comps;
  comps.reserve(static_cast<std::size_t>(q) * (q - 1) / 2);
  for (int r = 0; r < q; ++r) {
    for (int s = r + 1; s < q; ++s) {
      CompositeScore::Component c;
      c.extract = [r, s](const VectorXd& x) {
        VectorXd sub(2);
        sub[0] = x[r];
        sub[1] = x[s];
        return sub;
      };
      c.submodel = submodel;
      c.rule = log_rule;
      comps.push_back(std::move(c));
    }
  }
  return CompositeScore(std::move(comps));
}

std::shared_ptr<const ScoringRule> make_rule(const std::string& kind,
                                             std::optional<double> gamma,
                                             const ParametricModel& model) {
  if (kind == "tsallis") {
    if (!gamma) throw ScoreRuleError("rule tsallis requires gamma");
    return std::make_shared<TsallisScore>(*gamma);
  }
  if (gamma) throw ScoreRuleError("gamma is only valid with rule=tsallis");
  if (kind == "log") return std::make_shared<LogScore>();
  if (kind == "hyvarinen") return std::make_shared<HyvarinenScore>();
  if (kind == "bregman-brier") {
    return std::make_shared<BregmanScore>([](double) { return 2.0; }, "alpha=2");
  }
  if (kind == "pairwise") {
    const auto* ec = dynamic_cast<const EquiCorrelatedNormal*>(&model);
    if (!ec) throw ScoreRuleError("rule pairwise requires the equicorr model");
    return std::make_shared<CompositeScore>(make_pairwise_log_score(ec->q()));
  }
  throw ScoreRuleError("unknown rule: " + kind);
}

double empirical_value(const ScoringRule& rule, const ParametricModel& model,
                       const MatrixXd& data, const VectorXd& theta) {
  double v = data.rows() * rule.theta_value(model, theta);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    v += rule.x_value(model, data.row(i).transpose(), theta);
  }
  return v;
}

VectorXd empirical_gradient(const ScoringRule& rule, const ParametricModel& model,
                            const MatrixXd& data, const VectorXd& theta) {
  VectorXd g = double(data.rows()) * rule.theta_gradient(model, theta);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    g += rule.x_gradient(model, data.row(i).transpose(), theta);
  }
  return g;
}

MatrixXd per_observation_gradients(const ScoringRule& rule, const ParametricModel& model,
                                   const MatrixXd& data, const VectorXd& theta) {
  const VectorXd shared = rule.theta_gradient(model, theta);
  MatrixXd out(data.rows(), theta.size());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    out.row(i) =
        (rule.x_gradient(model, data.row(i).transpose(), theta) + shared).transpose();
  }
  return out;
}

}  // namespace scorerule
