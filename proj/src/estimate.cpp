#include "scorerule/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scorerule/numdiff.hpp"
#include "scorerule/rng.hpp"

namespace scorerule {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

ParamTransform::ParamTransform(const ParamDomain& domain) : coords_(domain.coords) {}

VectorXd ParamTransform::to_internal(const VectorXd& natural) const {
  VectorXd z(natural.size());
  for (Eigen::Index j = 0; j < natural.size(); ++j) {
    const Interval& c = coords_[j];
    const bool lo = std::isfinite(c.lo), hi = std::isfinite(c.hi);
    if (!lo && !hi) {
      z[j] = natural[j];
    } else if (lo && !hi) {
      z[j] = std::log(natural[j] - c.lo);
    } else if (!lo && hi) {
      z[j] = std::log(c.hi - natural[j]);
    } else {
      const double u = (natural[j] - c.lo) / (c.hi - c.lo);
      z[j] = std::log(u / (1.0 - u));
    }
  }
  return z;
}

VectorXd ParamTransform::to_natural(const VectorXd& internal) const {
  VectorXd nat(internal.size());
  for (Eigen::Index j = 0; j < internal.size(); ++j) {
    const Interval& c = coords_[j];
    const bool lo = std::isfinite(c.lo), hi = std::isfinite(c.hi);
    if (!lo && !hi) {
      nat[j] = internal[j];
    } else if (lo && !hi) {
      nat[j] = c.lo + std::exp(internal[j]);
    } else if (!lo && hi) {
      nat[j] = c.hi - std::exp(internal[j]);
    } else {
      nat[j] = c.lo + (c.hi - c.lo) * logistic(internal[j]);
    }
  }
  return nat;
}

VectorXd ParamTransform::dnatural(const VectorXd& internal) const {
  VectorXd d(internal.size());
  for (Eigen::Index j = 0; j < internal.size(); ++j) {
    const Interval& c = coords_[j];
    const bool lo = std::isfinite(c.lo), hi = std::isfinite(c.hi);
    if (!lo && !hi) {
      d[j] = 1.0;
    } else if (lo && !hi) {
      d[j] = std::exp(internal[j]);
    } else if (!lo && hi) {
      d[j] = -std::exp(internal[j]);
    } else {
      const double s = logistic(internal[j]);
      d[j] = (c.hi - c.lo) * s * (1.0 - s);
    }
  }
  return d;
}

namespace {

/// Mean empirical score as a function of the free coordinates in internal
/// (unconstrained) space; frozen coordinates stay at their template values.
class Objective {
 public:
  Objective(const ScoringRule& rule, const ParametricModel& model, const MatrixXd& data,
            VectorXd theta_template, std::vector<int> free_idx)
      : rule_(rule),
        model_(model),
        data_(data),
        theta_template_(std::move(theta_template)),
        free_idx_(std::move(free_idx)),
        transform_(free_domain(model.domain(), free_idx_)) {}

  static ParamDomain free_domain(const ParamDomain& full, const std::vector<int>& idx) {
    ParamDomain d;
    for (int j : idx) d.coords.push_back(full.coords[j]);
    return d;
  }

  const ParamTransform& transform() const { return transform_; }
  int free_dim() const { return static_cast<int>(free_idx_.size()); }

  VectorXd theta_of(const VectorXd& z) const {
    const VectorXd nat = transform_.to_natural(z);
    VectorXd theta = theta_template_;
    for (std::size_t k = 0; k < free_idx_.size(); ++k) theta[free_idx_[k]] = nat[k];
    return theta;
  }

  VectorXd z_of_theta(const VectorXd& theta) const {
    VectorXd nat(free_idx_.size());
    for (std::size_t k = 0; k < free_idx_.size(); ++k) nat[k] = theta[free_idx_[k]];
    return transform_.to_internal(nat);
  }

  double value(const VectorXd& z) const {
    const VectorXd theta = theta_of(z);
    if (!theta.allFinite() || !model_.domain().contains(theta)) return kInf;
    try {
      const double v = empirical_value(rule_, model_, data_, theta) / double(data_.rows());
      return std::isfinite(v) ? v : kInf;
    } catch (const ScoreRuleError&) {
      return kInf;
    }
  }

  /// Mean-score gradient over free coordinates, natural space.
  VectorXd natural_gradient(const VectorXd& z) const {
    const VectorXd theta = theta_of(z);
    const VectorXd g = empirical_gradient(rule_, model_, data_, theta) / double(data_.rows());
    VectorXd gf(free_idx_.size());
    for (std::size_t k = 0; k < free_idx_.size(); ++k) gf[k] = g[free_idx_[k]];
    return gf;
  }

  VectorXd internal_gradient(const VectorXd& z, const VectorXd& natural_grad) const {
    return natural_grad.cwiseProduct(transform_.dnatural(z));
  }

 private:
  const ScoringRule& rule_;
  const ParametricModel& model_;
  const MatrixXd& data_;
  VectorXd theta_template_;
  std::vector<int> free_idx_;
  ParamTransform transform_;
};

struct StartResult {
  VectorXd z;
  double f = kInf;
  double natural_grad_norm = kInf;
  bool converged = false;
  int iterations = 0;
};

/// One point of a line search: position, value, gradients.
struct LinePoint {
  double t = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative
  VectorXd gnat;
  VectorXd g;
};

StartResult minimize_from(const Objective& obj, const VectorXd& z0, const FitOptions& opt) {
  StartResult res;
  const int k = static_cast<int>(z0.size());
  VectorXd z = z0;
  double f = obj.value(z);
  if (!std::isfinite(f)) {
    throw DomainEscape("objective not finite at the starting point");
  }
  VectorXd gnat = obj.natural_gradient(z);
  VectorXd g = obj.internal_gradient(z, gnat);
  MatrixXd hinv = MatrixXd::Identity(k, k);
  bool first_update = true;

  constexpr double c1 = 1e-4;
  constexpr double c2 = 0.9;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    res.natural_grad_norm = gnat.lpNorm<Eigen::Infinity>();
    if (res.natural_grad_norm <= opt.grad_tol) {
      res.converged = true;
      break;
    }
    VectorXd d = -(hinv * g);
    double gd = g.dot(d);
    if (!(gd < 0.0)) {  // not a descent direction: reset the curvature model
      hinv.setIdentity();
      first_update = true;
      d = -g;
      gd = g.dot(d);
      if (!(gd < 0.0)) break;
    }

    // Strong Wolfe line search (bracket then zoom by bisection).  The
    // curvature condition keeps s.y > 0 so the BFGS update always applies.
    const auto eval_point = [&](double t) {
      LinePoint pt;
      pt.t = t;
      const VectorXd zt = z + t * d;
      pt.f = obj.value(zt);
      if (std::isfinite(pt.f)) {
        pt.gnat = obj.natural_gradient(zt);
        pt.g = obj.internal_gradient(zt, pt.gnat);
        pt.slope = pt.g.dot(d);
      }
      return pt;
    };
    const auto wolfe_ok = [&](const LinePoint& pt) {
      return pt.f <= f + c1 * pt.t * gd && std::abs(pt.slope) <= -c2 * gd;
    };

    LinePoint accepted;
    bool have_step = false;
    LinePoint lo;  // best sufficient-decrease point found so far
    lo.t = 0.0;
    lo.f = f;
    lo.slope = gd;
    LinePoint hi;
    bool bracketed = false;
    double t = 1.0;
    for (int probe = 0; probe < 20 && !bracketed; ++probe) {
      LinePoint pt = eval_point(t);
      if (!std::isfinite(pt.f) || pt.f > f + c1 * t * gd || (probe > 0 && pt.f >= lo.f)) {
        hi = pt;
        bracketed = true;
        break;
      }
      if (std::abs(pt.slope) <= -c2 * gd) {
        accepted = pt;
        have_step = true;
        break;
      }
      if (pt.slope >= 0.0) {
        hi = lo;
        lo = pt;
        bracketed = true;
        break;
      }
      lo = pt;
      t *= 2.0;
    }
    if (!have_step && bracketed) {
      for (int zoom = 0; zoom < 40; ++zoom) {
        const double tm = 0.5 * (lo.t + hi.t);
        LinePoint pt = eval_point(tm);
        if (!std::isfinite(pt.f) || pt.f > f + c1 * tm * gd || pt.f >= lo.f) {
          hi = pt;
        } else {
          if (wolfe_ok(pt)) {
            accepted = pt;
            have_step = true;
            break;
          }
          if (pt.slope * (hi.t - lo.t) >= 0.0) hi = lo;
          lo = pt;
        }
        if (std::abs(hi.t - lo.t) < 1e-14 * (1.0 + std::abs(lo.t))) break;
      }
    }
    if (!have_step && lo.t > 0.0 && lo.f < f) {
      accepted = lo;  // sufficient decrease without curvature: still progress
      have_step = true;
    }
    ++res.iterations;
    if (!have_step) break;

    const VectorXd s = accepted.t * d;
    const VectorXd y = accepted.g - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (first_update) {
        hinv = (sy / y.squaredNorm()) * MatrixXd::Identity(k, k);
        first_update = false;
      }
      const MatrixXd syt = s * y.transpose() / sy;
      hinv = (MatrixXd::Identity(k, k) - syt) * hinv *
                 (MatrixXd::Identity(k, k) - syt.transpose()) +
             s * s.transpose() / sy;
    }
    z += accepted.t * d;
    f = accepted.f;
    g = accepted.g;
    gnat = accepted.gnat;
  }

  res.z = z;
  res.f = f;
  return res;
}

/// Newton steps with a finite-difference Hessian; drives smooth problems to
/// machine precision so closed-form identities (MLE = mean, OLS) hold, and
/// rescues starts that stagnate just above the gradient tolerance.
void newton_polish(const Objective& obj, StartResult& res, const FitOptions& opt) {
  VectorXd z = res.z;
  VectorXd gnat = obj.natural_gradient(z);
  VectorXd g = obj.internal_gradient(z, gnat);
  for (int polish = 0; polish < 3; ++polish) {
    if (res.natural_grad_norm == 0.0) break;
    const MatrixXd hess = central_jacobian(
        [&](const VectorXd& zz) {
          return obj.internal_gradient(zz, obj.natural_gradient(zz));
        },
        z);
    const MatrixXd hsym = 0.5 * (hess + hess.transpose());
    const VectorXd step = hsym.fullPivLu().solve(-g);
    if (!step.allFinite()) break;
    const VectorXd zc = z + step;
    const double fc = obj.value(zc);
    if (!std::isfinite(fc)) break;
    const VectorXd gnat_c = obj.natural_gradient(zc);
    const double norm_c = gnat_c.lpNorm<Eigen::Infinity>();
    if (norm_c >= res.natural_grad_norm) break;
    z = zc;
    gnat = gnat_c;
    g = obj.internal_gradient(z, gnat);
    res.z = z;
    res.f = fc;
    res.natural_grad_norm = norm_c;
    res.converged = res.converged || norm_c <= opt.grad_tol;
  }
}

FitResult run_fit(const ScoringRule& rule, const ParametricModel& model, const MatrixXd& data,
                  const VectorXd& theta_template, const std::vector<int>& free_idx,
                  const VectorXd& init_theta, const FitOptions& opt,
                  const std::vector<bool>& fixed_mask) {
  Objective obj(rule, model, data, theta_template, free_idx);
  const VectorXd z0 = obj.z_of_theta(init_theta);

  Rng rng(opt.perturb_seed);
  StartResult best;
  bool have_best = false;
  int total_iterations = 0;
  for (int start = 0; start < std::max(1, opt.multistarts); ++start) {
    VectorXd z = z0;
    if (start > 0) {
      for (Eigen::Index j = 0; j < z.size(); ++j) {
        z[j] += opt.perturb_scale * (1.0 + std::abs(z0[j])) * rng.next_normal();
      }
    }
    StartResult r;
    try {
      r = minimize_from(obj, z, opt);
      if (!r.converged) newton_polish(obj, r, opt);
    } catch (const DomainEscape&) {
      if (start == 0) throw;  // the moment start must at least evaluate
      continue;
    }
    total_iterations += r.iterations;
    const bool better =
        !have_best || (r.converged && !best.converged) ||
        (r.converged == best.converged && r.f < best.f);
    if (better) {
      best = r;
      have_best = true;
    }
  }
  if (!have_best || !best.converged) {
    throw NoConvergence(rule.name() + " on " + model.name() + ": no multistart reached tol");
  }
  newton_polish(obj, best, opt);

  FitResult out;
  out.theta_hat = obj.theta_of(best.z);
  out.score_at_min = best.f * double(data.rows());
  out.converged = best.converged;
  out.iterations = total_iterations;
  out.grad_norm_at_min = best.natural_grad_norm;
  out.fixed_mask = fixed_mask;
  return out;
}

}  // namespace

FitResult fit(const ScoringRule& rule, const ParametricModel& model, const MatrixXd& data,
              const std::optional<VectorXd>& init, const FitOptions& options) {
  const int p = model.param_dim();
  if (data.rows() < p) throw ScoreRuleError("fit requires n >= p");
  if (data.cols() != model.obs_dim()) {
    throw ScoreRuleError("data has " + std::to_string(data.cols()) + " columns, model " +
                         model.name() + " expects " + std::to_string(model.obs_dim()));
  }
  VectorXd start;
  if (init) {
    if (!model.domain().contains(*init)) throw ThetaOutOfDomain("fit init");
    start = *init;
  } else {
    start = default_init(rule, model, data);
  }
  std::vector<int> free_idx(p);
  for (int j = 0; j < p; ++j) free_idx[j] = j;
  return run_fit(rule, model, data, start, free_idx, start, options, {});
}

FitResult fit_profile(const ScoringRule& rule, const ParametricModel& model,
                      const MatrixXd& data, const std::vector<int>& psi_indices,
                      const VectorXd& psi_values, const std::optional<VectorXd>& init,
                      const FitOptions& options) {
  const int p = model.param_dim();
  if (psi_indices.empty()) throw EmptyNuisance("psi index set is empty");
  if (static_cast<int>(psi_indices.size()) >= p) {
    throw EmptyNuisance("no nuisance block: psi covers all coordinates");
  }
  if (psi_values.size() != static_cast<Eigen::Index>(psi_indices.size())) {
    throw ScoreRuleError("psi_values length must match psi_indices");
  }
  std::vector<bool> fixed(p, false);
  const ParamDomain dom = model.domain();
  for (std::size_t k = 0; k < psi_indices.size(); ++k) {
    const int j = psi_indices[k];
    if (j < 0 || j >= p || fixed[j]) throw ScoreRuleError("bad psi index");
    if (!dom.coords[j].contains(psi_values[k])) throw ThetaOutOfDomain("psi value");
    fixed[j] = true;
  }
  VectorXd start = init ? *init : default_init(rule, model, data);
  for (std::size_t k = 0; k < psi_indices.size(); ++k) start[psi_indices[k]] = psi_values[k];
  if (!dom.contains(start)) throw ThetaOutOfDomain("fit_profile init");
  std::vector<int> free_idx;
  for (int j = 0; j < p; ++j) {
    if (!fixed[j]) free_idx.push_back(j);
  }
  return run_fit(rule, model, data, start, free_idx, start, options, fixed);
}

VectorXd default_init(const ScoringRule&, const ParametricModel& model, const MatrixXd& data) {
  if (data.rows() < 2) throw DegenerateData("need n >= 2 for a starting value");
  return model.init_estimate(data);
}

}  // namespace scorerule
