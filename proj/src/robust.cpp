#include "scorerule/robust.hpp"

#include <algorithm>
#include <cmath>

#include "scorerule/numdiff.hpp"
#include "scorerule/quadrature.hpp"
#include "scorerule/rng.hpp"

namespace scorerule {

namespace {

constexpr std::uint64_t kProbeSeed = 0x1F5EEDULL;

/// Expanding one- or two-sided grid: decade segments with 4001 points each;
/// the innermost decade around `center` carries 10x the density.
struct ExpandingGrid {
  std::vector<double> points;
  std::vector<std::size_t> level_end;  // points index after each expansion
};

ExpandingGrid make_expanding_grid(double center, bool two_sided, double widen) {
  const double bounds[] = {10.0, 100.0, 1e3, 1e4, 1e6};
  ExpandingGrid g;
  double prev = 0.0;
  for (int level = 0; level < 5; ++level) {
    const double hi = bounds[level] * widen;
    const int pts = (level == 0) ? 40010 : 4001;
    for (int i = 0; i < pts; ++i) {
      const double t = prev + (hi - prev) * (double(i) + 1.0) / double(pts);
      if (two_sided) {
        g.points.push_back(center + t);
        g.points.push_back(center - t);
      } else {
        g.points.push_back(t);
      }
    }
    if (level == 0 && two_sided) g.points.push_back(center);
    prev = hi;
    g.level_end.push_back(g.points.size());
  }
  return g;
}

struct SupTrack {
  double sup = 0.0;
  double attained_at = 0.0;
  bool unbounded = false;
};

/// Applies the stabilization rule: unbounded when the running sup grew by
/// more than 1% across the last two expansions.
SupTrack sup_over_grid(const ExpandingGrid& grid,
                       const std::function<double(double)>& magnitude) {
  SupTrack track;
  std::vector<double> sups_by_level;
  std::size_t start = 0;
  for (std::size_t level = 0; level < grid.level_end.size(); ++level) {
    for (std::size_t i = start; i < grid.level_end[level]; ++i) {
      const double m = magnitude(grid.points[i]);
      if (m > track.sup) {
        track.sup = m;
        track.attained_at = grid.points[i];
      }
    }
    sups_by_level.push_back(track.sup);
    start = grid.level_end[level];
  }
  const std::size_t n = sups_by_level.size();
  const double before = sups_by_level[n - 3];
  track.unbounded = !(std::isfinite(track.sup)) ||
                    (before > 0.0 ? track.sup > 1.01 * before : track.sup > 0.0);
  return track;
}

}  // namespace

MatrixXd population_K(const ScoringRule& rule, const ParametricModel& model,
                      const VectorXd& theta) {
  const int p = model.param_dim();
  const auto jac_at = [&](const VectorXd& x) {
    return central_jacobian(
        [&](const VectorXd& t) { return rule.gradient(model, x, t); }, theta);
  };
  if (model.obs_dim() == 1) {
    const Interval sup = model.obs_support();
    MatrixXd k(p, p);
    VectorXd x(1);
    for (int a = 0; a < p; ++a) {
      for (int b = 0; b < p; ++b) {
        k(a, b) = integrate_expectation(
            [&](double y) {
              x[0] = y;
              return jac_at(x)(a, b) * model.density(x, theta);
            },
            sup.lo, sup.hi);
      }
    }
    return k;
  }
  const int draws = 20000;
  const MatrixXd data = model.sample(theta, draws, kProbeSeed);
  MatrixXd k = MatrixXd::Zero(p, p);
  for (int i = 0; i < draws; ++i) k += jac_at(data.row(i).transpose());
  return k / double(draws);
}

MatrixXd population_J(const ScoringRule& rule, const ParametricModel& model,
                      const VectorXd& theta, int draws) {
  const MatrixXd data = model.sample(theta, draws, kProbeSeed + 1);
  const MatrixXd grads = per_observation_gradients(rule, model, data, theta);
  return grads.transpose() * grads / double(draws);
}

InfluenceProfile influence_function(const ScoringRule& rule, const ParametricModel& model,
                                    const VectorXd& theta, const VectorXd& x_grid) {
  const MatrixXd k = population_K(rule, model, theta);
  Eigen::JacobiSVD<MatrixXd> svd(k, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[sv.size() - 1] <= 1e-12 * sv[0]) throw SingularK("population K near-singular");

  InfluenceProfile prof;
  prof.grid = x_grid;
  prof.values.resize(x_grid.size(), model.param_dim());
  const VectorXd shared = rule.theta_gradient(model, theta);
  VectorXd x(1);
  for (Eigen::Index i = 0; i < x_grid.size(); ++i) {
    x[0] = x_grid[i];
    prof.values.row(i) =
        svd.solve(rule.x_gradient(model, x, theta) + shared).transpose();
    const double norm = prof.values.row(i).lpNorm<Eigen::Infinity>();
    if (norm > prof.sup_norm) {
      prof.sup_norm = norm;
      prof.attained_at = x_grid[i];
    }
  }
  return prof;
}

InfluenceProfile influence_sup_probe(const ScoringRule& rule, const ParametricModel& model,
                                     const VectorXd& theta, double widen) {
  if (model.obs_dim() != 1) throw ScoreRuleError("influence probe needs scalar observations");
  const double center = theta[0];  // bundled scalar-observation models are location-led
  const ExpandingGrid grid = make_expanding_grid(center, true, widen);

  const MatrixXd k = population_K(rule, model, theta);
  Eigen::JacobiSVD<MatrixXd> svd(k, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[sv.size() - 1] <= 1e-12 * sv[0]) throw SingularK("population K near-singular");

  const VectorXd shared = rule.theta_gradient(model, theta);
  VectorXd x(1);
  const SupTrack track = sup_over_grid(grid, [&](double y) {
    x[0] = y;
    const VectorXd iv = svd.solve(rule.x_gradient(model, x, theta) + shared);
    return iv.lpNorm<Eigen::Infinity>();
  });

  InfluenceProfile prof;
  prof.grid = Eigen::Map<const VectorXd>(grid.points.data(), grid.points.size());
  prof.sup_norm = track.sup;
  prof.attained_at = track.attained_at;
  prof.unbounded_flag = track.unbounded;
  return prof;
}

namespace {

/// |gauge(f) * term| with the floating-point edges pinned down: a density
/// that underflowed to zero is outside the numeric support and contributes
/// nothing, while a gauge that overflows where the density is still positive
/// is divergence evidence.
double gauge_product_magnitude(const std::function<double(double)>& gauge, double f,
                               double term) {
  if (!(f > 0.0)) return 0.0;
  const double a = gauge(f);
  if (!std::isfinite(a)) return std::numeric_limits<double>::infinity();
  return std::abs(a * term);
}

}  // namespace

BoundednessVerdict check_bregman_location(const std::function<double(double)>& gauge,
                                          const CenterDensity& center,
                                          const std::vector<double>& u_grid) {
  const auto magnitude = [&](double u) {
    return gauge_product_magnitude(gauge, center.f(u), center.df(u));
  };
  BoundednessVerdict v;
  if (!u_grid.empty()) {
    for (double u : u_grid) {
      const double m = magnitude(u);
      if (m > v.sup) {
        v.sup = m;
        v.attained_at = u;
      }
    }
    v.bounded = std::isfinite(v.sup);
    return v;
  }
  const SupTrack track = sup_over_grid(make_expanding_grid(0.0, true, 1.0), magnitude);
  v.sup = track.sup;
  v.attained_at = track.attained_at;
  v.bounded = !track.unbounded;
  return v;
}

std::vector<BoundednessVerdict> check_bregman_scale(
    const std::function<double(double)>& gauge, const CenterDensity& center,
    const std::vector<double>& theta_grid, const std::vector<double>& x_grid) {
  std::vector<BoundednessVerdict> out;
  for (double theta : theta_grid) {
    const auto magnitude = [&](double x) {
      const double u = theta * x;
      const double f = center.f(u);
      return gauge_product_magnitude(gauge, theta * f, f + u * center.df(u));
    };
    BoundednessVerdict v;
    if (!x_grid.empty()) {
      for (double x : x_grid) {
        const double m = magnitude(x);
        if (m > v.sup) {
          v.sup = m;
          v.attained_at = x;
        }
      }
      v.bounded = std::isfinite(v.sup);
    } else {
      const SupTrack track = sup_over_grid(make_expanding_grid(0.0, false, 1.0), magnitude);
      v.sup = track.sup;
      v.attained_at = track.attained_at;
      v.bounded = !track.unbounded;
    }
    out.push_back(v);
  }
  return out;
}

BoundednessVerdict check_scale_center_bounds(const CenterDensity& center) {
  const SupTrack track =
      sup_over_grid(make_expanding_grid(0.0, false, 1.0), [&](double u) {
        return std::max(std::abs(center.f(u)), std::abs(u * center.df(u)));
      });
  BoundednessVerdict v;
  v.sup = track.sup;
  v.attained_at = track.attained_at;
  v.bounded = !track.unbounded;
  return v;
}

double density_bound_from_derivative(double deriv_bound) {
  if (deriv_bound < 0.0) throw ScoreRuleError("derivative bound must be >= 0");
  return 1.0 + 2.0 * deriv_bound;
}

DensityBoundProbe density_bound_probe(const CenterDensity& center) {
  DensityBoundProbe probe;
  const int pts = 200001;
  const double lo = std::isfinite(center.support.lo) ? center.support.lo + 1e-9 : -50.0;
  const double hi = std::isfinite(center.support.hi) ? center.support.hi : 50.0;
  for (int i = 0; i < pts; ++i) {
    const double u = lo + (hi - lo) * double(i) / double(pts - 1);
    probe.sup_f = std::max(probe.sup_f, center.f(u));
    probe.sup_abs_df = std::max(probe.sup_abs_df, std::abs(center.df(u)));
  }
  probe.bound = density_bound_from_derivative(probe.sup_abs_df);
  return probe;
}

}  // namespace scorerule
