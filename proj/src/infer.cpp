#include "scorerule/infer.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "scorerule/numdiff.hpp"
#include "scorerule/rng.hpp"

namespace scorerule {

namespace {

constexpr std::uint64_t kMixtureSeed = 0x5C0DEULL;
constexpr int kMixtureDraws = 200000;

template <class Error>
MatrixXd inverse_or(const MatrixXd& m, const std::string& what) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[sv.size() - 1] <= 1e-12 * sv[0]) throw Error(what);
  return svd.solve(MatrixXd::Identity(m.rows(), m.cols()));
}

double chi_sq_survival(int df, double x) {
  const boost::math::chi_squared_distribution<double> law(df);
  return boost::math::cdf(boost::math::complement(law, std::max(x, 0.0)));
}

double chi_sq_quantile(int df, double prob) {
  const boost::math::chi_squared_distribution<double> law(df);
  return boost::math::quantile(law, prob);
}

void check_weights(const VectorXd& weights) {
  if (weights.size() == 0) throw NegativeWeight("empty weight vector");
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    if (!(weights[j] > 0.0)) {
      throw NegativeWeight("nonpositive mixture weight " + std::to_string(weights[j]));
    }
  }
}

std::vector<double> mixture_draws(const VectorXd& weights) {
  check_weights(weights);
  Rng rng(kMixtureSeed);
  std::vector<double> draws(kMixtureDraws);
  for (auto& d : draws) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
      const double z = rng.next_normal();
      acc += weights[j] * z * z;
    }
    d = acc;
  }
  return draws;
}

double clamp_ratio(double w, const std::string& who) {
  if (w < -1e-8) {
    throw NoConvergence(who + ": ratio statistic " + std::to_string(w) +
                        " is negative; the fit is not at the minimum");
  }
  return std::max(w, 0.0);
}

MatrixXd block(const MatrixXd& m, const std::vector<int>& idx) {
  MatrixXd out(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = m(idx[a], idx[b]);
  }
  return out;
}

}  // namespace

std::string to_string(StatisticName name) {
  switch (name) {
    case StatisticName::Wald: return "wald";
    case StatisticName::Score: return "score";
    case StatisticName::Ratio: return "ratio";
    case StatisticName::RatioAdj: return "ratio_adj";
    case StatisticName::RatioM1: return "ratio_m1";
    case StatisticName::RatioInv: return "ratio_inv";
    case StatisticName::ProfileWald: return "profile_wald";
    case StatisticName::ProfileScore: return "profile_score";
    case StatisticName::ProfileRatio: return "profile_ratio";
    case StatisticName::ProfileRatioM1: return "profile_ratio_m1";
    case StatisticName::ProfileRatioInv: return "profile_ratio_inv";
  }
  return "unknown";
}

double NullLaw::p_value(double stat) const {
  if (kind == Kind::ChiSq) return chi_sq_survival(df, stat);
  return mixture_chisq_survival(weights, stat);
}

double NullLaw::quantile(double prob) const {
  if (kind == Kind::ChiSq) return chi_sq_quantile(df, prob);
  return mixture_chisq_quantile(weights, prob);
}

SandwichEstimate estimate_sandwich(const ScoringRule& rule, const ParametricModel& model,
                                   const MatrixXd& data, const VectorXd& theta_hat) {
  SandwichEstimate sw;
  const MatrixXd grads = per_observation_gradients(rule, model, data, theta_hat);
  sw.J = grads.transpose() * grads;
  sw.K = central_jacobian(
      [&](const VectorXd& t) { return empirical_gradient(rule, model, data, t); },
      theta_hat);
  const MatrixXd kinv = inverse_or<SingularK>(sw.K, "K-hat near-singular");
  sw.V = kinv * sw.J * kinv.transpose();
  sw.G = inverse_or<SingularV>(sw.V, "V-hat near-singular");
  return sw;
}

TestReport wald_stat(const FitResult& fit, const SandwichEstimate& sandwich,
                     const VectorXd& theta0) {
  TestReport rep;
  rep.statistic_name = StatisticName::Wald;
  const VectorXd d = fit.theta_hat - theta0;
  const MatrixXd vinv = inverse_or<SingularV>(sandwich.V, "V-hat near-singular");
  rep.value = d.dot(vinv * d);
  rep.null_law = NullLaw{NullLaw::Kind::ChiSq, sandwich.p(), {}};
  rep.p_value = rep.null_law.p_value(rep.value);
  return rep;
}

TestReport score_stat(const ScoringRule& rule, const ParametricModel& model,
                      const MatrixXd& data, const VectorXd& theta0,
                      const SandwichEstimate& sandwich_at_theta0) {
  TestReport rep;
  rep.statistic_name = StatisticName::Score;
  const VectorXd s = empirical_gradient(rule, model, data, theta0);
  const MatrixXd jinv = inverse_or<SingularJ>(sandwich_at_theta0.J, "J-hat near-singular");
  rep.value = s.dot(jinv * s);
  rep.null_law = NullLaw{NullLaw::Kind::ChiSq, sandwich_at_theta0.p(), {}};
  rep.p_value = rep.null_law.p_value(rep.value);
  return rep;
}

double ratio_statistic_value(const ScoringRule& rule, const ParametricModel& model,
                             const MatrixXd& data, const VectorXd& theta0,
                             const FitResult& fit) {
  if (!fit.converged) throw NoConvergence("ratio statistic needs a converged fit");
  model.check_theta(theta0);
  return clamp_ratio(2.0 * (empirical_value(rule, model, data, theta0) - fit.score_at_min),
                     "ratio_statistic_value");
}

TestReport ratio_stat(const ScoringRule& rule, const ParametricModel& model,
                      const MatrixXd& data, const VectorXd& theta0, const FitResult& fit,
                      const SandwichEstimate* sandwich) {
  TestReport rep;
  rep.statistic_name = StatisticName::Ratio;
  rep.value = ratio_statistic_value(rule, model, data, theta0, fit);
  SandwichEstimate local;
  if (!sandwich) {
    local = estimate_sandwich(rule, model, data, fit.theta_hat);
    sandwich = &local;
  }
  rep.null_law = NullLaw{NullLaw::Kind::MixtureChiSq, sandwich->p(),
                         sandwich_eigenvalues(sandwich->J, sandwich->K)};
  rep.p_value = rep.null_law.p_value(rep.value);
  return rep;
}

TestReport ratio_adj_scalar(const TestReport& ratio_report, const SandwichEstimate& sandwich) {
  if (sandwich.p() != 1) throw NotScalarParam("ratio_adj_scalar requires p = 1");
  TestReport rep = ratio_report;
  rep.statistic_name = StatisticName::RatioAdj;
  const double mu1 = sandwich.J(0, 0) / sandwich.K(0, 0);
  if (!(mu1 > 0.0)) throw NegativeWeight("J/K is nonpositive");
  rep.value = ratio_report.value / mu1;
  rep.null_law = NullLaw{NullLaw::Kind::ChiSq, 1, {}};
  rep.p_value = rep.null_law.p_value(rep.value);
  return rep;
}

TestReport ratio_m1(const TestReport& ratio_report, const SandwichEstimate& sandwich) {
  TestReport rep = ratio_report;
  rep.statistic_name = StatisticName::RatioM1;
  const MatrixXd kinv = inverse_or<SingularK>(sandwich.K, "K-hat near-singular");
  const double mu_bar = (sandwich.J * kinv).trace() / double(sandwich.p());
  if (!(mu_bar > 0.0)) throw NegativeWeight("mean eigenvalue of J K^-1 is nonpositive");
  rep.value = ratio_report.value / mu_bar;
  rep.null_law = NullLaw{NullLaw::Kind::ChiSq, sandwich.p(), {}};
  rep.p_value = rep.null_law.p_value(rep.value);
  return rep;
}

TestReport ratio_inv(const ScoringRule& rule, const ParametricModel& model,
                     const MatrixXd& data, const VectorXd& theta0, const FitResult& fit,
                     const SandwichEstimate& sandwich) {
  TestReport rep;
  rep.statistic_name = StatisticName::RatioInv;
  rep.null_law = NullLaw{NullLaw::Kind::ChiSq, sandwich.p(), {}};
  const VectorXd s = empirical_gradient(rule, model, data, theta0);
  if (s.lpNorm<Eigen::Infinity>() < 1e-12) {
    // theta0 solves the estimating equation itself; A is undefined and the
    // unadjusted statistic is 0.
    rep.zero_score_flag = true;
    rep.value = 0.0;
    rep.p_value = 1.0;
    return rep;
  }
  const double w =
      clamp_ratio(2.0 * (empirical_value(rule, model, data, theta0) - fit.score_at_min),
                  "ratio_inv");
  const MatrixXd jinv = inverse_or<SingularJ>(sandwich.J, "J-hat near-singular");
  const MatrixXd kinv = inverse_or<SingularK>(sandwich.K, "K-hat near-singular");
  const double denom = s.dot(kinv * s);
  if (!(denom > 0.0)) throw NegativeWeight("s^T K^-1 s is nonpositive");
  rep.value = s.dot(jinv * s) / denom * w;
  rep.p_value = rep.null_law.p_value(rep.value);
  return rep;
}

std::vector<TestReport> profile_stats(const ScoringRule& rule, const ParametricModel& model,
                                      const MatrixXd& data, const std::vector<int>& psi_indices,
                                      const VectorXd& psi0) {
  const int p = model.param_dim();
  const int p0 = static_cast<int>(psi_indices.size());
  if (p0 >= p || p0 == 0) throw EmptyNuisance("profile needs 1 <= |psi| < p");

  const FitResult full = fit(rule, model, data);
  const FitResult constrained = fit_profile(rule, model, data, psi_indices, psi0);
  const SandwichEstimate sw_hat = estimate_sandwich(rule, model, data, full.theta_hat);
  const SandwichEstimate sw_con = estimate_sandwich(rule, model, data, constrained.theta_hat);

  // psi-blocks of the inverses, per the partition convention.
  const MatrixXd kinv_con = inverse_or<SingularK>(sw_con.K, "K-hat near-singular");
  const MatrixXd k_psipsi = block(kinv_con, psi_indices);
  const MatrixXd g_psipsi = block(sw_con.V, psi_indices);  // (G^-1)_psi,psi = V_psi,psi

  VectorXd s_psi(p0);
  const VectorXd s_full = empirical_gradient(rule, model, data, constrained.theta_hat);
  for (int a = 0; a < p0; ++a) s_psi[a] = s_full[psi_indices[a]];

  std::vector<TestReport> out;

  {
    TestReport rep;
    rep.statistic_name = StatisticName::ProfileWald;
    VectorXd d(p0);
    for (int a = 0; a < p0; ++a) d[a] = full.theta_hat[psi_indices[a]] - psi0[a];
    const MatrixXd vblock = block(sw_hat.V, psi_indices);
    rep.value = d.dot(inverse_or<SingularBlock>(vblock, "V psi-block near-singular") * d);
    rep.null_law = NullLaw{NullLaw::Kind::ChiSq, p0, {}};
    rep.p_value = rep.null_law.p_value(rep.value);
    out.push_back(rep);
  }

  const MatrixXd g_psipsi_inv =
      inverse_or<SingularBlock>(g_psipsi, "G psi-block near-singular");
  double w_sp = 0.0;
  {
    TestReport rep;
    rep.statistic_name = StatisticName::ProfileScore;
    w_sp = s_psi.dot(k_psipsi * g_psipsi_inv * k_psipsi * s_psi);
    rep.value = w_sp;
    rep.null_law = NullLaw{NullLaw::Kind::ChiSq, p0, {}};
    rep.p_value = rep.null_law.p_value(rep.value);
    out.push_back(rep);
  }

  const double w_p = clamp_ratio(2.0 * (constrained.score_at_min - full.score_at_min),
                                 "profile_ratio");
  // eigenvalues of (K^psipsi)^-1 G^psipsi, equal to those of G K^-1 in the
  // psi-block sense.
  const MatrixXd nu_mat =
      inverse_or<SingularBlock>(k_psipsi, "K psi-block near-singular") * g_psipsi;
  const VectorXd nu = sandwich_eigenvalues(g_psipsi, k_psipsi);
  {
    TestReport rep;
    rep.statistic_name = StatisticName::ProfileRatio;
    rep.value = w_p;
    rep.null_law = NullLaw{NullLaw::Kind::MixtureChiSq, p0, nu};
    rep.p_value = rep.null_law.p_value(rep.value);
    out.push_back(rep);
  }
  {
    TestReport rep;
    rep.statistic_name = StatisticName::ProfileRatioM1;
    const double nu_bar = nu_mat.trace() / double(p0);
    if (!(nu_bar > 0.0)) throw NegativeWeight("mean profile eigenvalue nonpositive");
    rep.value = w_p / nu_bar;
    rep.null_law = NullLaw{NullLaw::Kind::ChiSq, p0, {}};
    rep.p_value = rep.null_law.p_value(rep.value);
    out.push_back(rep);
  }
  {
    TestReport rep;
    rep.statistic_name = StatisticName::ProfileRatioInv;
    rep.null_law = NullLaw{NullLaw::Kind::ChiSq, p0, {}};
    if (s_psi.lpNorm<Eigen::Infinity>() < 1e-12) {
      rep.zero_score_flag = true;
      rep.value = 0.0;
      rep.p_value = 1.0;
    } else {
      const double denom = s_psi.dot(k_psipsi * s_psi);
      if (!(denom > 0.0)) throw NegativeWeight("s_psi^T K^psipsi s_psi is nonpositive");
      rep.value = w_sp / denom * w_p;
      rep.p_value = rep.null_law.p_value(rep.value);
    }
    out.push_back(rep);
  }
  return out;
}

VectorXd sandwich_eigenvalues(const MatrixXd& J, const MatrixXd& K) {
  const MatrixXd kinv = inverse_or<SingularK>(K, "K-hat near-singular");
  const MatrixXd m = J * kinv;
  const Eigen::EigenSolver<MatrixXd> solver(m);
  const auto& vals = solver.eigenvalues();
  const double radius = vals.cwiseAbs().maxCoeff();
  VectorXd real(vals.size());
  for (Eigen::Index j = 0; j < vals.size(); ++j) {
    if (std::abs(vals[j].imag()) > 1e-8 * std::max(radius, 1e-300)) {
      throw NegativeWeight("complex eigenvalue of J K^-1: imag " +
                           std::to_string(vals[j].imag()));
    }
    real[j] = vals[j].real();
  }
  std::sort(real.data(), real.data() + real.size(), std::greater<double>());
  return real;
}

double mixture_chisq_quantile(const VectorXd& weights, double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw ScoreRuleError("prob must be in (0,1)");
  std::vector<double> draws = mixture_draws(weights);
  std::sort(draws.begin(), draws.end());
  const double h = prob * (draws.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - double(lo);
  if (lo + 1 >= draws.size()) return draws.back();
  return draws[lo] * (1.0 - frac) + draws[lo + 1] * frac;
}

double mixture_chisq_survival(const VectorXd& weights, double x) {
  const std::vector<double> draws = mixture_draws(weights);
  std::size_t count = 0;
  for (double d : draws) {
    if (d > x) ++count;
  }
  return double(count) / double(draws.size());
}

}  // namespace scorerule
