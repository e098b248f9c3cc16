#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace scorerule {

/// Step size for central differences: cbrt(eps) * (1 + |t|).
inline double fd_step(double t) {
  static const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  return h0 * (1.0 + std::abs(t));
}

/// Central-difference gradient of a scalar function of a vector.
inline Eigen::VectorXd central_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& theta) {
  Eigen::VectorXd g(theta.size());
  Eigen::VectorXd t = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = fd_step(theta[j]);
    t[j] = theta[j] + h;
    const double fp = f(t);
    t[j] = theta[j] - h;
    const double fm = f(t);
    t[j] = theta[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian of a vector function; row i = d f_i / d theta^T.
inline Eigen::MatrixXd central_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& theta) {
  const Eigen::Index p = theta.size();
  Eigen::MatrixXd jac;
  Eigen::VectorXd t = theta;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = fd_step(theta[j]);
    t[j] = theta[j] + h;
    const Eigen::VectorXd fp = f(t);
    t[j] = theta[j] - h;
    const Eigen::VectorXd fm = f(t);
    t[j] = theta[j];
    if (jac.size() == 0) jac.resize(fp.size(), p);
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

/// First and second derivative of a scalar function of one coordinate by
/// nested central differences with the same step.
inline double central_d1(const std::function<double(double)>& f, double x) {
  const double h = fd_step(x);
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double central_d2(const std::function<double(double)>& f, double x) {
  const double h = fd_step(x);
  return (f(x + 2.0 * h) - 2.0 * f(x) + f(x - 2.0 * h)) / (4.0 * h * h);
}

}  // namespace scorerule
